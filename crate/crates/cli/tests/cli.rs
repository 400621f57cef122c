use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::io::Write;

use domadapt::data::{load_checkpoint, load_split, Vocab};
use domadapt::decode::greedy;
use domadapt::model::DomainTag;

const SMALL: &[&str] = &[
    "source_train=80",
    "target_train=40",
    "source_dev=20",
    "target_dev=20",
    "source_test=20",
    "target_test=200",
];
const FAST: &[&str] = &["cell_size=8", "max_epochs=3", "batch_size=8"];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_domadapt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn with_sets<'a>(mut args: Vec<&'a str>, sets: &[&'a str]) -> Vec<&'a str> {
    for s in sets {
        args.push("--set");
        args.push(s);
    }
    args
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut sets = SMALL.to_vec();
    sets.extend_from_slice(extra);
    let o = run(&with_sets(vec!["synth", "--out", data.to_str().unwrap(), "--questions", "4"], &sets));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    data
}

fn train(data: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut sets = FAST.to_vec();
    sets.extend_from_slice(extra);
    run(&with_sets(vec!["train", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap()], &sets))
}

#[test]
fn synth_writes_corpus_and_reports_top_tokens() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = run(&with_sets(vec!["synth", "--out", data.to_str().unwrap()], SMALL));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["vocab.txt", "spec.cfg", "source.train.jsonl", "target.test.jsonl", "source.dev.jsonl"] {
        assert!(data.join(f).exists(), "{f}");
    }
    assert!(!data.join("questions.jsonl").exists());
    let text = stdout(&o);
    assert!(text.contains("train     80") && text.contains("train     40"), "{text}");
    let ranks = text.lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count();
    assert_eq!(ranks, 20, "{text}");
}

#[test]
fn synth_warns_on_empty_target_train() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut sets = SMALL.to_vec();
    sets.push("target_train=0");
    let o = run(&with_sets(vec!["synth", "--out", data.to_str().unwrap()], &sets));
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("target training split is empty"), "{}", stderr(&o));
}

#[test]
fn train_writes_metrics_checkpoint_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    let o = train(&data, &out, &["strategy=proposed"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(header.contains(&"bound_gap_mean"), "{header:?}");
    let gap = header.iter().position(|h| *h == "bound_gap_mean").unwrap();
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert_eq!(r.len(), header.len());
        let g: f64 = r[gap].parse().unwrap();
        assert!(g >= 0.0, "bound gap {g}");
    }
    assert!(out.join("checkpoint.json").exists());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "completed");
    assert_eq!(manifest["config"]["strategy"], "proposed");
    assert_eq!(manifest["config"]["cell_size"], 8);
}

#[test]
fn manifest_rerun_reproduces_metrics_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let first = dir.path().join("a");
    assert_eq!(code(&train(&data, &first, &["strategy=dual", "seed=5"])), 0);
    let second = dir.path().join("b");
    let o = run(&[
        "train",
        "--manifest",
        first.join("manifest.json").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read(first.join("metrics.csv")).unwrap(), fs::read(second.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(first.join("checkpoint.json")).unwrap(), fs::read(second.join("checkpoint.json")).unwrap());
}

#[test]
fn compare_table_matches_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("cmp");
    let mut args = vec!["compare", "--data", data.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seeds", "1"];
    args = with_sets(args, FAST);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next().unwrap(), "strategy,B1,B2,B3,B4,PPL");
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    assert_eq!(rows.len(), 6);
    let labels: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(labels, ["SrcOnly", "TgtOnly", "All", "FineTune", "Dual", "Proposed"]);
    let text = fs::read_to_string(out.join("table.txt")).unwrap();
    let head: Vec<&str> = text.lines().next().unwrap().split_whitespace().collect();
    assert_eq!(head, ["B1", "B2", "B3", "B4", "PPL"]);
    assert_eq!(fs::read_to_string(out.join("runs.csv")).unwrap().lines().count(), 7);

    let run_dir = dir.path().join("proposed");
    assert_eq!(code(&train(&data, &run_dir, &["strategy=proposed"])), 0);
    let ck = run_dir.join("checkpoint.json");
    let e = run(&["eval", "--checkpoint", ck.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(code(&e), 0, "{}", stderr(&e));
    let eval_out = stdout(&e);
    let vals: Vec<f64> = eval_out.lines().nth(1).unwrap().split(',').take(5).map(|v| v.parse().unwrap()).collect();
    let table_vals: Vec<f64> = rows[5][1..].iter().map(|v| v.parse().unwrap()).collect();
    for (a, b) in vals.iter().zip(&table_vals) {
        assert!((a - b).abs() <= 1e-6 * (1.0 + a.abs()), "{vals:?} vs {table_vals:?}");
    }
}

#[test]
fn generate_width_one_is_greedy_and_empty_input_is_ok() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    assert_eq!(code(&train(&data, &out, &["strategy=tgt_only"])), 0);
    let ck_path = out.join("checkpoint.json");
    let test_file = data.join("target.test.jsonl");

    let o = run(&[
        "generate",
        "--checkpoint",
        ck_path.to_str().unwrap(),
        "--input",
        test_file.to_str().unwrap(),
        "--width",
        "1",
        "--max-len",
        "12",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_owned).collect();

    let vocab = Vocab::load(&data.join("vocab.txt")).unwrap();
    let ck = load_checkpoint::<f64>(&ck_path, Some(&vocab)).unwrap();
    let (_, _, examples) = load_split(&test_file, &vocab).unwrap();
    assert_eq!(lines.len(), examples.len());
    for (ex, line) in examples.iter().zip(&lines) {
        let h = greedy(&ck.params, &ex.ctx, DomainTag::Target, 12).unwrap();
        assert_eq!(&vocab.decode(h.words()), line);
    }

    let mut child = bin()
        .args(["generate", "--checkpoint", ck_path.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
}

#[test]
fn select_on_single_question_is_all_or_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    assert_eq!(code(&train(&data, &out, &["strategy=tgt_only"])), 0);
    let all = fs::read_to_string(data.join("questions.jsonl")).unwrap();
    let one: String = all.lines().take(2).map(|l| format!("{l}\n")).collect();
    let one = one.replace("\"count\":4", "\"count\":1");
    let qpath = dir.path().join("one.jsonl");
    fs::write(&qpath, one).unwrap();
    let o = run(&[
        "select",
        "--checkpoint",
        out.join("checkpoint.json").to_str().unwrap(),
        "--questions",
        qpath.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let last = stdout(&o).lines().last().unwrap().to_owned();
    assert!(last == "accuracy 0.00% (0/1)" || last == "accuracy 100.00% (1/1)", "{last}");
}

#[test]
fn malformed_record_exits_2_with_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let path = data.join("target.train.jsonl");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[3] = "{\"ctx\": [1.0, oops]}";
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let o = train(&data, &dir.path().join("run"), &[]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("target.train.jsonl") && err.contains(":4"), "{err}");
}

#[test]
fn vocab_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    let out = dir.path().join("run");
    assert_eq!(code(&train(&data, &out, &["strategy=tgt_only"])), 0);
    let other = synth(&dir.path().join("other"), &["shared_vocab=30"]);
    let ck = out.join("checkpoint.json");
    let o = run(&["eval", "--checkpoint", ck.to_str().unwrap(), "--data", other.to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run(&[
        "generate",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--vocab",
        other.join("vocab.txt").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn exit_codes() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["nope"])), 1);
    assert_eq!(code(&run(&["train", "--out", "x"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &[]);
    assert_eq!(code(&train(&data, &dir.path().join("a"), &["bogus=1"])), 1);
    assert_eq!(code(&train(&data, &dir.path().join("b"), &["strategy=sideways"])), 1);
    assert_eq!(code(&run(&["eval", "--checkpoint", "/nonexistent/ck.json", "--data", data.to_str().unwrap()])), 2);

    let out = dir.path().join("nan");
    let o = train(&data, &out, &["init_scale=1e300"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "failed");
    assert_eq!(manifest["failure"]["exit_code"], 3);
    assert_eq!(manifest["failure"]["epoch"], 1);
    assert!(!out.join("checkpoint.json").exists());
}
