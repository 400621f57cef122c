//! `domadapt`: synthesize two-domain caption data, train the six adaptation
//! strategies, compare them, and use trained checkpoints.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error, 3 numeric
//! failure (non-finite loss).

mod manifest;

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use domadapt::config::{apply, read_kv, render, Assignment};
use domadapt::data::{
    load_checkpoint, load_questions, load_split, make_questions, save_checkpoint, save_dataset, save_questions,
    split_file_name, synth_generate, top_tokens, Checkpoint, DomainDataset, Split, SynthSpec, Vocab,
};
use domadapt::decode::{beam_search, select_answer, DEFAULT_BEAM_WIDTH, DEFAULT_MAX_LEN};
use domadapt::experiment::{compare_with, sweep_target_sizes, CompareConfig, RunResult};
use domadapt::math::Rng;
use domadapt::metrics::{evaluate, EVAL_CSV_HEADER};
use domadapt::model::DomainTag;
use domadapt::scalar::cast_slice;
use domadapt::train::{run_strategy_with, EpochRecord, Strategy, TrainConfig, METRICS_CSV_HEADER};
use domadapt::Error;
use manifest::{Failure, RunManifest, Status, CHECKPOINT_FILE, MANIFEST_FILE, METRICS_FILE};

const VOCAB_FILE: &str = "vocab.txt";
const SPEC_FILE: &str = "spec.cfg";
const QUESTIONS_FILE: &str = "questions.jsonl";

#[derive(Parser)]
#[command(name = "domadapt", version, about = "Domain-adaptive LSTM caption generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target caption corpus.
    Synth(SynthArgs),
    /// Train one strategy; writes manifest.json, metrics.csv and checkpoint.json.
    Train(TrainArgs),
    /// Train and evaluate several strategies over several seeds.
    Compare(CompareArgs),
    /// Caption context vectors with a trained checkpoint.
    Generate(GenerateArgs),
    /// Answer multiple-choice caption questions with a trained checkpoint.
    Select(SelectArgs),
    /// BLEU-1..4 and perplexity of a checkpoint on a dataset split.
    Eval(EvalArgs),
}

#[derive(Args)]
struct Overrides {
    /// Key-value config file (`key = value` per line).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set cell_size=64`; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve<T: serde::Serialize + serde::de::DeserializeOwned>(&self, base: T) -> domadapt::Result<T> {
        let mut assignments = match &self.config {
            Some(p) => read_kv(p)?,
            None => Vec::new(),
        };
        for s in &self.set {
            assignments.push(Assignment::parse(s)?);
        }
        apply(&base, &assignments)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for vocab.txt, the six split files and spec.cfg.
    #[arg(long)]
    out: PathBuf,
    /// Also write N four-choice questions built from the target test split.
    #[arg(long, value_name = "N")]
    questions: Option<usize>,
    #[command(flatten)]
    spec: Overrides,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory written by `synth` (or in the same layout).
    #[arg(long, required_unless_present = "manifest")]
    data: Option<PathBuf>,
    /// Output directory; defaults to the manifest's when rerunning.
    #[arg(long, required_unless_present = "manifest")]
    out: Option<PathBuf>,
    /// Rerun a previous run exactly from its manifest.json.
    #[arg(long, conflicts_with_all = ["data", "config", "set"])]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    train: Overrides,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of seeds, counting up from the configured seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Comma-separated strategies, or `all`.
    #[arg(long, default_value = "all")]
    strategies: String,
    /// Run independent (strategy, seed) pairs in parallel.
    #[arg(long)]
    parallel: bool,
    /// Comma-separated target training sizes; repeats the comparison on prefixes of the target train split.
    #[arg(long, value_delimiter = ',')]
    target_sizes: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    width: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    #[command(flatten)]
    train: Overrides,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary the inputs were built with; must match the checkpoint's.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Output head to use.
    #[arg(long, default_value = "target")]
    domain: DomainTag,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// One context per line: a JSON array, or a dataset record with a `ctx` field. Defaults to stdin.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    width: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Args)]
struct SelectArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    questions: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Dataset domain to evaluate on; also selects the output head.
    #[arg(long, default_value = "target")]
    domain: DomainTag,
    /// train, dev or test.
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    width: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Print the report as JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

fn parse_split(s: &str) -> Result<Split, String> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| format!("unknown split {s:?} (expected train, dev or test)"))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numeric() => 3,
        Error::InvalidArgument(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
        Command::Generate(a) => generate(a),
        Command::Select(a) => select(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn synth(a: SynthArgs) -> domadapt::Result<()> {
    let spec: SynthSpec = a.spec.resolve(SynthSpec::default())?;
    let (source, target) = synth_generate(&spec)?;
    let questions = match a.questions {
        Some(n) => Some(make_questions(&target.test, n, 4, &mut Rng::derive(spec.seed, 0x9_0e57))?),
        None => None,
    };
    fs::create_dir_all(&a.out)?;
    source.vocab.save(&a.out.join(VOCAB_FILE))?;
    save_dataset(&source, &a.out)?;
    save_dataset(&target, &a.out)?;
    fs::write(a.out.join(SPEC_FILE), render(&spec)?)?;
    if let Some(qs) = questions {
        save_questions(&a.out.join(QUESTIONS_FILE), &qs, &target.vocab)?;
    }
    for ds in [&source, &target] {
        if ds.train.is_empty() {
            eprintln!("warning: {} training split is empty", ds.domain);
        }
    }
    let mut out = io::stdout().lock();
    writeln!(out, "vocabulary: {} tokens", source.vocab.len())?;
    for ds in [&source, &target] {
        writeln!(
            out,
            "{:<6} train {:>6}  dev {:>5}  test {:>5}",
            ds.domain,
            ds.train.len(),
            ds.dev.len(),
            ds.test.len()
        )?;
    }
    let v = source.vocab.len();
    let (ts, tt) = (top_tokens(&source.train, v, 20), top_tokens(&target.train, v, 20));
    writeln!(out, "\n{:>4}  {:<18}{:<18}", "rank", "source", "target")?;
    for k in 0..ts.len().max(tt.len()) {
        let cell = |t: &[(usize, usize)]| {
            t.get(k)
                .map(|&(id, c)| format!("{} ({c})", source.vocab.token(id).unwrap_or("?")))
                .unwrap_or_default()
        };
        writeln!(out, "{:>4}  {:<18}{:<18}", k + 1, cell(&ts), cell(&tt))?;
    }
    Ok(())
}

/// Loads `vocab.txt` and both domains from a dataset directory. A domain whose
/// files are all absent loads as empty; the training strategy decides whether
/// that is acceptable.
fn load_data(dir: &Path) -> domadapt::Result<(DomainDataset, DomainDataset, Vec<PathBuf>)> {
    let vocab = Arc::new(Vocab::load(&dir.join(VOCAB_FILE))?);
    let mut files = vec![dir.join(VOCAB_FILE)];
    let mut load = |domain: DomainTag| -> domadapt::Result<DomainDataset> {
        let mut ds = DomainDataset::empty(domain, vocab.clone());
        for split in Split::ALL {
            let path = dir.join(split_file_name(domain, split));
            if !path.exists() {
                continue;
            }
            let (d, s, examples) = load_split(&path, &vocab)?;
            if d != domain || s != split {
                return Err(Error::Format {
                    path,
                    line: 1,
                    msg: format!("file holds {d}/{} data", s.as_str()),
                });
            }
            match split {
                Split::Train => ds.train = examples,
                Split::Dev => ds.dev = examples,
                Split::Test => ds.test = examples,
            }
            files.push(path);
        }
        ds.ctx_dim()?;
        Ok(ds)
    };
    let source = load(DomainTag::Source)?;
    let target = load(DomainTag::Target)?;
    Ok((source, target, files))
}

fn train(a: TrainArgs) -> domadapt::Result<()> {
    let (config_path, overrides, config, data_dir, out) = match &a.manifest {
        Some(path) => {
            let m = RunManifest::load(path)?;
            let out = a.out.clone().unwrap_or(m.output_dir.clone());
            (m.config_path, m.overrides, m.config, m.data_dir, out)
        }
        None => {
            let config: TrainConfig = a.train.resolve(TrainConfig::default())?;
            (a.train.config.clone(), a.train.set.clone(), config, a.data.clone().unwrap(), a.out.clone().unwrap())
        }
    };
    config.validate()?;
    let (source, target, files) = load_data(&data_dir)?;
    fs::create_dir_all(&out)?;
    let mut manifest =
        RunManifest::new(config_path, overrides, config.clone(), data_dir, files, source.vocab.hash(), out.clone());
    manifest.save(&out)?;

    let mut csv = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    writeln!(csv, "{METRICS_CSV_HEADER}")?;
    let mut write_error: Option<io::Error> = None;
    let mut observer = |r: &EpochRecord| {
        eprintln!(
            "epoch {:>3} [{}] dev {}",
            r.epoch,
            r.phase,
            r.dev_loss.map(|d| format!("{d:.4}")).unwrap_or_else(|| "-".into())
        );
        if let Err(e) = writeln!(csv, "{}", domadapt::train::RunMetrics::csv_row(r)).and_then(|_| csv.flush()) {
            write_error.get_or_insert(e);
        }
    };
    let result = run_strategy_with::<f64>(&config, &source, &target, &mut observer);
    drop(csv);
    if let Some(e) = write_error {
        return Err(e.into());
    }
    manifest.finished_at = Some(manifest::unix_now());
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            let (epoch, batch) = match e {
                Error::NonFiniteLoss { epoch, batch } => (Some(epoch), Some(batch)),
                _ => (None, None),
            };
            manifest.status = Status::Failed;
            manifest.failure = Some(Failure {
                message: e.to_string(),
                exit_code: exit_code(&e),
                epoch,
                batch,
            });
            manifest.save(&out)?;
            return Err(e);
        }
    };
    fs::write(out.join(METRICS_FILE), outcome.metrics.to_csv())?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &outcome.params, &config, &outcome.metrics, &source.vocab)?;
    manifest.status = Status::Completed;
    manifest.save(&out)?;
    println!(
        "{}: {} epochs, best epoch {}; wrote {}, {}, {}",
        config.strategy.label(),
        outcome.metrics.epochs.len(),
        outcome.metrics.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "-".into()),
        out.join(MANIFEST_FILE).display(),
        out.join(METRICS_FILE).display(),
        out.join(CHECKPOINT_FILE).display()
    );
    Ok(())
}

fn parse_strategies(s: &str) -> domadapt::Result<Vec<Strategy>> {
    if s.trim() == "all" {
        return Ok(Strategy::ALL.to_vec());
    }
    s.split(',').map(|x| x.trim().parse()).collect()
}

fn compare(a: CompareArgs) -> domadapt::Result<()> {
    let base: TrainConfig = a.train.resolve(TrainConfig::default())?;
    base.validate()?;
    if a.seeds == 0 {
        return Err(Error::InvalidArgument("--seeds must be at least 1".into()));
    }
    let (source, target, _) = load_data(&a.data)?;
    let mut cfg = CompareConfig::new(base.clone(), (0..a.seeds).map(|k| base.seed + k).collect());
    cfg.strategies = parse_strategies(&a.strategies)?;
    cfg.parallel = a.parallel;
    cfg.beam_width = a.width;
    cfg.max_len = a.max_len;
    fs::create_dir_all(a.out.join("metrics"))?;
    let progress = |r: &RunResult| {
        eprintln!(
            "{:<9} seed {:>3}: ppl {:.3}, BLEU-4 {:.4}, {} epochs",
            r.strategy.label(),
            r.seed,
            r.report.perplexity,
            r.report.bleu4,
            r.metrics.epochs.len()
        );
    };
    if a.target_sizes.is_empty() {
        let cmp = compare_with(&cfg, &source, &target, &progress)?;
        for r in &cmp.runs {
            fs::write(a.out.join("metrics").join(format!("{}_seed{}.csv", r.strategy, r.seed)), r.metrics.to_csv())?;
        }
        fs::write(a.out.join("runs.csv"), cmp.runs_csv())?;
        fs::write(a.out.join("table.csv"), cmp.table_csv())?;
        fs::write(a.out.join("table.txt"), cmp.table_text())?;
        print!("{}", cmp.table_text());
    } else {
        let sweep = sweep_target_sizes(&cfg, &source, &target, &a.target_sizes)?;
        fs::write(a.out.join("sweep.csv"), sweep.csv())?;
        for (n, cmp) in &sweep.points {
            for r in &cmp.runs {
                let name = format!("{}_seed{}_n{n}.csv", r.strategy, r.seed);
                fs::write(a.out.join("metrics").join(name), r.metrics.to_csv())?;
            }
            fs::write(a.out.join(format!("table_n{n}.csv")), cmp.table_csv())?;
            println!("target train = {n}");
            print!("{}", cmp.table_text());
        }
    }
    Ok(())
}

fn load_model(m: &ModelArgs) -> domadapt::Result<Checkpoint<f64>> {
    let expected = m.vocab.as_deref().map(Vocab::load).transpose()?;
    load_checkpoint(&m.checkpoint, expected.as_ref())
}

/// `None` for a dataset file's header line, so split files can be piped in as is.
fn parse_ctx(line: &str, path: &Path, lineno: usize, dim: usize) -> domadapt::Result<Option<Vec<f64>>> {
    let bad = |msg: String| Error::Format {
        path: path.into(),
        line: lineno,
        msg,
    };
    let value: serde_json::Value = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
    let arr = match &value {
        serde_json::Value::Object(o) if lineno == 1 && o.contains_key("format_version") => return Ok(None),
        serde_json::Value::Object(o) => o.get("ctx").cloned().ok_or_else(|| bad("record has no ctx field".into()))?,
        other => other.clone(),
    };
    let ctx: Vec<f64> = serde_json::from_value(arr).map_err(|e| bad(format!("ctx: {e}")))?;
    if ctx.len() != dim {
        return Err(bad(format!("context has {} values, model expects {dim}", ctx.len())));
    }
    Ok(Some(ctx))
}

fn generate(a: GenerateArgs) -> domadapt::Result<()> {
    let ck = load_model(&a.model)?;
    let vocab = ck.vocab()?;
    let (reader, name): (Box<dyn BufRead>, PathBuf) = match &a.input {
        Some(p) if p.as_os_str() != "-" => (Box::new(BufReader::new(File::open(p)?)), p.clone()),
        _ => (Box::new(io::stdin().lock()), PathBuf::from("<stdin>")),
    };
    let mut out = BufWriter::new(io::stdout().lock());
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(ctx) = parse_ctx(&line, &name, k + 1, ck.params.ctx_dim())? else {
            continue;
        };
        let hyp = beam_search(&ck.params, &cast_slice(&ctx), a.model.domain, a.width, a.max_len)?;
        writeln!(out, "{}", vocab.decode(hyp.words()))?;
    }
    out.flush()?;
    Ok(())
}

fn select(a: SelectArgs) -> domadapt::Result<()> {
    let ck = load_model(&a.model)?;
    let vocab = ck.vocab()?;
    let questions = load_questions(&a.questions, &vocab)?;
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(out, "question\tpick\tanswer\tcorrect")?;
    let mut correct = 0;
    for (k, q) in questions.iter().enumerate() {
        if q.ctx.len() != ck.params.ctx_dim() {
            return Err(Error::Format {
                path: a.questions.clone(),
                line: k + 2,
                msg: format!("record {k}: context has {} values, model expects {}", q.ctx.len(), ck.params.ctx_dim()),
            });
        }
        let pick = select_answer(&ck.params, &q.ctx, &q.choices, a.model.domain)?;
        let ok = pick == q.answer;
        correct += usize::from(ok);
        writeln!(out, "{k}\t{pick}\t{}\t{}", q.answer, u8::from(ok))?;
    }
    let pct = if questions.is_empty() { 0.0 } else { 100.0 * correct as f64 / questions.len() as f64 };
    writeln!(out, "accuracy {pct:.2}% ({correct}/{})", questions.len())?;
    out.flush()?;
    Ok(())
}

fn eval(a: EvalArgs) -> domadapt::Result<()> {
    let vocab = Vocab::load(&a.data.join(VOCAB_FILE))?;
    let ck = load_checkpoint::<f64>(&a.checkpoint, Some(&vocab))?;
    let path = a.data.join(split_file_name(a.domain, a.split));
    let (_, _, examples) = load_split(&path, &vocab)?;
    if let Some(ex) = examples.iter().find(|e| e.ctx.len() != ck.params.ctx_dim()) {
        return Err(Error::Format {
            path,
            line: 0,
            msg: format!("context has {} values, model expects {}", ex.ctx.len(), ck.params.ctx_dim()),
        });
    }
    let report = evaluate(&ck.params, &examples, a.domain, a.width, a.max_len)?;
    if a.json {
        println!("{}", report.to_json());
    } else {
        println!("{EVAL_CSV_HEADER}\n{}", report.csv_row());
    }
    Ok(())
}
