//! Multiple-choice caption questions.
//!
//! File layout: a header line `{"format_version":1,"kind":"domadapt-questions","count":N}`
//! then one record per line: `{"ctx":[…],"choices":["w w w",…],"answer":k}`.
//! Choices are whitespace-separated words without framing symbols.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::dataset::Example;
use crate::data::vocab::Vocab;
use crate::error::{Error, Result};
use crate::math::Rng;

pub const QUESTIONS_FORMAT_VERSION: u64 = 1;
const QUESTIONS_KIND: &str = "domadapt-questions";

#[derive(Clone, Debug, PartialEq)]
pub struct Question {
    pub ctx: Vec<f64>,
    /// Each choice framed as `[BOS, …, EOS]`.
    pub choices: Vec<Vec<usize>>,
    pub answer: usize,
}

/// One question per example in `pool[..n]` (cycling if `n` exceeds the pool):
/// the true caption plus `n_choices − 1` distractor captions of the same
/// length drawn from other examples. The answer's slot is uniform.
pub fn make_questions(pool: &[Example], n: usize, n_choices: usize, rng: &mut Rng) -> Result<Vec<Question>> {
    if n_choices < 2 {
        return Err(Error::InvalidArgument("questions need at least 2 choices".into()));
    }
    if pool.is_empty() {
        return Err(Error::MissingDataset("no examples to build questions from".into()));
    }
    let mut out = Vec::with_capacity(n);
    for q in 0..n {
        let idx = q % pool.len();
        let truth = &pool[idx];
        let same_len: Vec<usize> = (0..pool.len())
            .filter(|&j| j != idx && pool[j].tokens.len() == truth.tokens.len() && pool[j].tokens != truth.tokens)
            .collect();
        if same_len.len() < n_choices - 1 {
            return Err(Error::InvalidArgument(format!(
                "example {idx} has only {} length-matched distractors",
                same_len.len()
            )));
        }
        let mut picks = same_len;
        rng.shuffle(&mut picks);
        let mut choices: Vec<Vec<usize>> = picks[..n_choices - 1].iter().map(|&j| pool[j].tokens.clone()).collect();
        let answer = rng.below(n_choices);
        choices.insert(answer, truth.tokens.clone());
        out.push(Question {
            ctx: truth.ctx.clone(),
            choices,
            answer,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u64,
    kind: String,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct Record {
    ctx: Vec<f64>,
    choices: Vec<String>,
    answer: usize,
}

pub fn save_questions(path: &Path, questions: &[Question], vocab: &Vocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = Header {
        format_version: QUESTIONS_FORMAT_VERSION,
        kind: QUESTIONS_KIND.into(),
        count: questions.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for q in questions {
        let rec = Record {
            ctx: q.ctx.clone(),
            choices: q.choices.iter().map(|c| vocab.decode(c)).collect(),
            answer: q.answer,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a question file. Errors name the 1-based record number
/// (the header is record 0).
pub fn load_questions(path: &Path, vocab: &Vocab) -> Result<Vec<Question>> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header: Header = match lines.next() {
        Some(line) => serde_json::from_str(&line?).map_err(|e| Error::format(path, 1, e.to_string()))?,
        None => return Err(Error::format(path, 1, "empty questions file")),
    };
    if header.format_version != QUESTIONS_FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: QUESTIONS_FORMAT_VERSION,
        });
    }
    if header.kind != QUESTIONS_KIND {
        return Err(Error::format(path, 1, format!("unexpected kind {:?}", header.kind)));
    }
    let mut out = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let k = out.len() + 1;
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::format(path, k + 1, format!("record {k}: {e}")))?;
        if rec.choices.len() < 2 {
            return Err(Error::format(path, k + 1, format!("record {k}: fewer than 2 choices")));
        }
        if rec.answer >= rec.choices.len() {
            return Err(Error::format(path, k + 1, format!("record {k}: answer {} out of range", rec.answer)));
        }
        out.push(Question {
            ctx: rec.ctx,
            choices: rec.choices.iter().map(|c| vocab.encode_sentence(c)).collect(),
            answer: rec.answer,
        });
    }
    if out.len() != header.count {
        let k = out.len() + 1;
        return Err(Error::format(
            path,
            k + 1,
            format!("record {k}: header declares {} records, found {}", header.count, out.len()),
        ));
    }
    Ok(out)
}
