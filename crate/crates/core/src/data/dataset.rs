//! Domain-tagged example collections and their JSONL files.
//!
//! A split file starts with a header object
//! `{"format_version":1,"kind":"domadapt-examples","domain":…,"split":…,"count":N}`
//! followed by `N` records `{"ctx":[…],"tokens":["<bos>",…,"<eos>"]}`, one per line.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::vocab::Vocab;
use crate::error::{Error, Result};
use crate::model::{validate_sequence, DomainTag};

pub const DATASET_FORMAT_VERSION: u64 = 1;
const EXAMPLES_KIND: &str = "domadapt-examples";

/// A context vector (standing in for image features) and its caption.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub ctx: Vec<f64>,
    /// `[BOS, …, EOS]`.
    pub tokens: Vec<usize>,
}

impl Example {
    pub fn predictions(&self) -> usize {
        self.tokens.len().saturating_sub(1)
    }

    /// The caption words without framing symbols.
    pub fn words(&self) -> &[usize] {
        let n = self.tokens.len();
        if n >= 2 {
            &self.tokens[1..n - 1]
        } else {
            &[]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainDataset {
    pub domain: DomainTag,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub vocab: Arc<Vocab>,
}

impl DomainDataset {
    pub fn empty(domain: DomainTag, vocab: Arc<Vocab>) -> Self {
        Self {
            domain,
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            vocab,
        }
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<Example> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    /// Context dimension shared by every example, if any exist.
    pub fn ctx_dim(&self) -> Result<Option<usize>> {
        let mut dim = None;
        for ex in self.train.iter().chain(&self.dev).chain(&self.test) {
            match dim {
                None => dim = Some(ex.ctx.len()),
                Some(d) if d != ex.ctx.len() => {
                    return Err(Error::dim(format!(
                        "{} dataset mixes context dimensions {d} and {}",
                        self.domain,
                        ex.ctx.len()
                    )))
                }
                _ => {}
            }
        }
        Ok(dim)
    }

    /// Same data with the training split cut to its first `n` examples.
    pub fn with_train_prefix(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.train.truncate(n);
        out
    }
}

pub fn split_file_name(domain: DomainTag, split: Split) -> String {
    format!("{}.{}.jsonl", domain.as_str(), split.as_str())
}

#[derive(Serialize, Deserialize)]
struct SplitHeader {
    format_version: u64,
    kind: String,
    domain: DomainTag,
    split: Split,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct ExampleRecord {
    ctx: Vec<f64>,
    tokens: Vec<String>,
}

pub fn save_split(path: &Path, domain: DomainTag, split: Split, examples: &[Example], vocab: &Vocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = SplitHeader {
        format_version: DATASET_FORMAT_VERSION,
        kind: EXAMPLES_KIND.to_string(),
        domain,
        split,
        count: examples.len(),
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for ex in examples {
        let rec = ExampleRecord {
            ctx: ex.ctx.clone(),
            tokens: ex
                .tokens
                .iter()
                .map(|&id| {
                    vocab
                        .token(id)
                        .map(str::to_string)
                        .ok_or(Error::TokenOutOfRange { id, size: vocab.len() })
                })
                .collect::<Result<_>>()?,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a split file. Unknown token strings map to `<unk>`.
pub fn load_split(path: &Path, vocab: &Vocab) -> Result<(DomainTag, Split, Vec<Example>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let header: SplitHeader = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?).map_err(|e| Error::format(path, 1, e.to_string()))?,
        None => return Err(Error::format(path, 1, "empty dataset file")),
    };
    if header.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            found: header.format_version,
            expected: DATASET_FORMAT_VERSION,
        });
    }
    if header.kind != EXAMPLES_KIND {
        return Err(Error::format(path, 1, format!("unexpected kind {:?}", header.kind)));
    }
    let mut examples = Vec::with_capacity(header.count);
    for (k, line) in lines {
        let lineno = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ExampleRecord = serde_json::from_str(&line).map_err(|e| Error::format(path, lineno, e.to_string()))?;
        let tokens: Vec<usize> = rec.tokens.iter().map(|t| vocab.id_or_unk(t)).collect();
        validate_sequence(&tokens, vocab.len()).map_err(|e| Error::format(path, lineno, e.to_string()))?;
        examples.push(Example { ctx: rec.ctx, tokens });
    }
    if examples.len() != header.count {
        return Err(Error::format(
            path,
            examples.len() + 2,
            format!(
                "header declares {} records but the file ends after {}",
                header.count,
                examples.len()
            ),
        ));
    }
    Ok((header.domain, header.split, examples))
}

/// Writes `<domain>.{train,dev,test}.jsonl` into `dir`.
pub fn save_dataset(ds: &DomainDataset, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    Split::ALL
        .iter()
        .map(|&split| {
            let path = dir.join(split_file_name(ds.domain, split));
            save_split(&path, ds.domain, split, ds.split(split), &ds.vocab)?;
            Ok(path)
        })
        .collect()
}

pub fn load_dataset(dir: &Path, domain: DomainTag, vocab: Arc<Vocab>) -> Result<DomainDataset> {
    let mut ds = DomainDataset::empty(domain, vocab.clone());
    for split in Split::ALL {
        let path = dir.join(split_file_name(domain, split));
        let (found_domain, found_split, examples) = load_split(&path, &vocab)?;
        if found_domain != domain || found_split != split {
            return Err(Error::format(
                &path,
                1,
                format!("file holds {found_domain}/{} data", found_split.as_str()),
            ));
        }
        *ds.split_mut(split) = examples;
    }
    ds.ctx_dim()?;
    Ok(ds)
}
