use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub const VOCAB_FORMAT_VERSION: u64 = 1;
const VOCAB_MAGIC: &str = "#domadapt-vocab";

/// Token ↔ id bijection. Ids 0–3 are always `<pad>`, `<bos>`, `<eos>`, `<unk>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        let tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self { tokens, index }
    }

    /// Builds a vocabulary from non-reserved tokens, in order.
    pub fn from_tokens<I, T>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t.into())?;
        }
        Ok(v)
    }

    pub fn insert(&mut self, token: String) -> Result<usize> {
        if token.is_empty() || token.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid token {token:?}")));
        }
        if self.index.contains_key(&token) {
            return Err(Error::InvalidArgument(format!("duplicate token {token:?}")));
        }
        let id = self.tokens.len();
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when only the reserved symbols are present.
    pub fn is_empty(&self) -> bool {
        self.tokens.len() == RESERVED.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Words of a whitespace-tokenized sentence, framed as `[BOS, …, EOS]`.
    pub fn encode_sentence(&self, sentence: &str) -> Vec<usize> {
        let mut ids = vec![BOS];
        ids.extend(sentence.split_whitespace().map(|w| self.id_or_unk(w)));
        ids.push(EOS);
        ids
    }

    /// Space-joined words with reserved framing/padding symbols removed.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&id| id != PAD && id != BOS && id != EOS)
            .map(|&id| self.token(id).unwrap_or(RESERVED[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Hex SHA-256 over the ordered token list.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn header() -> String {
        format!(
            "{VOCAB_MAGIC} format_version={VOCAB_FORMAT_VERSION} reserved={}",
            RESERVED.join(",")
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "{}", Self::header())?;
        for t in &self.tokens[RESERVED.len()..] {
            writeln!(out, "{t}")?;
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(path, 1, "empty vocabulary file"))?;
        Self::check_header(path, header)?;
        let mut v = Self::new();
        for (k, line) in lines.enumerate() {
            v.insert(line.to_string())
                .map_err(|e| Error::format(path, k + 2, e.to_string()))?;
        }
        Ok(v)
    }

    fn check_header(path: &Path, header: &str) -> Result<()> {
        let mut parts = header.split_whitespace();
        if parts.next() != Some(VOCAB_MAGIC) {
            return Err(Error::format(path, 1, "missing vocabulary header"));
        }
        for part in parts {
            match part.split_once('=') {
                Some(("format_version", v)) => {
                    let found: u64 = v
                        .parse()
                        .map_err(|_| Error::format(path, 1, format!("bad format_version {v:?}")))?;
                    if found != VOCAB_FORMAT_VERSION {
                        return Err(Error::Version {
                            found,
                            expected: VOCAB_FORMAT_VERSION,
                        });
                    }
                }
                Some(("reserved", r)) => {
                    if r != RESERVED.join(",") {
                        return Err(Error::format(path, 1, format!("unexpected reserved symbols {r}")));
                    }
                }
                _ => return Err(Error::format(path, 1, format!("unexpected header field {part:?}"))),
            }
        }
        Ok(())
    }
}
