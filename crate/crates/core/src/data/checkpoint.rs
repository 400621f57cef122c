//! Versioned JSON checkpoints.
//!
//! ```text
//! {
//!   "format_version": 1,
//!   "kind": "domadapt-checkpoint",
//!   "config": { …TrainConfig… },
//!   "provenance": { "strategy", "seed", "vocab_hash", "vocab", "head", "scalar",
//!                   "rng", "init_scale", "vocab_size", "cell_size", "ctx_dim", "best_epoch" },
//!   "metrics": { …RunMetrics… },
//!   "params": [ { "name", "rows", "cols", "data": "<16 hex digits per f64, row-major>" }, … ]
//! }
//! ```
//!
//! Parameters are stored as the raw bits of their `f64` value, so a round
//! trip is bit-exact for both `f64` and `f32` models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::vocab::{Vocab, RESERVED};
use crate::error::{Error, Result};
use crate::math::{Matrix, RNG_ALGORITHM};
use crate::model::{HeadKind, ModelParams};
use crate::scalar::Scalar;
use crate::train::{RunMetrics, Strategy, TrainConfig};

pub const CHECKPOINT_FORMAT_VERSION: u64 = 1;
const CHECKPOINT_KIND: &str = "domadapt-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    pub seed: u64,
    pub vocab_hash: String,
    /// Non-reserved tokens in id order.
    pub vocab: Vec<String>,
    pub head: HeadKind,
    pub scalar: String,
    pub rng: String,
    pub init_scale: f64,
    pub vocab_size: usize,
    pub cell_size: usize,
    pub ctx_dim: usize,
    pub best_epoch: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    format_version: u64,
    kind: String,
    config: TrainConfig,
    provenance: Provenance,
    metrics: RunMetrics,
    params: Vec<Tensor>,
}

/// Everything a checkpoint holds besides the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S = f64> {
    pub params: ModelParams<S>,
    pub config: TrainConfig,
    pub provenance: Provenance,
    pub metrics: RunMetrics,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::from_tokens(self.provenance.vocab.iter().cloned())
    }
}

fn encode(m: &Matrix<f64>) -> String {
    let mut s = String::with_capacity(m.as_slice().len() * 16);
    for x in m.as_slice() {
        s.push_str(&format!("{:016x}", x.to_bits()));
    }
    s
}

fn decode(path: &Path, t: &Tensor) -> Result<Vec<f64>> {
    let bad = |msg: String| Error::format(path, 1, format!("tensor {}: {msg}", t.name));
    if t.data.len() != t.rows * t.cols * 16 {
        return Err(bad(format!("expected {} hex digits, found {}", t.rows * t.cols * 16, t.data.len())));
    }
    (0..t.rows * t.cols)
        .map(|k| {
            let chunk = t.data.get(16 * k..16 * k + 16).ok_or_else(|| bad("non-ASCII data".into()))?;
            u64::from_str_radix(chunk, 16)
                .map(f64::from_bits)
                .map_err(|e| bad(e.to_string()))
        })
        .collect()
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    params: &ModelParams<S>,
    config: &TrainConfig,
    metrics: &RunMetrics,
    vocab: &Vocab,
) -> Result<()> {
    params.validate()?;
    if params.vocab_size() != vocab.len() {
        return Err(Error::dim(format!(
            "model vocabulary {} differs from vocab {}",
            params.vocab_size(),
            vocab.len()
        )));
    }
    let wide = params.cast::<f64>();
    let tensors = wide
        .names()
        .into_iter()
        .zip(wide.matrices())
        .map(|(name, m)| Tensor {
            name: name.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            data: encode(m),
        })
        .collect();
    let env = Envelope {
        format_version: CHECKPOINT_FORMAT_VERSION,
        kind: CHECKPOINT_KIND.into(),
        config: config.clone(),
        provenance: Provenance {
            strategy: config.strategy,
            seed: config.seed,
            vocab_hash: vocab.hash(),
            vocab: vocab.tokens()[RESERVED.len()..].to_vec(),
            head: params.head_kind(),
            scalar: S::NAME.into(),
            rng: RNG_ALGORITHM.into(),
            init_scale: config.init_scale,
            vocab_size: params.vocab_size(),
            cell_size: params.cell_size(),
            ctx_dim: params.ctx_dim(),
            best_epoch: metrics.best_epoch,
        },
        metrics: metrics.clone(),
        params: tensors,
    };
    fs::write(path, serde_json::to_string_pretty(&env)?)?;
    Ok(())
}

/// Loads a checkpoint. When `expected_vocab` is given its hash must match
/// the one the model was trained with.
pub fn load_checkpoint<S: Scalar>(path: &Path, expected_vocab: Option<&Vocab>) -> Result<Checkpoint<S>> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), e.to_string()))?;
    let version = value.get("format_version").and_then(|v| v.as_u64());
    match version {
        Some(CHECKPOINT_FORMAT_VERSION) => {}
        Some(found) => {
            return Err(Error::Version {
                found,
                expected: CHECKPOINT_FORMAT_VERSION,
            })
        }
        None => return Err(Error::format(path, 1, "missing format_version")),
    }
    let env: Envelope = serde_json::from_value(value).map_err(|e| Error::format(path, 1, e.to_string()))?;
    if env.kind != CHECKPOINT_KIND {
        return Err(Error::format(path, 1, format!("unexpected kind {:?}", env.kind)));
    }
    let prov = env.provenance;
    let vocab = Vocab::from_tokens(prov.vocab.iter().cloned())?;
    if vocab.hash() != prov.vocab_hash {
        return Err(Error::format(path, 1, "embedded vocabulary does not match its hash"));
    }
    if let Some(v) = expected_vocab {
        if v.hash() != prov.vocab_hash {
            return Err(Error::VocabMismatch {
                expected: prov.vocab_hash,
                found: v.hash(),
            });
        }
    }
    let mut params = ModelParams::<f64>::zeros(prov.vocab_size, prov.cell_size, prov.ctx_dim, prov.head);
    let names = params.names();
    if names.len() != env.params.len() {
        return Err(Error::format(
            path,
            1,
            format!("expected {} tensors, found {}", names.len(), env.params.len()),
        ));
    }
    for ((name, m), t) in names.into_iter().zip(params.matrices_mut()).zip(&env.params) {
        if t.name != name || (t.rows, t.cols) != m.shape() {
            return Err(Error::format(
                path,
                1,
                format!("tensor {} {}x{} where {name} {:?} was expected", t.name, t.rows, t.cols, m.shape()),
            ));
        }
        m.as_mut_slice().copy_from_slice(&decode(path, t)?);
    }
    Ok(Checkpoint {
        params: params.cast::<S>(),
        config: env.config,
        provenance: prov,
        metrics: env.metrics,
    })
}
