//! Corpus BLEU, perplexity and evaluation reports.

use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::decode::beam_search;
use crate::error::{Error, Result};
use crate::model::{DomainTag, ModelParams};
use crate::scalar::{cast_slice, Scalar};
use crate::train::mean_nll;

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for g in tokens.windows(n) {
            *counts.entry(g).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU-1..`max_n` with clipped n-gram counts and the brevity
/// penalty measured against the closest reference length (shorter on ties).
/// No smoothing: a zero precision at order `n` makes BLEU-k zero for k ≥ n.
pub fn bleu<T: Eq + Hash>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>], max_n: usize) -> Result<Vec<f64>> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("BLEU needs a non-empty corpus".into()));
    }
    if candidates.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} candidates but {} reference sets",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (cand, refs) in candidates.iter().zip(references) {
        if refs.is_empty() {
            return Err(Error::InvalidArgument("candidate without references".into()));
        }
        c_len += cand.len();
        r_len += refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| (l.abs_diff(cand.len()), l))
            .unwrap_or(0);
        for n in 1..=max_n {
            let mut max_ref: HashMap<&[T], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (g, c) in ngram_counts(cand, n) {
                matched[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                total[n - 1] += c;
            }
        }
    }
    let bp = if c_len == 0 {
        0.0
    } else if c_len > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c_len as f64).exp()
    };
    let mut out = Vec::with_capacity(max_n);
    let mut log_sum = 0.0;
    let mut zero = false;
    for n in 0..max_n {
        if matched[n] == 0 {
            zero = true;
        } else {
            log_sum += (matched[n] as f64 / total[n] as f64).ln();
        }
        out.push(if zero || bp == 0.0 { 0.0 } else { bp * (log_sum / (n + 1) as f64).exp() });
    }
    Ok(out)
}

/// `exp` of the mean per-token NLL over every predicted token, EOS included.
pub fn perplexity<S: Scalar>(params: &ModelParams<S>, examples: &[Example], tag: DomainTag) -> Result<f64> {
    mean_nll(params, examples, tag).map(f64::exp)
}

pub const EVAL_CSV_HEADER: &str = "bleu1,bleu2,bleu3,bleu4,perplexity,sentences,tokens";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub perplexity: f64,
    pub sentences: usize,
    /// Predicted tokens behind the perplexity.
    pub tokens: usize,
}

impl EvalReport {
    pub fn bleu(&self) -> [f64; 4] {
        [self.bleu1, self.bleu2, self.bleu3, self.bleu4]
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.9},{:.9},{:.9},{:.9},{:.9},{},{}",
            self.bleu1, self.bleu2, self.bleu3, self.bleu4, self.perplexity, self.sentences, self.tokens
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Beam-decodes every example and scores the captions against the
/// example's own caption; perplexity comes from the same examples.
pub fn evaluate<S: Scalar>(
    params: &ModelParams<S>,
    examples: &[Example],
    tag: DomainTag,
    width: usize,
    max_len: usize,
) -> Result<EvalReport> {
    let captions: Vec<Vec<usize>> = examples
        .par_iter()
        .map(|ex| beam_search(params, &cast_slice::<S>(&ex.ctx), tag, width, max_len).map(|h| h.words().to_vec()))
        .collect::<Result<_>>()?;
    let refs: Vec<Vec<Vec<usize>>> = examples.iter().map(|ex| vec![ex.words().to_vec()]).collect();
    let b = bleu(&captions, &refs, 4)?;
    Ok(EvalReport {
        bleu1: b[0],
        bleu2: b[1],
        bleu3: b[2],
        bleu4: b[3],
        perplexity: perplexity(params, examples, tag)?,
        sentences: examples.len(),
        tokens: examples.iter().map(Example::predictions).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn perfect_match_is_one() {
        let c = vec![words("the cat sat on the mat")];
        let r = vec![vec![words("the cat sat on the mat")]];
        assert_eq!(bleu(&c, &r, 4).unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn clipped_unigrams() {
        // 'a' appears once in the reference, so only one of four candidate 'a's counts;
        // c = 4 > r = 2, so no brevity penalty.
        let b = bleu(&[words("a a a a")], &[vec![words("a b")]], 4).unwrap();
        assert!((b[0] - 0.25).abs() < 1e-12);
        assert_eq!(b[1], 0.0);
    }

    #[test]
    fn disjoint_is_zero_and_empty_candidate_is_zero() {
        assert_eq!(bleu(&[words("x y z")], &[vec![words("a b c")]], 4).unwrap(), vec![0.0; 4]);
        assert_eq!(bleu(&[vec![]], &[vec![words("a b")]], 4).unwrap(), vec![0.0; 4]);
        assert!(bleu::<&str>(&[], &[], 4).is_err());
    }
}
