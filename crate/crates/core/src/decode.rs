//! Caption generation and sentence scoring.
//!
//! Scores are unnormalized sums of per-step log probabilities, so shorter
//! captions are favoured; no length penalty is applied.

use std::cmp::Ordering;

use crate::data::{BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::math::{argmax, log_softmax};
use crate::model::{eval_weights, sequence_nll, DomainTag, LstmState, ModelParams};
use crate::scalar::Scalar;

pub const DEFAULT_BEAM_WIDTH: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 30;

/// A decoded caption. `tokens` excludes BOS and ends with EOS when `finished`.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis<S = f64> {
    pub tokens: Vec<usize>,
    pub score: S,
    pub finished: bool,
}

impl<S> Hypothesis<S> {
    /// Caption words without the trailing EOS.
    pub fn words(&self) -> &[usize] {
        match self.tokens.last() {
            Some(&EOS) => &self.tokens[..self.tokens.len() - 1],
            _ => &self.tokens,
        }
    }
}

/// Higher score first; equal scores fall back to lexicographic token order.
fn rank<S: Scalar>(a: (&[usize], S), b: (&[usize], S)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(b.0))
}

fn step_log_probs<S: Scalar>(params: &ModelParams<S>, tag: DomainTag, h: &[S]) -> Result<Vec<S>> {
    let w = eval_weights(&params.head, tag)?;
    let logits = w.matvec(h)?;
    if !logits.iter().all(|z| z.is_finite()) {
        return Err(Error::NonFinite("decoder logits"));
    }
    log_softmax(&logits)
}

fn expandable(token: usize) -> bool {
    token != PAD && token != BOS
}

/// Greedy decoding: the most probable next token at every step (lowest id on ties).
pub fn greedy<S: Scalar>(params: &ModelParams<S>, ctx: &[S], tag: DomainTag, max_len: usize) -> Result<Hypothesis<S>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be at least 1".into()));
    }
    let (mut state, _) = params.context_step(ctx)?;
    let mut prev = BOS;
    let mut out = Hypothesis {
        tokens: Vec::new(),
        score: S::zero(),
        finished: false,
    };
    for _ in 0..max_len {
        state = params.token_step(&state, prev)?.0;
        let mut lp = step_log_probs(params, tag, &state.h)?;
        lp[PAD] = S::neg_infinity();
        lp[BOS] = S::neg_infinity();
        let best = argmax(&lp).ok_or(Error::EmptyReduction)?;
        out.tokens.push(best);
        out.score += lp[best];
        if best == EOS {
            out.finished = true;
            break;
        }
        prev = best;
    }
    Ok(out)
}

struct Live<S> {
    tokens: Vec<usize>,
    score: S,
    state: LstmState<S>,
}

/// Beam search over captions of at most `max_len` generated tokens (EOS
/// included). Returns the best finished caption, or the best unfinished one
/// if none finished.
pub fn beam_search<S: Scalar>(
    params: &ModelParams<S>,
    ctx: &[S],
    tag: DomainTag,
    width: usize,
    max_len: usize,
) -> Result<Hypothesis<S>> {
    if width == 0 || max_len == 0 {
        return Err(Error::InvalidArgument("beam width and max_len must be at least 1".into()));
    }
    let (state, _) = params.context_step(ctx)?;
    let mut live = vec![Live {
        tokens: Vec::new(),
        score: S::zero(),
        state,
    }];
    let mut best_finished: Option<Hypothesis<S>> = None;
    for _ in 0..max_len {
        let mut candidates: Vec<(usize, usize, S)> = Vec::new();
        let mut stepped = Vec::with_capacity(live.len());
        for (k, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let next = params.token_step(&hyp.state, prev)?.0;
            let lp = step_log_probs(params, tag, &next.h)?;
            for (v, &l) in lp.iter().enumerate().filter(|&(v, _)| expandable(v)) {
                candidates.push((k, v, hyp.score + l));
            }
            stepped.push(next);
        }
        let seq = |&(k, v, _): &(usize, usize, S)| {
            let mut t = live[k].tokens.clone();
            t.push(v);
            t
        };
        // Only the candidates ranked within the beam need their sequences built.
        candidates.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then_with(|| live[a.0].tokens.cmp(&live[b.0].tokens))
                .then(a.1.cmp(&b.1))
        });
        candidates.truncate(width);
        let mut next_live = Vec::with_capacity(width);
        for c in &candidates {
            let tokens = seq(c);
            if c.1 == EOS {
                let better = match &best_finished {
                    None => true,
                    Some(b) => rank((&tokens, c.2), (&b.tokens, b.score)) == Ordering::Less,
                };
                if better {
                    best_finished = Some(Hypothesis {
                        tokens,
                        score: c.2,
                        finished: true,
                    });
                }
            } else {
                next_live.push(Live {
                    tokens,
                    score: c.2,
                    state: stepped[c.0].clone(),
                });
            }
        }
        live = next_live;
        // Extending a hypothesis never raises its score.
        if let Some(b) = &best_finished {
            live.retain(|h| h.score >= b.score);
        }
        if live.is_empty() {
            break;
        }
    }
    if let Some(b) = best_finished {
        return Ok(b);
    }
    live.into_iter()
        .min_by(|a, b| rank((&a.tokens, a.score), (&b.tokens, b.score)))
        .map(|h| Hypothesis {
            tokens: h.tokens,
            score: h.score,
            finished: false,
        })
        .ok_or(Error::EmptyReduction)
}

/// `log p(tokens | ctx)` for a `[BOS, …, EOS]` sequence.
pub fn score_sentence<S: Scalar>(params: &ModelParams<S>, ctx: &[S], tokens: &[usize], tag: DomainTag) -> Result<S> {
    sequence_nll(params, ctx, tokens, tag).map(|(nll, _)| -nll)
}

/// Index of the most probable choice; the lowest index wins ties.
pub fn select_answer<S: Scalar>(
    params: &ModelParams<S>,
    ctx: &[S],
    choices: &[Vec<usize>],
    tag: DomainTag,
) -> Result<usize> {
    if choices.is_empty() {
        return Err(Error::InvalidArgument("no choices to select from".into()));
    }
    let mut best = (0, S::neg_infinity());
    for (i, c) in choices.iter().enumerate() {
        let s = score_sentence(params, ctx, c, tag)?;
        if i == 0 || s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}
