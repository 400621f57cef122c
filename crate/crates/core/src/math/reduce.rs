//! Numerically stable reductions over logit vectors.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn max_finite<S: Scalar>(v: &[S]) -> Result<S> {
    if v.is_empty() {
        return Err(Error::EmptyReduction);
    }
    let mut m = S::neg_infinity();
    for &x in v {
        if !x.is_finite() {
            return Err(Error::NonFinite("log_sum_exp input"));
        }
        if x > m {
            m = x;
        }
    }
    Ok(m)
}

/// `log Σ exp(v_i)`, computed as `m + log Σ exp(v_i − m)` with `m = max v`.
pub fn log_sum_exp<S: Scalar>(v: &[S]) -> Result<S> {
    let m = max_finite(v)?;
    let s: S = v.iter().map(|&x| (x - m).exp()).sum();
    Ok(m + s.ln())
}

pub fn softmax<S: Scalar>(v: &[S]) -> Result<Vec<S>> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

/// Overwrites `v` with `softmax(v)` and returns `log Σ exp(v)` of the input.
pub fn softmax_in_place<S: Scalar>(v: &mut [S]) -> Result<S> {
    let m = max_finite(v)?;
    let mut s = S::zero();
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    let inv = S::one() / s;
    for x in v.iter_mut() {
        *x *= inv;
    }
    Ok(m + s.ln())
}

pub fn log_softmax<S: Scalar>(v: &[S]) -> Result<Vec<S>> {
    let lse = log_sum_exp(v)?;
    Ok(v.iter().map(|&x| x - lse).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<S: Scalar>(v: &[S]) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}
