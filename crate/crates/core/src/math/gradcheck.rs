//! Central-difference gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Compares the analytic gradient returned by `f` at `x` against central
/// differences `(f(x + h e_i) − f(x − h e_i)) / 2h`.
///
/// Returns `max_i |analytic_i − numeric_i| / max(1, |analytic_i|, |numeric_i|)`.
/// `f` returns `(value, gradient)`; only the value is used at perturbed points.
pub fn grad_check<S, F>(mut f: F, x: &[S], h: S) -> Result<S>
where
    S: Scalar,
    F: FnMut(&[S]) -> Result<(S, Vec<S>)>,
{
    if !(h >= S::lit(1e-7) && h <= S::lit(1e-3)) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {h} outside [1e-7, 1e-3]"
        )));
    }
    let (value, analytic) = f(x)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check objective"));
    }
    if analytic.len() != x.len() {
        return Err(Error::dim(format!(
            "gradient length {} for {} parameters",
            analytic.len(),
            x.len()
        )));
    }
    let two = S::lit(2.0);
    let mut probe = x.to_vec();
    let mut worst = S::zero();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let (plus, _) = f(&probe)?;
        probe[i] = x[i] - h;
        let (minus, _) = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite("grad_check objective"));
        }
        let numeric = (plus - minus) / (two * h);
        let a = analytic[i];
        let denom = S::one().max(a.abs()).max(numeric.abs());
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_squared_norm_is_exact() {
        let x = [0.3, -1.7, 2.5, 10.0];
        let err = grad_check(
            |p: &[f64]| Ok((p.iter().map(|v| v * v).sum::<f64>() / 2.0, p.to_vec())),
            &x,
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn detects_wrong_gradient() {
        let err = grad_check(
            |p: &[f64]| Ok((p[0] * p[0], vec![p[0]])),
            &[1.0],
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err > 0.4);
    }

    #[test]
    fn rejects_bad_step_and_nan() {
        let f = |p: &[f64]| Ok((p[0], vec![1.0]));
        assert!(grad_check(f, &[0.0], 1e-2).is_err());
        let g = |_: &[f64]| Ok((f64::NAN, vec![1.0]));
        assert!(matches!(grad_check(g, &[0.0], 1e-5), Err(Error::NonFinite(_))));
    }
}
