//! Linear classifiers with decomposed weights, `w_s = θ_g + θ_s` and
//! `w_t = θ_g + θ_t`, trained on the hinge loss.
//!
//! Penalizing `‖θ_g‖² + ‖θ_d‖²` instead of `‖w_d‖²` is the same as adding a
//! pull `‖θ_g − θ_d‖²` between the domains; [`reg_identity`] checks the
//! underlying algebra.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{dot, norm_sq, Rng};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPoint<S = f64> {
    pub x: Vec<S>,
    /// −1 or +1.
    pub y: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearAugModel<S = f64> {
    pub theta_g: Vec<S>,
    pub theta_s: Vec<S>,
    pub theta_t: Vec<S>,
    pub lambda: S,
}

impl<S: Scalar> LinearAugModel<S> {
    pub fn zeros(dim: usize, lambda: S) -> Result<Self> {
        let m = Self {
            theta_g: vec![S::zero(); dim],
            theta_s: vec![S::zero(); dim],
            theta_t: vec![S::zero(); dim],
            lambda,
        };
        m.validate()?;
        Ok(m)
    }

    /// Every coordinate uniform in `[−scale, scale)`.
    pub fn random(dim: usize, lambda: S, scale: f64, rng: &mut Rng) -> Result<Self> {
        let mut draw = || -> Result<Vec<S>> { Ok(rng.uniform_vec(-scale, scale, dim)?.into_iter().map(S::lit).collect()) };
        let m = Self {
            theta_g: draw()?,
            theta_s: draw()?,
            theta_t: draw()?,
            lambda,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.theta_g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.theta_g.len();
        if self.theta_s.len() != d || self.theta_t.len() != d {
            return Err(Error::dim("θ_g, θ_s and θ_t must have equal length"));
        }
        if !(self.lambda > S::zero()) {
            return Err(Error::InvalidArgument("lambda must be positive".into()));
        }
        Ok(())
    }

    pub fn w_s(&self) -> Vec<S> {
        self.theta_g.iter().zip(&self.theta_s).map(|(&a, &b)| a + b).collect()
    }

    pub fn w_t(&self) -> Vec<S> {
        self.theta_g.iter().zip(&self.theta_t).map(|(&a, &b)| a + b).collect()
    }
}

fn check_data<S: Scalar>(data: &[LabeledPoint<S>], dim: usize) -> Result<()> {
    for (i, p) in data.iter().enumerate() {
        if p.y != S::one() && p.y != -S::one() {
            return Err(Error::InvalidArgument(format!("label {} of point {i} is not ±1", p.y)));
        }
        if p.x.len() != dim {
            return Err(Error::dim(format!("point {i} has {} features, expected {dim}", p.x.len())));
        }
    }
    Ok(())
}

/// Mean hinge loss of `w` and its subgradient. The subgradient at margin
/// exactly 1 is taken as zero.
pub fn mean_hinge<S: Scalar>(w: &[S], data: &[LabeledPoint<S>]) -> (S, Vec<S>) {
    let mut grad = vec![S::zero(); w.len()];
    if data.is_empty() {
        return (S::zero(), grad);
    }
    let inv = S::one() / S::lit(data.len() as f64);
    let mut loss = S::zero();
    for p in data {
        let margin = p.y * dot(w, &p.x);
        if margin < S::one() {
            loss += S::one() - margin;
            for (g, &x) in grad.iter_mut().zip(&p.x) {
                *g -= inv * p.y * x;
            }
        }
    }
    (loss * inv, grad)
}

/// Mean hinge per domain on the composed weights plus
/// `λ(‖θ_g‖² + ‖θ_s‖²) + λ(‖θ_g‖² + ‖θ_t‖²)`.
pub fn aug_objective<S: Scalar>(
    model: &LinearAugModel<S>,
    source: &[LabeledPoint<S>],
    target: &[LabeledPoint<S>],
) -> Result<S> {
    Ok(aug_gradient(model, source, target)?.0)
}

/// Objective value and its subgradients with respect to θ_g, θ_s, θ_t.
pub fn aug_gradient<S: Scalar>(
    model: &LinearAugModel<S>,
    source: &[LabeledPoint<S>],
    target: &[LabeledPoint<S>],
) -> Result<(S, Vec<S>, Vec<S>, Vec<S>)> {
    model.validate()?;
    check_data(source, model.dim())?;
    check_data(target, model.dim())?;
    let lam = model.lambda;
    let two = S::lit(2.0);
    let (ls, gs) = mean_hinge(&model.w_s(), source);
    let (lt, gt) = mean_hinge(&model.w_t(), target);
    let reg = lam * (two * norm_sq(&model.theta_g) + norm_sq(&model.theta_s) + norm_sq(&model.theta_t));
    let d_g = (0..model.dim())
        .map(|k| gs[k] + gt[k] + two * two * lam * model.theta_g[k])
        .collect();
    let d_s = (0..model.dim()).map(|k| gs[k] + two * lam * model.theta_s[k]).collect();
    let d_t = (0..model.dim()).map(|k| gt[k] + two * lam * model.theta_t[k]).collect();
    Ok((ls + lt + reg, d_g, d_s, d_t))
}

/// Single-domain objective: mean hinge plus `λ‖w‖²`.
pub fn svm_objective<S: Scalar>(w: &[S], data: &[LabeledPoint<S>], lambda: S) -> Result<S> {
    check_data(data, w.len())?;
    Ok(mean_hinge(w, data).0 + lambda * norm_sq(w))
}

/// `(2(‖θ_g‖² + ‖θ_d‖²) − ‖θ_g + θ_d‖², ‖θ_g − θ_d‖²)`; the two agree up to rounding.
pub fn reg_identity<S: Scalar>(theta_g: &[S], theta_d: &[S]) -> Result<(S, S)> {
    if theta_g.len() != theta_d.len() {
        return Err(Error::dim("θ_g and θ_d must have equal length"));
    }
    let sum: Vec<S> = theta_g.iter().zip(theta_d).map(|(&a, &b)| a + b).collect();
    let diff: Vec<S> = theta_g.iter().zip(theta_d).map(|(&a, &b)| a - b).collect();
    let lhs = S::lit(2.0) * (norm_sq(theta_g) + norm_sq(theta_d)) - norm_sq(&sum);
    Ok((lhs, norm_sq(&diff)))
}

#[derive(Clone, Debug)]
pub struct LinearFit<S = f64> {
    /// Last iterate.
    pub last: LinearAugModel<S>,
    /// Running mean of the iterates after each step.
    pub averaged: LinearAugModel<S>,
    /// Objective at each iterate, starting with the initial model.
    pub objectives: Vec<S>,
}

impl<S: Scalar> LinearFit<S> {
    pub fn w_s(&self) -> Vec<S> {
        self.averaged.w_s()
    }

    pub fn w_t(&self) -> Vec<S> {
        self.averaged.w_t()
    }
}

fn descend<S: Scalar>(theta: &mut [S], grad: &[S], step: S) {
    for (t, &g) in theta.iter_mut().zip(grad) {
        *t -= step * g;
    }
}

/// Fixed-step subgradient descent on [`aug_objective`]. With
/// `freeze_general` θ_g stays at its initial value.
pub fn train_linear<S: Scalar>(
    init: &LinearAugModel<S>,
    source: &[LabeledPoint<S>],
    target: &[LabeledPoint<S>],
    steps: usize,
    step_size: S,
    freeze_general: bool,
) -> Result<LinearFit<S>> {
    let mut m = init.clone();
    let mut avg = init.clone();
    let mut objectives = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        let (obj, dg, ds, dt) = aug_gradient(&m, source, target)?;
        objectives.push(obj);
        if !freeze_general {
            descend(&mut m.theta_g, &dg, step_size);
        }
        descend(&mut m.theta_s, &ds, step_size);
        descend(&mut m.theta_t, &dt, step_size);
        let w = S::one() / S::lit((k + 1) as f64);
        for (a, b) in [
            (&mut avg.theta_g, &m.theta_g),
            (&mut avg.theta_s, &m.theta_s),
            (&mut avg.theta_t, &m.theta_t),
        ] {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += w * (y - *x);
            }
        }
    }
    objectives.push(aug_objective(&m, source, target)?);
    if steps == 0 {
        avg = m.clone();
    }
    Ok(LinearFit {
        last: m,
        averaged: avg,
        objectives,
    })
}

/// Fixed-step subgradient descent on [`svm_objective`] for one domain.
pub fn train_svm<S: Scalar>(init: &[S], data: &[LabeledPoint<S>], lambda: S, steps: usize, step_size: S) -> Result<Vec<S>> {
    check_data(data, init.len())?;
    let mut w = init.to_vec();
    let two = S::lit(2.0);
    for _ in 0..steps {
        let (_, mut g) = mean_hinge(&w, data);
        for (gk, &wk) in g.iter_mut().zip(&w) {
            *gk += two * lambda * wk;
        }
        descend(&mut w, &g, step_size);
    }
    Ok(w)
}

/// Share of points whose sign matches `w·x` (zero counts as wrong).
pub fn accuracy<S: Scalar>(w: &[S], data: &[LabeledPoint<S>]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let ok = data.iter().filter(|p| p.y * dot(w, &p.x) > S::zero()).count();
    ok as f64 / data.len() as f64
}

/// Reads `label,x1,…,xd` rows; blank lines and lines starting with `#` are skipped.
pub fn read_labeled_csv(path: &Path) -> Result<Vec<LabeledPoint<f64>>> {
    let text = fs::read_to_string(path)?;
    let mut out: Vec<LabeledPoint<f64>> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::format(path, k + 1, e.to_string()))?;
        let (&y, x) = vals
            .split_first()
            .ok_or_else(|| Error::format(path, k + 1, "empty row"))?;
        if y != 1.0 && y != -1.0 {
            return Err(Error::format(path, k + 1, format!("label {y} is not ±1")));
        }
        if let Some(first) = out.first() {
            if first.x.len() != x.len() {
                return Err(Error::format(path, k + 1, format!("expected {} features", first.x.len())));
            }
        }
        out.push(LabeledPoint { x: x.to_vec(), y });
    }
    Ok(out)
}
