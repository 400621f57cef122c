//! Adam with bias correction.
//!
//! Moments are kept per parameter block. A block that takes no part in a
//! step's objective (for example the target head on a source batch) is left
//! untouched: its value, moments and step count stay as they were.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct BlockMoments<S> {
    m: Vec<S>,
    v: Vec<S>,
    t: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S = f64> {
    pub config: AdamConfig,
    blocks: Vec<BlockMoments<S>>,
    steps: u64,
}

impl<S: Scalar> AdamState<S> {
    /// Fresh state for parameter blocks of the given lengths.
    pub fn new(config: AdamConfig, block_lens: &[usize]) -> Self {
        Self {
            config,
            blocks: block_lens
                .iter()
                .map(|&n| BlockMoments {
                    m: vec![S::zero(); n],
                    v: vec![S::zero(); n],
                    t: 0,
                })
                .collect(),
            steps: 0,
        }
    }

    /// Number of `step` calls so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Updates taken by block `k`.
    pub fn block_steps(&self, k: usize) -> u64 {
        self.blocks[k].t
    }

    pub fn first_moment(&self, k: usize) -> &[S] {
        &self.blocks[k].m
    }

    pub fn second_moment(&self, k: usize) -> &[S] {
        &self.blocks[k].v
    }

    /// Updates every block.
    pub fn step(&mut self, params: &mut [&mut [S]], grads: &[&[S]]) -> Result<()> {
        let all = vec![true; self.blocks.len()];
        self.step_masked(params, grads, &all)
    }

    /// Updates the blocks with `active[k]`:
    /// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`,
    /// `θ ← θ − α·m̂ / (√v̂ + ε)` with `m̂ = m/(1−β₁ᵗ)`, `v̂ = v/(1−β₂ᵗ)`.
    pub fn step_masked(&mut self, params: &mut [&mut [S]], grads: &[&[S]], active: &[bool]) -> Result<()> {
        let nb = self.blocks.len();
        if params.len() != nb || grads.len() != nb || active.len() != nb {
            return Err(Error::dim(format!(
                "adam has {nb} blocks, got {} params, {} grads, {} mask entries",
                params.len(),
                grads.len(),
                active.len()
            )));
        }
        for (k, ((p, g), b)) in params.iter().zip(grads).zip(&self.blocks).enumerate() {
            if p.len() != b.m.len() || g.len() != b.m.len() {
                return Err(Error::dim(format!(
                    "adam block {k}: state {}, params {}, grads {}",
                    b.m.len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        let c = self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let (one_b1, one_b2) = (S::one() - b1, S::one() - b2);
        let alpha = S::lit(c.alpha);
        let eps = S::lit(c.eps);
        for (k, b) in self.blocks.iter_mut().enumerate() {
            if !active[k] {
                continue;
            }
            b.t += 1;
            let t = b.t as i32;
            let bc1 = S::one() - b1.powi(t);
            let bc2 = S::one() - b2.powi(t);
            let p = &mut params[k];
            let g = grads[k];
            for j in 0..b.m.len() {
                let gj = g[j];
                b.m[j] = b1 * b.m[j] + one_b1 * gj;
                b.v[j] = b2 * b.v[j] + one_b2 * gj * gj;
                let m_hat = b.m[j] / bc1;
                let v_hat = b.v[j] / bc2;
                p[j] -= alpha * m_hat / (v_hat.sqrt() + eps);
            }
        }
        self.steps += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_alpha() {
        let cfg = AdamConfig::default();
        for g in [1e-3, -0.5, 3.0, 1e4] {
            let mut st = AdamState::<f64>::new(cfg, &[1]);
            let mut x = [2.0];
            st.step(&mut [&mut x], &[&[g]]).unwrap();
            let moved = (2.0 - x[0]).abs();
            assert!((moved - cfg.alpha).abs() < 1e-6, "g={g}: moved {moved}");
            assert_eq!((2.0 - x[0]).signum(), g.signum());
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[3]);
        let mut x = [1.0, -2.0, 0.5];
        st.step(&mut [&mut x], &[&[0.0; 3]]).unwrap();
        assert_eq!(x, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn inactive_blocks_are_untouched() {
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[1, 1]);
        let (mut a, mut b) = ([1.0], [1.0]);
        st.step_masked(&mut [&mut a, &mut b], &[&[1.0], &[1.0]], &[true, false]).unwrap();
        assert_ne!(a[0], 1.0);
        assert_eq!(b[0], 1.0);
        assert_eq!(st.block_steps(1), 0);
        assert_eq!(st.second_moment(1), &[0.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut st = AdamState::<f64>::new(AdamConfig::default(), &[2]);
        let mut x = [0.0; 3];
        assert!(st.step(&mut [&mut x], &[&[0.0; 3]]).is_err());
        let mut y = [0.0; 2];
        assert!(st.step(&mut [&mut y], &[&[0.0; 1]]).is_err());
    }
}
