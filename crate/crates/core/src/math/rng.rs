//! Seeded pseudo-random numbers.
//!
//! The generator is xoshiro256** (Blackman & Vigna), with its 256-bit state
//! expanded from a 64-bit seed by SplitMix64. Both are implemented here so the
//! stream for a given seed is fixed across platforms, toolchains and crate
//! upgrades. Floats are drawn from the top 53 bits of each output.

use crate::error::{Error, Result};

pub const ALGORITHM: &str = "xoshiro256**/splitmix64";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn check_range(lo: f64, hi: f64) -> Result<()> {
    if lo < hi && lo.is_finite() && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "uniform range requires lo < hi, got [{lo}, {hi})"
        )))
    }
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut sm = seed;
        let s = [
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
            splitmix64(&mut sm),
        ];
        Self { s }
    }

    /// Independent stream keyed by `(seed, stream)`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mut sm = seed ^ stream.wrapping_mul(0xd134_2543_de82_ef95);
        let key = splitmix64(&mut sm);
        Self::new(key ^ stream.rotate_left(32))
    }

    pub fn algorithm(&self) -> &'static str {
        ALGORITHM
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `(0, 1]`, safe to pass to `ln`.
    #[inline]
    pub fn next_f64_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// One draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        check_range(lo, hi)?;
        Ok(self.uniform_unchecked(lo, hi))
    }

    #[inline]
    fn uniform_unchecked(&mut self, lo: f64, hi: f64) -> f64 {
        let x = lo + (hi - lo) * self.next_f64();
        // Rounding can land exactly on `hi` when the range is tiny relative to `lo`.
        if x >= hi {
            let below = if hi > 0.0 {
                f64::from_bits(hi.to_bits() - 1)
            } else if hi == 0.0 {
                -f64::from_bits(1)
            } else {
                f64::from_bits(hi.to_bits() + 1)
            };
            below.max(lo)
        } else {
            x
        }
    }

    /// `n` draws from `[lo, hi)`.
    pub fn uniform_vec(&mut self, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
        check_range(lo, hi)?;
        Ok((0..n).map(|_| self.uniform_unchecked(lo, hi)).collect())
    }

    /// Uniform integer in `[0, n)` by rejection sampling (unbiased). `n` must be > 0.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % n) as usize;
            }
        }
    }

    /// Fisher–Yates. An empty or singleton slice consumes no randomness.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }

    /// Standard normal via Box–Muller (one value per call, two uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.next_f64_open();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Exponential with unit rate.
    pub fn exponential(&mut self) -> f64 {
        -self.next_f64_open().ln()
    }

    /// Index drawn from unnormalized non-negative weights.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        let mut u = self.next_f64() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}
