//! Reproducible random number generation.
//!
//! The generator is xoshiro256++ (Blackman and Vigna) seeded from a single
//! `u64` through SplitMix64 (increment `0x9e3779b97f4a7c15`, mixing
//! multipliers `0xbf58476d1ce4e5b9` and `0x94d049bb133111eb`). Both are
//! defined purely in terms of 64-bit integer arithmetic, so a given seed
//! yields the same stream on every platform.

use rand_core::{RngCore, SeedableRng};
use rand_distr::{Beta, Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-task `index`, seeded with `seed ^ index`.
    pub fn derive(seed: u64, index: u64) -> Self {
        Self::new(seed ^ index)
    }

    /// Uniform sample in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Log-uniform sample in `[lo, hi]`; both bounds must be positive.
    pub fn log_uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let (a, b) = (libm_ln(lo), libm_ln(hi));
        num_traits::Float::exp(self.uniform(a, b))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform index in `0..n`. `n` must be non-zero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Lemire's multiply-shift; the bias is below 2^-32 for the sizes used here.
        ((self.inner.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn coin(&mut self) -> bool {
        self.inner.next_u64() >> 63 == 1
    }

    /// Sample from Beta(alpha, alpha).
    pub fn beta_symmetric(&mut self, alpha: f64) -> Result<f64> {
        let dist = Beta::new(alpha, alpha)
            .map_err(|e| Error::InvalidParam(alloc::format!("beta alpha={alpha}: {e}")))?;
        Ok(dist.sample(&mut self.inner))
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

fn libm_ln(v: f64) -> f64 {
    num_traits::Float::ln(v)
}
