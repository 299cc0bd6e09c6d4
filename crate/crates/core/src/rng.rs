//! Seeded pseudo-random source shared by every stochastic stage.
//!
//! All randomness comes from ChaCha8 keyed through
//! [`rand::SeedableRng::seed_from_u64`], whose seed expansion is fixed by
//! `rand_core` and therefore stable across platforms. Bounded integers are
//! drawn with [`SeededRng::below`], a plain rejection sampler on the raw
//! 64-bit stream, so split permutations do not depend on how any particular
//! `rand` release maps words onto ranges.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Per-stage seed offsets so one user seed fans out to independent streams.
pub mod stage {
    pub const SPLIT: u64 = 0;
    pub const EMBEDDING: u64 = 1;
    pub const SOLVER: u64 = 2;
    pub const PROJECTION: u64 = 3;
    pub const SUBSAMPLE: u64 = 4;
}

#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream for one pipeline stage derived from the user seed.
    pub fn for_stage(seed: u64, stage: u64) -> Self {
        Self::new(seed.wrapping_add(stage))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        // Largest multiple of n that fits; reject words above it.
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let x = self.inner.next_u64();
            if x <= zone {
                return (x % n) as usize;
            }
        }
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Fisher–Yates shuffle driven by [`Self::below`].
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Returns `0..n` in a seeded random order.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}
