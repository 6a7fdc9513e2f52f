//! Deterministic random streams.
//!
//! Every stream is a xoshiro256++ generator seeded from a 64-bit value
//! through SplitMix64 state expansion. Child streams are derived from the
//! parent *seed* (not its current state), so `split(i)` gives the same child
//! no matter how many values the parent has already produced. Normal draws
//! use the ziggurat sampler from `rand_distr`.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A single-owner deterministic pseudo-random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

/// Creates the stream fully determined by `seed`.
pub fn seeded_stream(seed: u64) -> RngStream {
    RngStream::new(seed)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream `i`. Children with distinct indices are independent.
    pub fn split(&self, i: u64) -> RngStream {
        let child = splitmix64(self.seed ^ splitmix64(i.wrapping_mul(GOLDEN_GAMMA) ^ 0x5EED));
        RngStream::new(child)
    }

    /// Uniform in `[0, 1)` with 53 bits of resolution.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    #[inline]
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_uniform()
    }

    #[inline]
    pub fn next_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }
}

impl RngCore for RngStream {
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
