//! Seeded randomness with a pinned generator.
//!
//! Every stochastic choice in this crate flows through [`SeededRng`], a thin
//! wrapper over the ChaCha8 stream cipher. The keystream is fixed by the
//! cipher definition, so equal seeds reproduce equal draws across platforms
//! and releases. Independent consumers derive independent streams from a
//! textual tag (FNV-1a hashed into the stream number), so adding one consumer
//! never shifts the draws seen by another.
//!
//! Distribution code is deliberately in-crate rather than delegated to a
//! distributions library: uniform doubles use the 53-bit mantissa method,
//! bounded integers use rejection sampling, categorical draws walk the CDF,
//! and exponentials invert the CDF. Bit-level output therefore depends only
//! on the ChaCha8 keystream.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 64-bit FNV-1a. Stable tag -> stream mapping.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic random source: ChaCha8 keyed by a u64 seed.
pub struct SeededRng {
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Same seed, independent stream per tag.
    pub fn stream(seed: u64, tag: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a64(tag.as_bytes()));
        SeededRng { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1), 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in 0..n, unbiased via rejection. n must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - u64::MAX % n;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Index drawn from nonnegative weights by walking the cumulative sum.
    /// Consumes exactly one uniform. Weights need not be normalized; if
    /// rounding pushes the draw past the final cumulative value, the last
    /// positive-weight index is returned.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        assert!(!weights.is_empty(), "categorical over no weights");
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "categorical weights sum to zero");
        let u = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                last_positive = i;
            }
            acc += w;
            if u < acc {
                return i;
            }
        }
        last_positive
    }

    /// Exponential with the given mean, by inverse CDF. One uniform consumed.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        assert!(mean > 0.0, "exponential mean must be positive");
        // uniform() < 1, so ln(1-u) is finite.
        -mean * (1.0 - self.uniform()).ln()
    }

    /// m distinct indices from 0..n by partial Fisher-Yates, in draw order.
    pub fn sample_indices(&mut self, n: usize, m: usize) -> Vec<usize> {
        assert!(m <= n, "cannot sample {m} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..m {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool
    }
}
