use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Deterministic random stream.
///
/// Uniform words come from ChaCha8 keyed by `seed`; an optional stream id
/// selects an independent sub-stream, which is how per-sentence and
/// per-example generators are derived without sharing state.
///
/// Gaussian draws use the basic Box–Muller transform: two uniforms
/// `u1 ∈ (0, 1]`, `u2 ∈ [0, 1)` give `r = sqrt(-2 ln u1)` and the pair
/// `(r cos 2πu2, r sin 2πu2)`. The cosine value is returned first and the
/// sine value is cached for the next call.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn for_stream(seed: u64, stream: u64) -> Self {
        let mut rng = SeededRng::new(seed);
        rng.inner.set_stream(stream);
        rng
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random mantissa bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. Uses rejection to avoid modulo bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Zero-mean normal sample with standard deviation `stddev`.
pub fn gaussian_noise(rng: &mut SeededRng, stddev: f64) -> Result<f64> {
    if !(stddev >= 0.0) {
        return Err(Error::invalid(format!("gaussian_noise: stddev must be >= 0, got {stddev}")));
    }
    if stddev == 0.0 {
        return Ok(0.0);
    }
    Ok(stddev * rng.standard_normal())
}
