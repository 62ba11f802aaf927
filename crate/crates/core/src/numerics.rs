//! Complex vector arithmetic and the seeded random source.
//!
//! Every stochastic draw in the crate goes through [`RandomSource`], a thin
//! wrapper around xoshiro256++ seeded via SplitMix64. Uniforms take the top 53
//! bits of one 64-bit output; Gaussians use Box–Muller and consume exactly two
//! uniforms per pair of normal deviates.

use std::f64::consts::PI;
use std::ops::Index;

use num_complex::Complex64;
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// Name of the generator, recorded in experiment metadata.
pub const RNG_ALGORITHM: &str = "xoshiro256++ (splitmix64 seeding, 53-bit uniforms, Box-Muller)";

/// Fixed-length complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexVec(Vec<Complex64>);

impl ComplexVec {
    pub fn new(elements: Vec<Complex64>) -> Self {
        ComplexVec(elements)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Complex64> {
        self.0.iter()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Hermitian inner product `x^H y`.
    pub fn inner(&self, other: &ComplexVec) -> Result<Complex64> {
        inner_product(self, other)
    }
}

impl Index<usize> for ComplexVec {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.0[i]
    }
}

impl From<Vec<Complex64>> for ComplexVec {
    fn from(v: Vec<Complex64>) -> Self {
        ComplexVec(v)
    }
}

/// Returns `Σ conj(x_i)·y_i`.
pub fn inner_product(x: &ComplexVec, y: &ComplexVec) -> Result<Complex64> {
    if x.len() != y.len() {
        return Err(Error::Dimension(format!(
            "inner product of lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum())
}

/// Derives an independent child seed for stream `index` of `parent`.
///
/// SplitMix64 finalizer over the parent seed mixed with the stream index.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    let mut z = parent ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seeded, single-owner pseudo-random source.
#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: Xoshiro256PlusPlus,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        RandomSource {
            seed,
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child source for an independent stream; does not advance `self`.
    pub fn child(&self, index: u64) -> RandomSource {
        RandomSource::new(derive_seed(self.seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw on `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on `[lo, hi)`; returns `lo` when the interval is degenerate.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::Domain(format!("uniform bounds lo={lo} > hi={hi}")));
        }
        let u = self.next_unit();
        let v = lo + (hi - lo) * u;
        // lo + (hi-lo)*u can round up to hi for u close to 1.
        Ok(if v >= hi && hi > lo { hi.next_down().max(lo) } else { v })
    }

    /// Two independent N(0, sigma²) draws from exactly two uniforms.
    pub fn gaussian2(&mut self, sigma: f64) -> Result<(f64, f64)> {
        if !(sigma >= 0.0) {
            return Err(Error::Domain(format!("negative standard deviation {sigma}")));
        }
        let u1 = self.next_unit();
        let u2 = self.next_unit();
        if sigma == 0.0 {
            return Ok((0.0, 0.0));
        }
        // 1 - u1 lies in (0, 1], keeping the logarithm finite.
        let radius = sigma * (-2.0 * (1.0 - u1).ln()).sqrt();
        let angle = 2.0 * PI * u2;
        Ok((radius * angle.cos(), radius * angle.sin()))
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_unit() * n as f64) as usize).min(n - 1)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
