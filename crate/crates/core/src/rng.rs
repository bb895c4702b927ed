//! Seeded randomness: ChaCha20 streams and Box–Muller normals.
//!
//! A run is addressed by `(seed, stream)`; independent trials use distinct
//! streams of the same seed, so each trial can be replayed on its own.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::fnspace::{DualFunctional, Grid, GridFunction};

/// ChaCha20 keyed by `seed` and positioned on `stream`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normals via the Box–Muller transform.
///
/// Each pair of normals consumes two uniforms `u₁ ∈ (0,1]`, `u₂ ∈ [0,1)` drawn as
/// 53-bit fractions: `√(−2 ln u₁)·(cos 2πu₂, sin 2πu₂)`.
pub struct Normals<R> {
    rng: R,
    spare: Option<f64>,
}

impl<R: Rng> Normals<R> {
    pub fn new(rng: R) -> Self {
        Self { rng, spare: None }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.random::<f64>();
        let u2: f64 = self.rng.random();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (TAU * u2).sin_cos();
        self.spare = Some(radius * s);
        radius * c
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|z| *z = self.next_normal());
    }

    pub fn take(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.next_normal()).collect()
    }

    pub fn rng_mut(&mut self) -> &mut R {
        &mut self.rng
    }
}

/// Normals on `(seed, stream)`.
pub fn normals(seed: u64, stream: u64) -> Normals<ChaCha20Rng> {
    Normals::new(stream_rng(seed, stream))
}

/// `1 + 0.3·Σ_{k=1}^{3} c_k cos(kπx)`, `c_k ∈ [−1, 1]`: smooth and bounded below by 0.1.
pub fn smooth_positive(grid: Grid, p: f64, seed: u64, stream: u64) -> GridFunction<f64> {
    let mut rng = stream_rng(seed, stream);
    let c: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..=1.0)).collect();
    GridFunction::from_fn(grid, p, |x| {
        1.0 + 0.3
            * c.iter()
                .enumerate()
                .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x).cos())
                .sum::<f64>()
    })
    .expect("grid-sized samples")
}

/// `c₀ + Σ_{k=1}^{4} c_k sin(kπx)` with standard normal `c_k`; not sign-definite.
pub fn smooth_signed(grid: Grid, p: f64, seed: u64, stream: u64) -> GridFunction<f64> {
    let c = normals(seed, stream).take(5);
    GridFunction::from_fn(grid, p, |x| {
        c[0] + c.iter()
            .skip(1)
            .enumerate()
            .map(|(k, ck)| ck * ((k + 1) as f64 * std::f64::consts::PI * x).sin())
            .sum::<f64>()
    })
    .expect("grid-sized samples")
}

/// Functional with independent standard normal samples.
pub fn random_functional(grid: Grid, q: f64, seed: u64, stream: u64) -> DualFunctional<f64> {
    DualFunctional::new(grid, normals(seed, stream).take(grid.len()), q).expect("grid-sized samples")
}
