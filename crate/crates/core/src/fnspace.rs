//! Discretized function spaces.
//!
//! A [`Grid`] is either the uniform left-endpoint grid `x_i = i·h` on `[0,1]`
//! with quadrature weight `h = 1/n`, or a counting grid (weight 1) standing in
//! for a truncated sequence space. [`GridFunction`] carries samples plus the
//! exponent `p` of the norm it lives in; [`DualFunctional`] carries samples of
//! an element of the dual, paired through `h·Σ conj(g_i) f_i`.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Uniform left-endpoint nodes on `[0,1]`, weight `1/n`.
    UnitInterval,
    /// Indices `0..n` with unit weight (truncated `ℓ_p`, `C(K)` for finite `K`).
    Counting,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    n_points: usize,
    kind: GridKind,
}

impl Grid {
    pub fn unit_interval(n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(LabError::InvalidGrid("grid needs at least one node".into()));
        }
        Ok(Self { n_points, kind: GridKind::UnitInterval })
    }

    pub fn sequence(n_points: usize) -> Result<Self> {
        if n_points == 0 {
            return Err(LabError::InvalidGrid("sequence space needs at least one coordinate".into()));
        }
        Ok(Self { n_points, kind: GridKind::Counting })
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.n_points == 0
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Quadrature weight of a single node.
    pub fn h(&self) -> f64 {
        match self.kind {
            GridKind::UnitInterval => 1.0 / self.n_points as f64,
            GridKind::Counting => 1.0,
        }
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.node(i)).collect()
    }

    pub(crate) fn check_len(&self, got: usize) -> Result<()> {
        if got != self.n_points {
            return Err(LabError::LengthMismatch { expected: self.n_points, got });
        }
        Ok(())
    }
}

/// Conjugate exponent `q` with `1/p + 1/q = 1` (`1 ↔ ∞`).
pub fn conjugate_exponent(p: f64) -> f64 {
    if p == 1.0 {
        f64::INFINITY
    } else if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(LabError::InvalidExponent(p));
    }
    Ok(())
}

/// `(weight·Σ|s_i|^p)^(1/p)`, or `max|s_i|` for `p = ∞`.
pub(crate) fn weighted_lp<T: Scalar>(samples: &[T], weight: f64, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if samples.is_empty() {
        return Err(LabError::ZeroVector);
    }
    if p.is_infinite() {
        return Ok(samples.iter().map(|s| s.modulus()).fold(0.0, f64::max));
    }
    // scale by the largest entry so huge and tiny samples neither overflow nor underflow
    let peak = samples.iter().map(|s| s.modulus()).fold(0.0, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return Ok(peak);
    }
    let sum: f64 = if p == 2.0 {
        samples.iter().map(|s| (s.modulus() / peak).powi(2)).sum()
    } else {
        samples.iter().map(|s| (s.modulus() / peak).powf(p)).sum()
    };
    Ok(peak * (weight * sum).powf(1.0 / p))
}

/// Samples of a function on a [`Grid`], measured in `L_p`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T: Scalar = f64> {
    grid: Grid,
    samples: Vec<T>,
    p: f64,
}

/// An element of a truncated sequence space `ℓ_p`.
pub type SeqVector<T = f64> = GridFunction<T>;

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: Grid, samples: Vec<T>, p: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        check_exponent(p)?;
        Ok(Self { grid, samples, p })
    }

    pub fn from_fn(grid: Grid, p: f64, f: impl Fn(f64) -> T) -> Result<Self> {
        let samples = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, samples, p)
    }

    pub fn constant(grid: Grid, value: T, p: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.len()], p)
    }

    pub fn zeros(grid: Grid, p: f64) -> Result<Self> {
        Self::constant(grid, T::zero(), p)
    }

    /// Basis vector `e_index` of a sequence space (or a node spike on an interval grid).
    pub fn basis(grid: Grid, index: usize, p: f64) -> Result<Self> {
        if index >= grid.len() {
            return Err(LabError::InvalidArgument(format!(
                "basis index {index} outside 0..{}",
                grid.len()
            )));
        }
        let mut samples = vec![T::zero(); grid.len()];
        samples[index] = T::one();
        Self::new(grid, samples, p)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same samples, different exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Self::new(self.grid, self.samples.clone(), p)
    }

    /// Norm in the function's own exponent.
    pub fn norm(&self) -> f64 {
        weighted_lp(&self.samples, self.grid.h(), self.p).unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|s| s.is_zero())
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { grid: self.grid, samples: self.samples.iter().map(|&s| s * c).collect(), p: self.p }
    }

    pub fn map(&self, f: impl Fn(f64, T) -> T) -> Self {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, &s)| f(self.grid.node(i), s))
            .collect();
        Self { grid: self.grid, samples, p: self.p }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, samples, p: self.p })
    }

    /// Largest `|f_i − g_i|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        Ok(self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(&a, &b)| (a - b).modulus())
            .fold(0.0, f64::max))
    }
}

/// Element of the dual space, represented by samples paired through the quadrature rule.
#[derive(Clone, Debug, PartialEq)]
pub struct DualFunctional<T: Scalar = f64> {
    grid: Grid,
    samples: Vec<T>,
    q: f64,
}

impl<T: Scalar> DualFunctional<T> {
    pub fn new(grid: Grid, samples: Vec<T>, q: f64) -> Result<Self> {
        grid.check_len(samples.len())?;
        check_exponent(q)?;
        Ok(Self { grid, samples, q })
    }

    pub fn from_fn(grid: Grid, q: f64, f: impl Fn(f64) -> T) -> Result<Self> {
        let samples = grid.nodes().into_iter().map(f).collect();
        Self::new(grid, samples, q)
    }

    /// The functional whose samples are those of `f`, measured in the conjugate exponent of `f.p()`.
    pub fn riesz(f: &GridFunction<T>) -> Self {
        Self { grid: f.grid, samples: f.samples.clone(), q: conjugate_exponent(f.p) }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Dual norm `‖g‖_q`.
    pub fn norm(&self) -> f64 {
        weighted_lp(&self.samples, self.grid.h(), self.q).unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.samples.iter().all(|s| s.is_zero())
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { grid: self.grid, samples: self.samples.iter().map(|&s| s * c).collect(), q: self.q }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(&a, &b)| a + b).collect();
        Ok(Self { grid: self.grid, samples, q: self.q })
    }
}

pub fn lp_norm<T: Scalar>(f: &GridFunction<T>, p: f64) -> Result<f64> {
    weighted_lp(&f.samples, f.grid.h(), p)
}

/// Quadrature pairing `h·Σ conj(g_i)·f_i` (conjugate-linear in `g`).
pub fn pair<T: Scalar>(g: &DualFunctional<T>, f: &GridFunction<T>) -> Result<T> {
    if g.grid != f.grid {
        return Err(LabError::GridMismatch);
    }
    Ok(pair_slices(&g.samples, &f.samples, f.grid.h()))
}

pub(crate) fn pair_slices<T: Scalar>(g: &[T], f: &[T], weight: f64) -> T {
    let s = g.iter().zip(f).fold(T::zero(), |acc, (&a, &b)| acc + a.conjugate() * b);
    s * T::from_real(weight)
}

/// Exponents of the scaled norming family: the dual has type `p`, the point
/// norms are `q`-summable, `1 ≤ q < p ≤ 2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormingExponents {
    pub p: f64,
    pub q: f64,
}

impl NormingExponents {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(1.0 < p && p <= 2.0) {
            return Err(LabError::InvalidExponent(p));
        }
        if !(1.0 <= q && q < p) {
            return Err(LabError::InvalidExponent(q));
        }
        Ok(Self { p, q })
    }

    /// Summability exponent `r = pq/(p−q)` of `|f_n(x_n)|^{-1}`.
    pub fn r(&self) -> f64 {
        self.p * self.q / (self.p - self.q)
    }
}

/// Unit-norm functional attaining the norm of `f` in `L_p`, `1 < p < ∞`:
/// `g_i = sign(f_i)|f_i|^{p−1}/‖f‖_p^{p−1}`.
pub fn norming_functional<T: Scalar>(f: &GridFunction<T>, p: f64) -> Result<DualFunctional<T>> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(LabError::InvalidExponent(p));
    }
    let norm = lp_norm(f, p)?;
    if norm == 0.0 {
        return Err(LabError::ZeroVector);
    }
    let samples = f
        .samples
        .iter()
        .map(|&s| {
            let m = s.modulus();
            if m == 0.0 {
                T::zero()
            } else {
                let ratio = m / norm;
                // sign(s)·ratio^{p−1}, written to avoid |s|^{p−1} overflow
                s * T::from_real(ratio.powf(p - 1.0) / m)
            }
        })
        .collect();
    DualFunctional::new(f.grid, samples, conjugate_exponent(p))
}

/// Norming functional rescaled to `‖g‖ = ‖f‖^{−q/p}`, so `pair(g, f) = ‖f‖^{(p−q)/p}`.
/// `space_p` is the exponent of the ambient `L_p`/`ℓ_p` norm.
pub fn scaled_norming_functional<T: Scalar>(
    f: &GridFunction<T>,
    space_p: f64,
    exps: NormingExponents,
) -> Result<DualFunctional<T>> {
    let unit = norming_functional(f, space_p)?;
    let norm = lp_norm(f, space_p)?;
    let scale = norm.powf(-exps.q / exps.p);
    Ok(unit.scaled(T::from_real(scale)))
}

/// L₂ norm of the forward-difference derivative: the discrete `W^{1,2}_0` seminorm.
pub fn derivative_l2_norm<T: Scalar>(f: &GridFunction<T>) -> Result<f64> {
    let n = f.len();
    if n < 2 {
        return Err(LabError::GridTooSmall { needed: 2, got: n });
    }
    let h = f.grid.h();
    let diffs: Vec<T> = f
        .samples
        .windows(2)
        .map(|w| (w[1] - w[0]) * T::from_real(1.0 / h))
        .collect();
    weighted_lp(&diffs, h, 2.0)
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    index: usize,
    node: f64,
    value_re: f64,
    value_im: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    p: f64,
    n_points: usize,
    kind: GridKind,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `index,node,value_re,value_im` rows and a JSON sidecar (same stem) holding `p`.
pub fn write_csv<T: Scalar>(f: &GridFunction<T>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (i, &s) in f.samples.iter().enumerate() {
        w.serialize(CsvRow { index: i, node: f.grid.node(i), value_re: s.re_part(), value_im: s.im_part() })?;
    }
    w.flush()?;
    let side = Sidecar { p: f.p, n_points: f.grid.len(), kind: f.grid.kind() };
    // serde_json writes p = ∞ as null; the reader maps null back
    serde_json::to_writer_pretty(File::create(sidecar_path(path))?, &side)?;
    Ok(())
}

pub fn read_csv<T: Scalar>(path: &Path) -> Result<GridFunction<T>> {
    let side: serde_json::Value = serde_json::from_reader(File::open(sidecar_path(path))?)?;
    let p = side.get("p").and_then(|v| v.as_f64()).unwrap_or(f64::INFINITY);
    let kind: GridKind = serde_json::from_value(side["kind"].clone())?;
    let n = side["n_points"]
        .as_u64()
        .ok_or_else(|| LabError::InvalidArgument("sidecar lacks n_points".into()))? as usize;
    let grid = match kind {
        GridKind::UnitInterval => Grid::unit_interval(n)?,
        GridKind::Counting => Grid::sequence(n)?,
    };
    let mut r = csv::Reader::from_path(path)?;
    let mut samples = vec![T::zero(); n];
    let mut seen = 0;
    for row in r.deserialize() {
        let row: CsvRow = row?;
        if row.index >= n {
            return Err(LabError::LengthMismatch { expected: n, got: row.index + 1 });
        }
        if !T::IS_COMPLEX && row.value_im != 0.0 {
            return Err(LabError::InvalidArgument(format!(
                "row {} has an imaginary part but the target field is real",
                row.index
            )));
        }
        samples[row.index] = T::from_parts(row.value_re, row.value_im);
        seen += 1;
    }
    grid.check_len(seen)?;
    GridFunction::new(grid, samples, p)
}
