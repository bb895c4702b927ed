//! The discrete convolution algebra and the commutator calculus around `V` and `M`.
//!
//! A kernel `a` sampled on the grid acts as `M_a = h·Σₖ aₖJᵏ` (`J` the
//! subdiagonal shift). Products of such operators go through
//! [`symmetric_convolution`], so `M_a·M_b = M_b·M_a` with a zero residual.

use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fnspace::{conjugate_exponent, lp_norm, pair, DualFunctional, Grid, GridFunction};
use crate::linop::{symmetric_convolution, LinOp, Structure};
use crate::operators::volterra;
use crate::Scalar;

/// A kernel of the convolution algebra.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvElement<T: Scalar = f64> {
    grid: Grid,
    coeffs: Vec<T>,
}

impl<T: Scalar> ConvElement<T> {
    pub fn new(grid: Grid, coeffs: Vec<T>) -> Result<Self> {
        grid.check_len(coeffs.len())?;
        Ok(Self { grid, coeffs })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> T) -> Self {
        Self { grid, coeffs: grid.nodes().into_iter().map(f).collect() }
    }

    pub fn from_function(f: &GridFunction<T>) -> Self {
        Self { grid: f.grid(), coeffs: f.samples().to_vec() }
    }

    /// The constant kernel `𝟙`; `M_𝟙 = V`.
    pub fn one(grid: Grid) -> Self {
        Self::from_fn(grid, |_| T::one())
    }

    /// The kernel `x`; `M_x = [M, V]`.
    pub fn coordinate(grid: Grid) -> Self {
        Self::from_fn(grid, T::from_real)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    /// `M_a`, the convolution operator `f ↦ a⋆f`.
    pub fn matrix(&self) -> LinOp<T> {
        LinOp::lower_toeplitz(self.grid, self.coeffs.clone(), self.grid.h()).expect("kernel matches grid")
    }

    pub fn to_function(&self, p: f64) -> Result<GridFunction<T>> {
        GridFunction::new(self.grid, self.coeffs.clone(), p)
    }

    pub fn star(&self, other: &Self) -> Result<Self> {
        star(self, other)
    }

    /// The kernel `x·a(x)`.
    pub fn times_x(&self) -> Self {
        let coeffs = self.coeffs.iter().zip(self.grid.nodes()).map(|(&a, x)| a * T::from_real(x)).collect();
        Self { grid: self.grid, coeffs }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        Ok(self.coeffs.iter().zip(&other.coeffs).map(|(&a, &b)| (a - b).modulus()).fold(0.0, f64::max))
    }
}

/// `(a⋆b)_i = h·Σ_{k≤i} a_k b_{i−k}`, commutative bit for bit.
pub fn star<T: Scalar>(a: &ConvElement<T>, b: &ConvElement<T>) -> Result<ConvElement<T>> {
    if a.grid != b.grid {
        return Err(LabError::LengthMismatch { expected: a.coeffs.len(), got: b.coeffs.len() });
    }
    let h = T::from_real(a.grid.h());
    let coeffs = symmetric_convolution(&a.coeffs, &b.coeffs).into_iter().map(|c| c * h).collect();
    Ok(ConvElement { grid: a.grid, coeffs })
}

/// `[A, B] = AB − BA`, retagged as Toeplitz or diagonal when the result is exactly so.
pub fn commutator<T: Scalar>(a: &LinOp<T>, b: &LinOp<T>) -> Result<LinOp<T>> {
    Ok(a.compose(b)?.sub(&b.compose(a)?)?.detect_structure())
}

/// Residual of `TⁿM − MTⁿ = nSTⁿ⁻¹`, `S = [T, M]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerResidual {
    pub n: u32,
    /// Spectral norm of `TⁿM − MTⁿ − nSTⁿ⁻¹`.
    pub residual: f64,
    /// `max(‖TⁿM‖, ‖MTⁿ‖)`, the size of the terms that cancel.
    pub scale: f64,
}

impl DerResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            self.residual
        } else {
            self.residual / self.scale
        }
    }
}

/// Checks `[T, [T, M]] = 0` with a zero residual.
fn checked_derivation<T: Scalar>(t: &LinOp<T>, m: &LinOp<T>) -> Result<LinOp<T>> {
    let s = commutator(t, m)?;
    let ts = commutator(t, &s)?;
    if !ts.is_zero() {
        return Err(LabError::NonCommutingDerivation { residual: ts.max_abs() });
    }
    Ok(s)
}

pub fn der_identity_residual<T: Scalar>(t: &LinOp<T>, m: &LinOp<T>, n: u32) -> Result<DerResidual> {
    if n == 0 {
        return Err(LabError::InvalidArgument("der identity needs n ≥ 1".into()));
    }
    let s = checked_derivation(t, m)?;
    let tn1 = t.pow(n - 1)?;
    let tn = tn1.compose(t)?;
    let tnm = tn.compose(m)?;
    let mtn = m.compose(&tn)?;
    let rhs = s.compose(&tn1)?.scale(T::from_real(f64::from(n)));
    let r = tnm.sub(&mtn)?.sub(&rhs)?;
    Ok(DerResidual { n, residual: r.op_norm(), scale: tnm.op_norm().max(mtn.op_norm()) })
}

/// Operators `B, C, S, R` commuting with `T`, built from the kernels `u, v`.
#[derive(Clone, Debug)]
pub struct WitnessSet {
    pub t: LinOp<f64>,
    pub m: LinOp<f64>,
    pub b: LinOp<f64>,
    pub c: LinOp<f64>,
    pub s: LinOp<f64>,
    pub r: LinOp<f64>,
    pub u: GridFunction<f64>,
    pub v: GridFunction<f64>,
}

/// `C = M_u`, `B = M_v`, `S = [T, M]`, `R = V²`, with `Cv = Bu` and the four
/// commutations with `T` checked to a zero residual.
pub fn witness_builder(
    t: &LinOp<f64>,
    u: &GridFunction<f64>,
    v: &GridFunction<f64>,
    m: &LinOp<f64>,
) -> Result<WitnessSet> {
    if t.structure() != Structure::LowerToeplitz {
        return Err(LabError::NotConvolution);
    }
    let grid = t.grid();
    if u.grid() != grid || v.grid() != grid || m.grid() != grid {
        return Err(LabError::GridMismatch);
    }
    if u.is_zero() {
        return Err(LabError::ZeroVector);
    }
    let s = checked_derivation(t, m)?;
    let c = ConvElement::from_function(u).matrix();
    let b = ConvElement::from_function(v).matrix();
    let vol = volterra::<f64>(grid);
    let r = vol.compose(&vol)?;

    let cv = c.apply(v)?;
    let bu = b.apply(u)?;
    if cv.samples() != bu.samples() {
        return Err(LabError::WitnessViolation(format!(
            "Cv and Bu differ by {:e}",
            cv.max_abs_diff(&bu)?
        )));
    }
    for (name, op) in [("B", &b), ("C", &c), ("R", &r), ("S", &s)] {
        let k = commutator(t, op)?;
        if !k.is_zero() {
            return Err(LabError::WitnessViolation(format!("[T, {name}] has entries up to {:e}", k.max_abs())));
        }
    }
    Ok(WitnessSet { t: t.clone(), m: m.clone(), b, c, s, r, u: u.clone(), v: v.clone() })
}

/// Witness kernels `u = w⋆y`, `v = w⋆(My)` with `y = Rx`, for which `CMy = By`
/// reduces to the commutativity and associativity of `⋆`.
pub fn matched_kernels(
    w: &GridFunction<f64>,
    x: &GridFunction<f64>,
) -> Result<(GridFunction<f64>, GridFunction<f64>)> {
    let grid = x.grid();
    let vol = volterra::<f64>(grid);
    let y = vol.apply(&vol.apply(x)?)?;
    let my = ConvElement::from_function(&y).times_x();
    let wk = ConvElement::from_function(w);
    let u = star(&wk, &ConvElement::from_function(&y))?;
    let v = star(&wk, &my)?;
    Ok((u.to_function(x.p())?, v.to_function(x.p())?))
}

/// One step of the orbit inequality `|h(CS·RTⁿx)| ≤ ‖(B−CM)*h‖(n+1)⁻¹‖RTⁿx‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct G1Row {
    pub n: usize,
    pub log_lhs: f64,
    /// Right side with `‖RTⁿx‖_p`.
    pub log_rhs: f64,
    /// `1 − lhs/rhs`; the inequality holds iff this is nonnegative.
    pub margin: f64,
    /// Right side with `‖RTⁿ⁺¹x‖_p`, which the exact identity bounds directly.
    pub log_rhs_sharp: f64,
    /// Relative residual of `(n+1)h(CSTⁿy) = h((B−CM)Tⁿ⁺¹y)`.
    pub chain_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct G1Report {
    pub rows: Vec<G1Row>,
    /// `‖(B − CM)*h‖_q`.
    pub constant: f64,
    /// Relative residual of `CMy = By`, `y = Rx`.
    pub hypothesis_residual: f64,
}

impl G1Report {
    pub fn min_margin(&self) -> f64 {
        self.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn max_chain_residual(&self) -> f64 {
        self.rows.iter().map(|r| r.chain_residual).fold(0.0, f64::max)
    }
}

const HYPOTHESIS_TOL: f64 = 1e-10;

fn ln_abs(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.abs().ln()
    }
}

/// Evaluates the orbit inequality for `n = 0..=n_max` in the log domain.
///
/// The norm exponent is `x.p()`; `hfun` is measured in the conjugate exponent.
/// Fails when `CMy ≠ By` beyond rounding (`y = Rx`), since the bound is then unproven.
pub fn g1_margin(
    w: &WitnessSet,
    x: &GridFunction<f64>,
    hfun: &DualFunctional<f64>,
    n_max: usize,
) -> Result<G1Report> {
    let p = x.p();
    let q = conjugate_exponent(p);
    let y = w.r.apply(x)?;
    if y.is_zero() {
        return Err(LabError::ZeroVector);
    }
    let cmy = w.c.apply(&w.m.apply(&y)?)?;
    let by = w.b.apply(&y)?;
    let hyp_scale = lp_norm(&cmy, p)?.max(lp_norm(&by, p)?);
    let hypothesis_residual =
        if hyp_scale == 0.0 { 0.0 } else { lp_norm(&cmy.sub(&by)?, p)? / hyp_scale };
    if hypothesis_residual.is_nan() || hypothesis_residual > HYPOTHESIS_TOL {
        return Err(LabError::WitnessViolation(format!("CMRx and BRx differ, relative {hypothesis_residual:e}")));
    }

    let cs = w.c.compose(&w.s)?;
    let cm = w.c.compose(&w.m)?;
    let b_cm = w.b.sub(&cm)?;
    let hq = DualFunctional::new(hfun.grid(), hfun.samples().to_vec(), q)?;
    let constant = b_cm.apply_dual(&hq)?.norm();
    let ln_c = ln_abs(constant);
    let h_norm = hq.norm();

    let mut rows = Vec::with_capacity(n_max + 1);
    let y_norm = lp_norm(&y, p)?;
    let mut unit = y.scaled(1.0 / y_norm);
    let mut log_scale = y_norm.ln();
    for n in 0..=n_max {
        let next = w.t.apply(&unit)?;
        let next_norm = lp_norm(&next, p)?;
        if next_norm == 0.0 {
            return Err(LabError::ZeroOrbit { step: n + 1 });
        }
        let a = pair(&hq, &w.c.apply(&w.s.apply(&unit)?)?)? * (n + 1) as f64;
        let bz = w.b.apply(&next)?;
        let cmz = cm.apply(&next)?;
        let b = pair(&hq, &bz.sub(&cmz)?)?;
        let chain_scale = h_norm * (lp_norm(&bz, p)? + lp_norm(&cmz, p)?);
        let chain_residual = if chain_scale == 0.0 { 0.0 } else { (a - b).abs() / chain_scale };

        let log_lhs = ln_abs(pair(&hq, &cs.apply(&unit)?)?) + log_scale;
        let ln_n1 = ((n + 1) as f64).ln();
        let log_rhs = ln_c - ln_n1 + log_scale;
        let log_rhs_sharp = ln_c - ln_n1 + log_scale + next_norm.ln();
        let margin = if log_lhs == f64::NEG_INFINITY {
            if constant == 0.0 { 0.0 } else { 1.0 }
        } else {
            1.0 - (log_lhs - log_rhs).exp()
        };
        rows.push(G1Row { n, log_lhs, log_rhs, margin, log_rhs_sharp, chain_residual });

        unit = next.scaled(1.0 / next_norm);
        log_scale += next_norm.ln();
    }
    Ok(G1Report { rows, constant, hypothesis_residual })
}

impl WitnessSet {
    /// `g = S*C*h`, the functional whose orbit values the inequality bounds.
    pub fn orbit_functional(&self, hfun: &DualFunctional<f64>) -> Result<DualFunctional<f64>> {
        self.s.apply_dual(&self.c.apply_dual(hfun)?)
    }
}

/// Nullity of `X ↦ (XA − AX, XB − BX)` with the gap around the zero threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutantReport {
    pub dimension: usize,
    /// `σ_last nonzero / σ_first zero`; infinite if the first zero is exactly 0,
    /// absent when no singular value falls below the threshold.
    pub gap: Option<f64>,
    pub sigma_max: f64,
}

/// Largest `N` accepted by [`joint_commutant_dimension`] (the system is `2N² × N²`).
pub const MAX_COMMUTANT_DIM: usize = 64;

/// Threshold below which a singular value counts as zero, relative to `σ_max`.
pub const COMMUTANT_ZERO_TOL: f64 = 1e-10;

pub fn joint_commutant_dimension<T: Scalar>(a: &LinOp<T>, b: &LinOp<T>) -> Result<CommutantReport> {
    if a.grid() != b.grid() {
        return Err(LabError::GridMismatch);
    }
    let n = a.dim();
    if n > MAX_COMMUTANT_DIM {
        return Err(LabError::DimensionTooLarge { got: n, max: MAX_COMMUTANT_DIM });
    }
    let nn = n * n;
    let mut k = DMatrix::<T>::zeros(2 * nn, nn);
    for (block, op) in [a, b].into_iter().enumerate() {
        let m = op.to_dense();
        // vec(XA) = (Aᵀ ⊗ I)vec X, vec(AX) = (I ⊗ A)vec X, column-major vec
        for j in 0..n {
            for l in 0..n {
                let coef = m[(l, j)];
                if !coef.is_zero() {
                    for i in 0..n {
                        k[(block * nn + j * n + i, l * n + i)] += coef;
                    }
                }
                let coef = m[(j, l)];
                if !coef.is_zero() {
                    for c in 0..n {
                        k[(block * nn + c * n + j, c * n + l)] -= coef;
                    }
                }
            }
        }
    }
    let mut sv: Vec<f64> = SVD::new(k, false, false).singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let threshold = COMMUTANT_ZERO_TOL * sigma_max;
    let rank = sv.iter().filter(|&&s| s > threshold).count();
    let dimension = nn - rank;
    let gap = if dimension == 0 || rank == 0 {
        None
    } else if sv[rank] == 0.0 {
        Some(f64::INFINITY)
    } else {
        Some(sv[rank - 1] / sv[rank])
    };
    Ok(CommutantReport { dimension, gap, sigma_max })
}

/// `rₙ = ‖Aⁿx‖^{1/n}` for `n = 1..=n_max`, in the norm of `x`.
pub fn quasinilpotency_probe<T: Scalar>(a: &LinOp<T>, x: &GridFunction<T>, n_max: usize) -> Result<Vec<f64>> {
    if n_max < 2 {
        return Err(LabError::InvalidArgument("quasinilpotency probe needs n_max ≥ 2".into()));
    }
    let norm0 = x.norm();
    if norm0 == 0.0 {
        return Err(LabError::ZeroVector);
    }
    let mut unit = x.scaled(T::from_real(1.0 / norm0));
    let mut log_norm = norm0.ln();
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let next = a.apply(&unit)?;
        let s = next.norm();
        if s == 0.0 {
            out.extend(std::iter::repeat_n(0.0, n_max + 1 - n));
            break;
        }
        log_norm += s.ln();
        unit = next.scaled(T::from_real(1.0 / s));
        out.push((log_norm / n as f64).exp());
    }
    Ok(out)
}

/// Sup-norm residual of `M(a⋆b) − (Ma)⋆b − a⋆(Mb)` for a diagonal multiplier `M`.
pub fn leibniz_check<T: Scalar>(m: &LinOp<T>, a: &ConvElement<T>, b: &ConvElement<T>) -> Result<f64> {
    if m.grid() != a.grid || a.grid != b.grid {
        return Err(LabError::GridMismatch);
    }
    let apply = |e: &ConvElement<T>| -> Result<ConvElement<T>> {
        Ok(ConvElement { grid: e.grid, coeffs: m.apply_samples(&e.coeffs)? })
    };
    let lhs = apply(&star(a, b)?)?;
    let r1 = star(&apply(a)?, b)?;
    let r2 = star(a, &apply(b)?)?;
    Ok(lhs
        .coeffs
        .iter()
        .zip(r1.coeffs.iter().zip(&r2.coeffs))
        .map(|(&l, (&x, &y))| (l - x - y).modulus())
        .fold(0.0, f64::max))
}
