//! Constructors for the concrete operators.
//!
//! Interval operators act on samples over a [`Grid`] of `[0,1]`; the shift
//! example, the Hilbert–Schmidt left multiplication and the Kronecker
//! multiplier act on counting grids (truncated sequence spaces, `C(K)` for a
//! finite `K ⊂ 𝕋`).

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{LabError, Result};
use crate::fnspace::{Grid, GridFunction, GridKind};
use crate::linop::LinOp;
use crate::{Complex64, Scalar};

/// `Vf(x) = ∫₀ˣ f`: `h` times the lower-triangular ones matrix, diagonal included.
pub fn volterra<T: Scalar>(grid: Grid) -> LinOp<T> {
    LinOp::lower_toeplitz(grid, vec![T::one(); grid.len()], grid.h()).expect("kernel matches grid")
}

/// `Mf(x) = x·f(x)`: `diag(0, h, 2h, …)`.
pub fn mult_by_x<T: Scalar>(grid: Grid) -> LinOp<T> {
    let d = grid.nodes().into_iter().map(T::from_real).collect();
    LinOp::diagonal(grid, d).expect("diagonal matches grid")
}

/// Cesàro mean `Cf(x) = x⁻¹∫₀ˣ f` as `D⁻¹V` with `D = diag(max(x_i, h))`.
///
/// Row 0 reduces to `Cf(0) = f(0)`, the continuous extension at the origin.
pub fn cesaro<T: Scalar>(grid: Grid) -> LinOp<T> {
    let h = grid.h();
    let inv = grid.nodes().into_iter().map(|x| T::from_real(1.0 / x.max(h))).collect();
    LinOp::diagonal(grid, inv)
        .expect("diagonal matches grid")
        .compose(&volterra(grid))
        .expect("same grid")
}

fn check_weight_grid<T: Scalar>(grid: Grid, alpha: &GridFunction<T>) -> Result<()> {
    if alpha.grid() != grid {
        return Err(LabError::GridMismatch);
    }
    Ok(())
}

/// `T_α f(x) = α(x)∫₀ˣ f`, i.e. `diag(α)·V`.
pub fn weighted_volterra_t<T: Scalar>(grid: Grid, alpha: &GridFunction<T>) -> Result<LinOp<T>> {
    check_weight_grid(grid, alpha)?;
    LinOp::diagonal(grid, alpha.samples().to_vec())?.compose(&volterra(grid))
}

/// `S_α f(x) = ∫₀ˣ α f`, i.e. `V·diag(α)`.
pub fn weighted_volterra_s<T: Scalar>(grid: Grid, alpha: &GridFunction<T>) -> Result<LinOp<T>> {
    check_weight_grid(grid, alpha)?;
    volterra(grid).compose(&LinOp::diagonal(grid, alpha.samples().to_vec())?)
}

/// Multiplication by the samples of `α`.
pub fn mult_by<T: Scalar>(grid: Grid, alpha: &GridFunction<T>) -> Result<LinOp<T>> {
    check_weight_grid(grid, alpha)?;
    LinOp::diagonal(grid, alpha.samples().to_vec())
}

/// The weight `x^s`; for `s < 0` the node `x = 0` is replaced by `h`, matching [`cesaro`].
pub fn power_weight(grid: Grid, s: f64) -> GridFunction<f64> {
    let h = grid.h();
    GridFunction::from_fn(grid, 2.0, |x| if s < 0.0 { x.max(h).powf(s) } else { x.powf(s) })
        .expect("nodes match grid")
}

/// `R_s f(x) = x^s ∫₀ˣ f`. `R_{-1}` coincides with [`cesaro`] entry for entry.
pub fn r_s(grid: Grid, s: f64) -> LinOp<f64> {
    weighted_volterra_t(grid, &power_weight(grid, s)).expect("weight built on grid")
}

/// Discrete intertwiner `J` with `J·T_α ≈ V·J`.
#[derive(Clone, Debug)]
pub struct Intertwiner {
    pub j: LinOp<f64>,
    /// The weight rescaled so that its primitive reaches 1 at `x = 1`.
    pub alpha: GridFunction<f64>,
    /// `φ = H⁻¹` at the breakpoints `0, h, …, 1` (length `n + 1`).
    pub phi: Vec<f64>,
    /// Factor the input weight was divided by.
    pub normalization: f64,
}

/// Builds `Jf(x) = f(φ(x))/α(φ(x))` with `φ` the inverse of `H = ∫₀ˣ α`.
///
/// `α` is read as the piecewise-linear function through its samples (the
/// value at `x = 1` is linearly extrapolated), so `H` is its trapezoidal
/// primitive, normalized to `H(1) = 1`. Row `i` of `J` is the average of
/// `Jf` over the cell `[x_i, x_{i+1}]`; the change of variables `s = φ(t)`
/// turns it into `h⁻¹∫_{φ(x_i)}^{φ(x_{i+1})} f(s) ds` of the piecewise-constant
/// reading of `f`, which stays bounded where `α` vanishes.
pub fn intertwiner_j(grid: Grid, alpha: &GridFunction<f64>) -> Result<Intertwiner> {
    check_weight_grid(grid, alpha)?;
    let n = grid.len();
    let h = grid.h();
    let a = alpha.samples();
    if let Some(index) = a.iter().position(|&v| v.is_nan() || v < 0.0 || !v.is_finite()) {
        return Err(LabError::NonPositiveWeight { index });
    }
    let mut ext = a.to_vec();
    let last = if n >= 2 { (2.0 * a[n - 1] - a[n - 2]).max(0.0) } else { a[0] };
    ext.push(last);

    let mut prim = Vec::with_capacity(n + 1);
    prim.push(0.0);
    for i in 0..n {
        let cell = h * (ext[i] + ext[i + 1]) / 2.0;
        if cell.is_nan() || cell <= 0.0 {
            return Err(LabError::NotStrictlyIncreasing { index: i });
        }
        prim.push(prim[i] + cell);
    }
    let c = prim[n];
    let prim: Vec<f64> = prim.iter().map(|v| v / c).collect();
    let breaks: Vec<f64> = (0..=n).map(|i| if i == n { 1.0 } else { grid.node(i) }).collect();

    let phi: Vec<f64> = breaks
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                return 0.0;
            }
            if t >= 1.0 {
                return 1.0;
            }
            // largest k with prim[k] < t, so t ∈ (prim[k], prim[k+1]]
            let k = (prim.partition_point(|&v| v < t) - 1).min(n - 1);
            let frac = (t - prim[k]) / (prim[k + 1] - prim[k]);
            breaks[k] + (breaks[k + 1] - breaks[k]) * frac
        })
        .collect();

    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let (lo, hi) = (phi[i], phi[i + 1]);
        let first = ((lo / h).floor() as usize).min(n - 1);
        for j in first..n {
            if breaks[j] >= hi {
                break;
            }
            let overlap = hi.min(breaks[j + 1]) - lo.max(breaks[j]);
            if overlap > 0.0 {
                m[(i, j)] = overlap / h;
            }
        }
    }
    let scaled = alpha.scaled(1.0 / c);
    Ok(Intertwiner { j: LinOp::dense(grid, m)?, alpha: scaled, phi, normalization: c })
}

/// The pair `Te_n = e_n + n⁻¹e_{n−1}`, `Me_n = e_{n−1}` on the first `n` coordinates of `ℓ₂`.
///
/// Both are upper triangular, so truncation commutes with products and
/// `[T, M] = (T − I)²` holds on the whole truncated matrix.
pub fn shift_example_pair(n: usize) -> Result<(LinOp<f64>, LinOp<f64>)> {
    if n < 3 {
        return Err(LabError::DimensionTooSmall { got: n, min: 3 });
    }
    let grid = Grid::sequence(n)?;
    let t = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else if j == i + 1 {
            1.0 / j as f64
        } else {
            0.0
        }
    });
    let m = DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    Ok((LinOp::dense(grid, t)?, LinOp::dense(grid, m)?))
}

/// Left multiplication `Φ(A) = S·A` by `Se_0 = 0`, `Se_n = n⁻¹e_{n−1}` on `n × n` matrices.
#[derive(Clone, Debug)]
pub struct HsLeftMult {
    n: usize,
    s: DMatrix<f64>,
}

/// Dimensions of `ker Φᵏ`, `ran Φᵏ` and their intersection `X_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct HsSubspaceReport {
    pub power: usize,
    pub dim_kernel: usize,
    pub dim_range: usize,
    pub dim_intersection: usize,
    /// Every matrix with rows `power..n` zero lies in both the kernel and the range.
    pub contains_row_truncated: bool,
}

const RANK_TOL: f64 = 1e-10;

fn rank_split(sv: &DVector<f64>) -> usize {
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

fn sorted_svd(m: DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let mut svd = SVD::new(m, true, true);
    svd.sort_by_singular_values();
    (svd.u.expect("u requested"), svd.singular_values, svd.v_t.expect("v_t requested"))
}

fn projection_residual(basis: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    if basis.ncols() == 0 {
        return v.norm();
    }
    (v - basis * (basis.transpose() * v)).norm()
}

impl HsLeftMult {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn apply(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a.nrows() != self.n || a.ncols() != self.n {
            return Err(LabError::LengthMismatch { expected: self.n, got: a.nrows() });
        }
        Ok(&self.s * a)
    }

    /// `Φᵏ` on column-major `vec(A)`: block diagonal `I ⊗ Sᵏ`.
    pub fn power_matrix(&self, k: u32) -> DMatrix<f64> {
        let n = self.n;
        let mut sk = DMatrix::identity(n, n);
        for _ in 0..k {
            sk = &self.s * sk;
        }
        let mut big = DMatrix::zeros(n * n, n * n);
        for b in 0..n {
            big.view_mut((b * n, b * n), (n, n)).copy_from(&sk);
        }
        big
    }

    fn kernel_and_range(&self, k: u32) -> (DMatrix<f64>, DMatrix<f64>) {
        let (u, sv, v_t) = sorted_svd(self.power_matrix(k));
        let r = rank_split(&sv);
        let nn = self.n * self.n;
        let range = u.columns(0, r).into_owned();
        let kernel = v_t.rows(r, nn - r).transpose();
        (kernel, range)
    }

    /// Orthonormal basis of `X_k = ker Φᵏ ∩ ran Φᵏ`.
    pub fn intersection_basis(&self, k: u32) -> DMatrix<f64> {
        let (kernel, range) = self.kernel_and_range(k);
        if kernel.ncols() == 0 || range.ncols() == 0 {
            return DMatrix::zeros(self.n * self.n, 0);
        }
        // v = K a lies in ran Φᵏ iff (I − P_R) K a = 0
        let off = &kernel - &range * (range.transpose() * &kernel);
        let dk = kernel.ncols();
        let (_, sv, v_t) = sorted_svd(off);
        // K has orthonormal columns, so the residual is measured on an absolute scale
        let r = sv.iter().filter(|&&s| s > RANK_TOL).count();
        let null = v_t.rows(r, dk - r).transpose();
        let basis = kernel * null;
        if basis.ncols() == 0 {
            return basis;
        }
        // re-orthonormalize
        let (u, sv, _) = sorted_svd(basis);
        let r = rank_split(&sv);
        u.columns(0, r).into_owned()
    }

    pub fn subspace_report(&self, k: u32) -> HsSubspaceReport {
        let (kernel, range) = self.kernel_and_range(k);
        let inter = self.intersection_basis(k);
        let n = self.n;
        let mut contains = true;
        for col in 0..n {
            for row in 0..(k as usize).min(n) {
                let mut e = DVector::zeros(n * n);
                e[col * n + row] = 1.0;
                if projection_residual(&kernel, &e) > 1e-9 || projection_residual(&range, &e) > 1e-9 {
                    contains = false;
                }
            }
        }
        HsSubspaceReport {
            power: k as usize,
            dim_kernel: kernel.ncols(),
            dim_range: range.ncols(),
            dim_intersection: inter.ncols(),
            contains_row_truncated: contains,
        }
    }

    /// Dimension of `span(X_1 ∪ … ∪ X_{n−1})` in the truncated space.
    pub fn union_span_dimension(&self) -> usize {
        let nn = self.n * self.n;
        let bases: Vec<DMatrix<f64>> = (1..self.n as u32).map(|k| self.intersection_basis(k)).collect();
        let total: usize = bases.iter().map(|b| b.ncols()).sum();
        if total == 0 {
            return 0;
        }
        let mut stacked = DMatrix::zeros(nn, total);
        let mut at = 0;
        for b in &bases {
            stacked.columns_mut(at, b.ncols()).copy_from(b);
            at += b.ncols();
        }
        let sv = if total <= nn { stacked.singular_values() } else { stacked.transpose().singular_values() };
        rank_split(&sv)
    }
}

pub fn hs_left_mult(n: usize) -> Result<HsLeftMult> {
    if n < 2 {
        return Err(LabError::DimensionTooSmall { got: n, min: 2 });
    }
    let s = DMatrix::from_fn(n, n, |i, j| if j == i + 1 { 1.0 / j as f64 } else { 0.0 });
    Ok(HsLeftMult { n, s })
}

/// `Tf(z) = z·f(z)` on `C(K)`, `K = {e^{iθ_j}}`: the diagonal `diag(e^{iθ_j})`.
///
/// Rational independence of `θ_j/2π` is the caller's responsibility.
pub fn kronecker_mult(angles: &[f64]) -> Result<LinOp<Complex64>> {
    if angles.is_empty() {
        return Err(LabError::DimensionTooSmall { got: 0, min: 1 });
    }
    let reduced: Vec<f64> = angles.iter().map(|a| a.rem_euclid(TAU)).collect();
    for i in 0..reduced.len() {
        for j in i + 1..reduced.len() {
            let d = (reduced[i] - reduced[j]).abs();
            if d.min(TAU - d) < 1e-12 {
                return Err(LabError::DuplicateAngle { first: i, second: j });
            }
        }
    }
    let grid = Grid::sequence(angles.len())?;
    LinOp::diagonal(grid, angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect())
}

pub fn adjoint<T: Scalar>(a: &LinOp<T>) -> LinOp<T> {
    a.adjoint()
}

/// Whether the grid describes `[0,1]` (as opposed to a sequence space).
pub fn is_interval(grid: Grid) -> bool {
    grid.kind() == GridKind::UnitInterval
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspace::{lp_norm, GridFunction};
    use crate::linop::Structure;

    fn grid(n: usize) -> Grid {
        Grid::unit_interval(n).unwrap()
    }

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn volterra_integrates_monomials() {
        let g = grid(2048);
        let h = g.h();
        let v = volterra::<f64>(g);
        assert_eq!(v.structure(), Structure::LowerToeplitz);
        let one = GridFunction::constant(g, 1.0, 2.0).unwrap();
        let x = GridFunction::from_fn(g, 2.0, |x| x).unwrap();
        let v1 = v.apply(&one).unwrap();
        assert!(v1.samples().iter().zip(g.nodes()).all(|(s, x)| (s - x).abs() <= 1.01 * h));
        let vx = v.apply(&x).unwrap();
        assert!(vx.samples().iter().zip(g.nodes()).all(|(s, x)| (s - x * x / 2.0).abs() <= 1.01 * h));

        // iterated antiderivative oracle: Vⁿ1 = xⁿ/n! + O(h), error ≤ n(n+1)/2·h·x^{n−1}/(n−1)!·e
        let mut cur = one;
        for n in 1..=8u32 {
            cur = v.apply(&cur).unwrap();
            let err = cur
                .samples()
                .iter()
                .zip(g.nodes())
                .map(|(s, x)| (s - x.powi(n as i32) / factorial(n)).abs())
                .fold(0.0, f64::max);
            assert!(err <= f64::from(n * (n + 1)) * h, "n = {n}: err {err}");
        }
    }

    #[test]
    fn multiplication_by_x_is_exact() {
        let g = grid(8);
        let m = mult_by_x::<f64>(g);
        assert_eq!(m.structure(), Structure::Diagonal);
        assert_eq!(m.diagonal_entries().unwrap(), &[0.0, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875]);
        let one = GridFunction::constant(g, 1.0, 2.0).unwrap();
        assert_eq!(m.apply(&one).unwrap().samples(), g.nodes().as_slice());
        let x = GridFunction::from_fn(g, 2.0, |x| x).unwrap();
        let x2: Vec<f64> = g.nodes().iter().map(|x| x * x).collect();
        assert_eq!(m.apply(&x).unwrap().samples(), x2.as_slice());
    }

    #[test]
    fn cesaro_means() {
        let g = grid(1024);
        let h = g.h();
        let c = cesaro::<f64>(g);
        for k in 0..=4i32 {
            let f = GridFunction::from_fn(g, 2.0, |x| x.powi(k)).unwrap();
            let cf = c.apply(&f).unwrap();
            let target = GridFunction::from_fn(g, 2.0, |x| x.powi(k) / f64::from(k + 1)).unwrap();
            let diff = cf.sub(&target).unwrap();
            // the O(h) row error is amplified by x⁻¹ near 0, leaving O(√h) in L₂
            assert!(lp_norm(&diff, 2.0).unwrap() <= 1.5 * h.sqrt(), "k = {k}");
        }
        let one = GridFunction::constant(g, 1.0, 2.0).unwrap();
        assert_eq!(c.apply(&one).unwrap().samples()[0], 1.0);
    }

    #[test]
    fn weighted_volterra_examples() {
        let g = grid(512);
        let h = g.h();
        let ones = GridFunction::constant(g, 1.0, 2.0).unwrap();
        let t1 = weighted_volterra_t(g, &ones).unwrap();
        assert_eq!(t1.to_dense(), volterra::<f64>(g).to_dense());
        let s1 = weighted_volterra_s(g, &ones).unwrap();
        assert_eq!(s1.to_dense(), volterra::<f64>(g).to_dense());

        let x = GridFunction::from_fn(g, 2.0, |x| x).unwrap();
        let tx = weighted_volterra_t(g, &x).unwrap().apply(&ones).unwrap();
        assert!(tx.samples().iter().zip(g.nodes()).all(|(s, x)| (s - x * x).abs() <= 1.01 * h));
        let sx = weighted_volterra_s(g, &x).unwrap().apply(&ones).unwrap();
        assert!(sx.samples().iter().zip(g.nodes()).all(|(s, x)| (s - x * x / 2.0).abs() <= 1.01 * h));

        // α = 1/max(x, h) reproduces the Cesàro rows
        let inv = power_weight(g, -1.0);
        let t = weighted_volterra_t(g, &inv).unwrap();
        assert_eq!(t.to_dense(), cesaro::<f64>(g).to_dense());
        assert_eq!(r_s(g, -1.0).to_dense(), cesaro::<f64>(g).to_dense());

        let other = GridFunction::constant(grid(4), 1.0, 2.0).unwrap();
        assert!(matches!(weighted_volterra_t(g, &other), Err(LabError::GridMismatch)));
    }

    #[test]
    fn multiplication_intertwines_weighted_volterra_exactly() {
        let g = grid(256);
        let alpha = GridFunction::from_fn(g, 2.0, |x| 1.0 + x.sin() * 0.5 + x * x).unwrap();
        let m = mult_by(g, &alpha).unwrap();
        let lhs = m.compose(&weighted_volterra_s(g, &alpha).unwrap()).unwrap();
        let rhs = weighted_volterra_t(g, &alpha).unwrap().compose(&m).unwrap();
        assert_eq!(lhs.to_dense(), rhs.to_dense());
    }

    #[test]
    fn intertwiner_for_unit_weight_is_identity() {
        let g = grid(64);
        let ones = GridFunction::constant(g, 1.0, 1.0).unwrap();
        let j = intertwiner_j(g, &ones).unwrap();
        assert_eq!(j.j.to_dense(), DMatrix::identity(64, 64));
        assert_eq!(j.normalization, 1.0);
    }

    #[test]
    fn intertwiner_for_linear_weight_uses_square_root() {
        let g = grid(1024);
        let h = g.h();
        let alpha = GridFunction::from_fn(g, 1.0, |x| 2.0 * x).unwrap();
        let j = intertwiner_j(g, &alpha).unwrap();
        assert!((j.normalization - 1.0).abs() < 1e-14);
        for (i, &p) in j.phi.iter().enumerate() {
            let t = if i == g.len() { 1.0 } else { g.node(i) };
            // φ inverts the piecewise-linear interpolant of x²
            assert!((p - t.sqrt()).abs() <= h);
        }
        // J1 = 1/(2√x) in L₁, cell averages
        let one = GridFunction::constant(g, 1.0, 1.0).unwrap();
        let j1 = j.j.apply(&one).unwrap();
        let exact = GridFunction::from_fn(g, 1.0, |x| ((x + h).sqrt() - x.sqrt()) / h).unwrap();
        assert!(lp_norm(&j1.sub(&exact).unwrap(), 1.0).unwrap() < h);
        let pointwise = GridFunction::from_fn(g, 1.0, |x| if x == 0.0 { 0.0 } else { 1.0 / (2.0 * x.sqrt()) })
            .unwrap();
        assert!(lp_norm(&j1.sub(&pointwise).unwrap(), 1.0).unwrap() < 2.0 * h.sqrt());
    }

    #[test]
    fn intertwiner_errors() {
        let g = grid(8);
        let neg = GridFunction::from_fn(g, 1.0, |x| x - 0.5).unwrap();
        assert!(matches!(intertwiner_j(g, &neg), Err(LabError::NonPositiveWeight { index: 0 })));
        let gap = GridFunction::from_fn(g, 1.0, |x| if x < 0.3 { 0.0 } else { 1.0 }).unwrap();
        assert!(matches!(intertwiner_j(g, &gap), Err(LabError::NotStrictlyIncreasing { index: 0 })));
    }

    #[test]
    fn shift_example_identities() {
        let (t, m) = shift_example_pair(12).unwrap();
        let id = LinOp::identity(t.grid());
        let tm = t.compose(&m).unwrap().sub(&m.compose(&t).unwrap()).unwrap();
        let t_minus = t.sub(&id).unwrap();
        let sq = t_minus.compose(&t_minus).unwrap();
        let inner = 0..10;
        let diff = tm.block(inner.clone(), inner.clone()) - sq.block(inner.clone(), inner.clone());
        assert!(diff.amax() < 1e-15);
        assert!(tm.max_abs_diff(&sq).unwrap() < 1e-15);
        let ttm = t.compose(&tm).unwrap().sub(&tm.compose(&t).unwrap()).unwrap();
        assert!(ttm.block(inner.clone(), inner).amax() < 1e-15);

        // (T − I)² e_{n+2} = e_n/((n+1)(n+2))
        let dense = sq.to_dense();
        for n in 0..10 {
            for i in 0..12 {
                let expected = if i == n { 1.0 / ((n + 1) * (n + 2)) as f64 } else { 0.0 };
                assert!((dense[(i, n + 2)] - expected).abs() < 1e-16);
            }
        }
        assert!(shift_example_pair(2).is_err());
    }

    #[test]
    fn hs_left_multiplication_kills_first_basis_matrix() {
        let phi = hs_left_mult(8).unwrap();
        let mut e00 = DMatrix::zeros(8, 8);
        e00[(0, 0)] = 1.0;
        assert!(phi.apply(&e00).unwrap().iter().all(|&x| x == 0.0));
        assert!(hs_left_mult(1).is_err());
    }

    #[test]
    fn hs_kernel_range_intersections() {
        let n = 6;
        let phi = hs_left_mult(n).unwrap();
        for k in 1..n {
            let rep = phi.subspace_report(k as u32);
            assert_eq!(rep.dim_kernel, k * n);
            assert_eq!(rep.dim_range, (n - k) * n);
            assert_eq!(rep.dim_intersection, k.min(n - k) * n, "k = {k}");
            assert_eq!(rep.contains_row_truncated, k <= n / 2);
        }
        // the truncation keeps only the rows below n/2
        assert_eq!(phi.union_span_dimension(), n * (n / 2));
    }

    #[test]
    fn kronecker_multiplier() {
        let angles = [1.0, 2.5, 4.0];
        let t = kronecker_mult(&angles).unwrap();
        let one = GridFunction::constant(t.grid(), Complex64::new(1.0, 0.0), f64::INFINITY).unwrap();
        let t1 = t.apply(&one).unwrap();
        for (s, a) in t1.samples().iter().zip(angles) {
            assert!((s - Complex64::from_polar(1.0, a)).norm() < 1e-15);
        }
        let f = GridFunction::new(
            t.grid(),
            vec![Complex64::new(0.3, -2.0), Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.5)],
            f64::INFINITY,
        )
        .unwrap();
        let tf = t.apply(&f).unwrap();
        for (a, b) in tf.samples().iter().zip(f.samples()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }
        assert!(matches!(kronecker_mult(&[1.0, 1.0 + TAU]), Err(LabError::DuplicateAngle { .. })));
    }

    #[test]
    fn adjoint_of_volterra_integrates_from_the_right() {
        let g = grid(1024);
        let h = g.h();
        let va = adjoint(&volterra::<f64>(g));
        let one = GridFunction::constant(g, 1.0, 2.0).unwrap();
        let r = va.apply(&one).unwrap();
        assert!(r.samples().iter().zip(g.nodes()).all(|(s, x)| (s - (1.0 - x)).abs() <= 1.01 * h));
        let d = mult_by_x::<Complex64>(g);
        assert_eq!(adjoint(&d).to_dense(), d.to_dense().adjoint());
    }
}
