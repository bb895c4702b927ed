//! Structured square matrices acting on sample vectors.
//!
//! A [`LinOp`] keeps the structure it was built with: lower-triangular
//! Toeplitz operators (the discrete convolution algebra) are stored as a
//! kernel and a weight, diagonal operators as their diagonal, everything else
//! densely. Products of two Toeplitz operators go through
//! [`symmetric_convolution`], which adds the terms `a_k b_{i−k}` and
//! `a_{i−k} b_k` in pairs; swapping the factors therefore produces the same
//! floating-point sums and the algebra is commutative bit for bit.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fnspace::{weighted_lp, DualFunctional, Grid, GridFunction};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    General,
    LowerToeplitz,
    Diagonal,
}

#[derive(Clone, Debug)]
enum Repr<T: Scalar> {
    Dense(DMatrix<T>),
    /// Entry `(i, j)` is `weight·kernel[i − j]` for `j ≤ i`, zero above the diagonal.
    Toeplitz { kernel: Vec<T>, weight: f64 },
    Diagonal(Vec<T>),
}

#[derive(Clone, Debug)]
pub struct LinOp<T: Scalar = f64> {
    grid: Grid,
    repr: Repr<T>,
}

/// `c_i = Σ_{k ≤ i} a_k b_{i−k}` for `i < min(len)`, summed in symmetric pairs so
/// that `symmetric_convolution(a, b) == symmetric_convolution(b, a)` exactly.
pub fn symmetric_convolution<T: Scalar>(a: &[T], b: &[T]) -> Vec<T> {
    let n = a.len().min(b.len());
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = T::zero();
        for k in 0..i.div_ceil(2) {
            s += a[k] * b[i - k] + a[i - k] * b[k];
        }
        if i % 2 == 0 {
            s += a[i / 2] * b[i / 2];
        }
        out.push(s);
    }
    out
}

impl<T: Scalar> LinOp<T> {
    pub fn dense(grid: Grid, matrix: DMatrix<T>) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(LabError::LengthMismatch {
                expected: grid.len(),
                got: if matrix.nrows() != grid.len() { matrix.nrows() } else { matrix.ncols() },
            });
        }
        Ok(Self { grid, repr: Repr::Dense(matrix) })
    }

    pub fn lower_toeplitz(grid: Grid, kernel: Vec<T>, weight: f64) -> Result<Self> {
        grid.check_len(kernel.len())?;
        Ok(Self { grid, repr: Repr::Toeplitz { kernel, weight } })
    }

    pub fn diagonal(grid: Grid, diag: Vec<T>) -> Result<Self> {
        grid.check_len(diag.len())?;
        Ok(Self { grid, repr: Repr::Diagonal(diag) })
    }

    /// The identity, stored as the unit of the convolution algebra.
    pub fn identity(grid: Grid) -> Self {
        let mut kernel = vec![T::zero(); grid.len()];
        kernel[0] = T::one();
        Self { grid, repr: Repr::Toeplitz { kernel, weight: 1.0 } }
    }

    pub fn zero(grid: Grid) -> Self {
        Self { grid, repr: Repr::Toeplitz { kernel: vec![T::zero(); grid.len()], weight: 1.0 } }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.len()
    }

    pub fn structure(&self) -> Structure {
        match self.repr {
            Repr::Dense(_) => Structure::General,
            Repr::Toeplitz { .. } => Structure::LowerToeplitz,
            Repr::Diagonal(_) => Structure::Diagonal,
        }
    }

    pub fn toeplitz_parts(&self) -> Option<(&[T], f64)> {
        match &self.repr {
            Repr::Toeplitz { kernel, weight } => Some((kernel, *weight)),
            _ => None,
        }
    }

    pub fn diagonal_entries(&self) -> Option<&[T]> {
        match &self.repr {
            Repr::Diagonal(d) => Some(d),
            _ => None,
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        match &self.repr {
            Repr::Dense(m) => m[(i, j)],
            Repr::Toeplitz { kernel, weight } => {
                if j <= i {
                    T::from_real(*weight) * kernel[i - j]
                } else {
                    T::zero()
                }
            }
            Repr::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            _ => {
                let n = self.dim();
                DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
            }
        }
    }

    pub fn apply_samples(&self, f: &[T]) -> Result<Vec<T>> {
        self.grid.check_len(f.len())?;
        Ok(match &self.repr {
            Repr::Dense(m) => {
                let v = m * DVector::from_column_slice(f);
                v.as_slice().to_vec()
            }
            Repr::Toeplitz { kernel, weight } => {
                let w = T::from_real(*weight);
                symmetric_convolution(kernel, f).into_iter().map(|c| w * c).collect()
            }
            Repr::Diagonal(d) => d.iter().zip(f).map(|(&a, &b)| a * b).collect(),
        })
    }

    pub fn apply(&self, f: &GridFunction<T>) -> Result<GridFunction<T>> {
        if f.grid() != self.grid {
            return Err(LabError::GridMismatch);
        }
        GridFunction::new(self.grid, self.apply_samples(f.samples())?, f.p())
    }

    /// Applies the conjugate transpose.
    pub fn apply_adjoint_samples(&self, g: &[T]) -> Result<Vec<T>> {
        self.grid.check_len(g.len())?;
        let n = self.dim();
        Ok(match &self.repr {
            Repr::Dense(m) => {
                let v = m.adjoint() * DVector::from_column_slice(g);
                v.as_slice().to_vec()
            }
            Repr::Toeplitz { kernel, weight } => {
                let w = T::from_real(*weight);
                (0..n)
                    .map(|j| {
                        let s = (j..n).fold(T::zero(), |acc, i| acc + kernel[i - j].conjugate() * g[i]);
                        w * s
                    })
                    .collect()
            }
            Repr::Diagonal(d) => d.iter().zip(g).map(|(&a, &b)| a.conjugate() * b).collect(),
        })
    }

    /// `A*g`, the dual action: `pair(A*g, f) = pair(g, Af)`.
    pub fn apply_dual(&self, g: &DualFunctional<T>) -> Result<DualFunctional<T>> {
        if g.grid() != self.grid {
            return Err(LabError::GridMismatch);
        }
        DualFunctional::new(self.grid, self.apply_adjoint_samples(g.samples())?, g.q())
    }

    /// Conjugate transpose. The pairing weights are uniform, so no reweighting is needed.
    pub fn adjoint(&self) -> Self {
        let repr = match &self.repr {
            Repr::Diagonal(d) => Repr::Diagonal(d.iter().map(|s| s.conjugate()).collect()),
            Repr::Dense(m) => Repr::Dense(m.adjoint()),
            Repr::Toeplitz { .. } => Repr::Dense(self.to_dense().adjoint()),
        };
        Self { grid: self.grid, repr }
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &Self) -> Result<Self> {
        if self.grid != rhs.grid {
            return Err(LabError::GridMismatch);
        }
        let repr = match (&self.repr, &rhs.repr) {
            (Repr::Toeplitz { kernel: a, weight: wa }, Repr::Toeplitz { kernel: b, weight: wb }) => {
                Repr::Toeplitz { kernel: symmetric_convolution(a, b), weight: wa * wb }
            }
            (Repr::Diagonal(d), Repr::Diagonal(e)) => {
                Repr::Diagonal(d.iter().zip(e).map(|(&a, &b)| a * b).collect())
            }
            (Repr::Diagonal(d), _) => {
                let mut m = rhs.to_dense();
                for (i, mut row) in m.row_iter_mut().enumerate() {
                    row.iter_mut().for_each(|x| *x = d[i] * *x);
                }
                Repr::Dense(m)
            }
            (_, Repr::Diagonal(e)) => {
                let mut m = self.to_dense();
                for (j, mut col) in m.column_iter_mut().enumerate() {
                    col.iter_mut().for_each(|x| *x *= e[j]);
                }
                Repr::Dense(m)
            }
            _ => Repr::Dense(self.to_dense() * rhs.to_dense()),
        };
        Ok(Self { grid: self.grid, repr })
    }

    /// `a·self + b·other`, keeping shared structure.
    pub fn lin_comb(&self, a: T, other: &Self, b: T) -> Result<Self> {
        if self.grid != other.grid {
            return Err(LabError::GridMismatch);
        }
        let repr = match (&self.repr, &other.repr) {
            (Repr::Toeplitz { kernel: k1, weight: w1 }, Repr::Toeplitz { kernel: k2, weight: w2 }) => {
                if w1 == w2 {
                    Repr::Toeplitz {
                        kernel: k1.iter().zip(k2).map(|(&x, &y)| a * x + b * y).collect(),
                        weight: *w1,
                    }
                } else {
                    let (c1, c2) = (T::from_real(*w1), T::from_real(*w2));
                    Repr::Toeplitz {
                        kernel: k1.iter().zip(k2).map(|(&x, &y)| a * (c1 * x) + b * (c2 * y)).collect(),
                        weight: 1.0,
                    }
                }
            }
            (Repr::Diagonal(d1), Repr::Diagonal(d2)) => {
                Repr::Diagonal(d1.iter().zip(d2).map(|(&x, &y)| a * x + b * y).collect())
            }
            _ => {
                let m1 = self.to_dense();
                let m2 = other.to_dense();
                Repr::Dense(m1.zip_map(&m2, |x, y| a * x + b * y))
            }
        };
        Ok(Self { grid: self.grid, repr })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.lin_comb(T::one(), other, T::one())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.lin_comb(T::one(), other, -T::one())
    }

    pub fn scale(&self, c: T) -> Self {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(m.map(|x| c * x)),
            Repr::Toeplitz { kernel, weight } => {
                Repr::Toeplitz { kernel: kernel.iter().map(|&x| c * x).collect(), weight: *weight }
            }
            Repr::Diagonal(d) => Repr::Diagonal(d.iter().map(|&x| c * x).collect()),
        };
        Self { grid: self.grid, repr }
    }

    pub fn pow(&self, n: u32) -> Result<Self> {
        let mut acc = Self::identity(self.grid);
        for _ in 0..n {
            acc = acc.compose(self)?;
        }
        Ok(acc)
    }

    /// Retags a dense matrix that is exactly (bitwise) lower Toeplitz or diagonal.
    pub fn detect_structure(self) -> Self {
        let Repr::Dense(m) = &self.repr else {
            return self;
        };
        let n = m.nrows();
        let mut toeplitz = true;
        'outer: for j in 0..n {
            for i in 0..n {
                let expected = if i >= j { m[(i - j, 0)] } else { T::zero() };
                if m[(i, j)] != expected {
                    toeplitz = false;
                    break 'outer;
                }
            }
        }
        if toeplitz {
            let kernel = m.column(0).iter().copied().collect();
            return Self { grid: self.grid, repr: Repr::Toeplitz { kernel, weight: 1.0 } };
        }
        let diagonal = (0..n).all(|j| (0..n).all(|i| i == j || m[(i, j)].is_zero()));
        if diagonal {
            let d = (0..n).map(|i| m[(i, i)]).collect();
            return Self { grid: self.grid, repr: Repr::Diagonal(d) };
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        match &self.repr {
            Repr::Dense(m) => m.iter().all(|x| x.is_zero()),
            Repr::Toeplitz { kernel, weight } => *weight == 0.0 || kernel.iter().all(|x| x.is_zero()),
            Repr::Diagonal(d) => d.iter().all(|x| x.is_zero()),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => m.iter().map(|x| x.modulus()).fold(0.0, f64::max),
            Repr::Toeplitz { kernel, weight } => {
                kernel.iter().map(|x| x.modulus()).fold(0.0, f64::max) * weight.abs()
            }
            Repr::Diagonal(d) => d.iter().map(|x| x.modulus()).fold(0.0, f64::max),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => {
                let v: Vec<T> = m.iter().copied().collect();
                weighted_lp(&v, 1.0, 2.0).unwrap_or(0.0)
            }
            Repr::Toeplitz { kernel, weight } => {
                // kernel[k] appears n − k times
                let n = kernel.len();
                let s: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, x)| (n - k) as f64 * x.modulus_squared())
                    .sum();
                weight.abs() * s.sqrt()
            }
            Repr::Diagonal(d) => weighted_lp(d, 1.0, 2.0).unwrap_or(0.0),
        }
    }

    /// Spectral norm (the operator norm for `p = 2`), estimated by power
    /// iteration on `A*A` until the estimate settles to `1e-13` relative.
    pub fn op_norm(&self) -> f64 {
        if let Repr::Diagonal(d) = &self.repr {
            return d.iter().map(|x| x.modulus()).fold(0.0, f64::max);
        }
        if self.is_zero() {
            return 0.0;
        }
        let n = self.dim();
        let mut v: Vec<T> = (0..n)
            .map(|i| T::from_real(1.0 + (i as f64 * 0.618_033_988_749_895).fract()))
            .collect();
        let mut estimate = 0.0;
        for _ in 0..2000 {
            let norm_v = weighted_lp(&v, 1.0, 2.0).unwrap_or(0.0);
            if norm_v == 0.0 {
                return estimate;
            }
            v.iter_mut().for_each(|x| *x *= T::from_real(1.0 / norm_v));
            let av = self.apply_samples(&v).expect("square operator");
            let next = weighted_lp(&av, 1.0, 2.0).unwrap_or(0.0);
            v = self.apply_adjoint_samples(&av).expect("square operator");
            if (next - estimate).abs() <= 1e-13 * next {
                return next;
            }
            estimate = next;
        }
        estimate
    }

    /// Largest entrywise difference `max |A_ij − B_ij|`.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// Dense copy of the block `rows × cols`.
    pub fn block(&self, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DMatrix<T> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.entry(rows.start + i, cols.start + j))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Complex64;

    fn grid(n: usize) -> Grid {
        Grid::unit_interval(n).unwrap()
    }

    fn pseudo(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    #[test]
    fn symmetric_convolution_commutes_bitwise() {
        let a = pseudo(37, 0.731);
        let b = pseudo(37, 1.913);
        assert_eq!(symmetric_convolution(&a, &b), symmetric_convolution(&b, &a));
        let ca: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.3 * x)).collect();
        let cb: Vec<Complex64> = b.iter().map(|&x| Complex64::new(-x, x * x)).collect();
        assert_eq!(symmetric_convolution(&ca, &cb), symmetric_convolution(&cb, &ca));
    }

    #[test]
    fn toeplitz_product_matches_dense_product() {
        let g = grid(24);
        let a = LinOp::lower_toeplitz(g, pseudo(24, 0.3), g.h()).unwrap();
        let b = LinOp::lower_toeplitz(g, pseudo(24, 1.7), g.h()).unwrap();
        let ab = a.compose(&b).unwrap();
        assert_eq!(ab.structure(), Structure::LowerToeplitz);
        let dense = a.to_dense() * b.to_dense();
        assert!((ab.to_dense() - dense).amax() < 1e-15);
        assert!(a.compose(&b).unwrap().sub(&b.compose(&a).unwrap()).unwrap().is_zero());
    }

    #[test]
    fn diagonal_products_scale_rows_and_columns() {
        let g = grid(5);
        let d = LinOp::diagonal(g, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let t = LinOp::lower_toeplitz(g, vec![1.0; 5], 1.0).unwrap();
        let dt = d.compose(&t).unwrap().to_dense();
        let td = t.compose(&d).unwrap().to_dense();
        assert_eq!(dt, d.to_dense() * t.to_dense());
        assert_eq!(td, t.to_dense() * d.to_dense());
        assert_eq!(d.compose(&d).unwrap().structure(), Structure::Diagonal);
    }

    #[test]
    fn detect_structure_retags_exact_patterns() {
        let g = grid(4);
        let t = LinOp::lower_toeplitz(g, vec![1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        let back = LinOp::dense(g, t.to_dense()).unwrap().detect_structure();
        assert_eq!(back.structure(), Structure::LowerToeplitz);
        assert_eq!(back.to_dense(), t.to_dense());
        let d = LinOp::dense(g, DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0])))
            .unwrap()
            .detect_structure();
        assert_eq!(d.structure(), Structure::Diagonal);
        let mut m = t.to_dense();
        m[(3, 1)] += 1e-12;
        assert_eq!(LinOp::dense(g, m).unwrap().detect_structure().structure(), Structure::General);
    }

    #[test]
    fn adjoint_pairing_identity() {
        let g = grid(16);
        let ops = [
            LinOp::lower_toeplitz(g, pseudo(16, 0.9), g.h()).unwrap(),
            LinOp::diagonal(g, pseudo(16, 0.2)).unwrap(),
            LinOp::dense(g, DMatrix::from_fn(16, 16, |i, j| ((i * 7 + j * 3) as f64).cos())).unwrap(),
        ];
        let f = GridFunction::new(g, pseudo(16, 2.1), 2.0).unwrap();
        let h = DualFunctional::new(g, pseudo(16, 3.3), 2.0).unwrap();
        for a in &ops {
            let lhs = crate::fnspace::pair(&h, &a.apply(&f).unwrap()).unwrap();
            let rhs = crate::fnspace::pair(&a.apply_dual(&h).unwrap(), &f).unwrap();
            assert!((lhs - rhs).abs() < 1e-14);
            let via_matrix = crate::fnspace::pair(
                &DualFunctional::new(g, a.adjoint().apply_samples(h.samples()).unwrap(), 2.0).unwrap(),
                &f,
            )
            .unwrap();
            assert!((via_matrix - rhs).abs() < 1e-14);
        }
    }

    #[test]
    fn op_norm_of_known_matrices() {
        let g = grid(6);
        let d = LinOp::diagonal(g, vec![1.0, -7.0, 2.0, 0.0, 3.0, 1.0]).unwrap();
        assert_eq!(d.op_norm(), 7.0);
        let rank_one = LinOp::dense(g, DMatrix::from_element(6, 6, 1.0)).unwrap();
        assert!((rank_one.op_norm() - 6.0).abs() < 1e-12);
        assert_eq!(LinOp::<f64>::zero(g).op_norm(), 0.0);
    }

    #[test]
    fn frobenius_norm_of_toeplitz_matches_dense() {
        let g = grid(9);
        let t = LinOp::lower_toeplitz(g, pseudo(9, 0.4), 0.25).unwrap();
        let dense = LinOp::dense(g, t.to_dense()).unwrap();
        assert!((t.frobenius_norm() - dense.frobenius_norm()).abs() < 1e-14);
    }

    #[test]
    fn shape_errors() {
        let g = grid(3);
        assert!(LinOp::dense(g, DMatrix::<f64>::zeros(3, 4)).is_err());
        assert!(LinOp::lower_toeplitz(g, vec![1.0; 2], 1.0).is_err());
        let other = LinOp::<f64>::identity(grid(4));
        assert!(matches!(LinOp::<f64>::identity(g).compose(&other), Err(LabError::GridMismatch)));
    }
}
