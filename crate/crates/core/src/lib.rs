//! Desk-scale laboratory for the Volterra operator and its commutant.
//!
//! The crate discretizes `L_p[0,1]` on a uniform left-endpoint grid and
//! builds every operator of interest as a structured matrix:
//!
//! * [`fnspace`]: grids, sampled functions, quadrature pairing, norming functionals.
//! * [`linop`] / [`operators`]: the structured matrix type and the concrete operators
//!   (Volterra, multiplication by `x`, Cesàro, weighted Volterra, intertwiners,
//!   sequence-space shifts, Kronecker multipliers).
//! * [`algebra`]: the discrete convolution algebra, commutators, the witness
//!   construction and the orbit inequality evaluator.
//! * [`dynamics`]: log-domain orbits, angle statistics, weak-null probes and
//!   Kronecker density searches.
//! * [`weakclosure`]: randomized Gaussian certificates that a point is not in
//!   the weak closure of a norm-growing set.
//!
//! Lower-triangular Toeplitz operators (the convolution algebra) multiply
//! through a symmetric convolution, so commutation relations inside the
//! algebra hold with a zero residual rather than to rounding.

pub mod algebra;
pub mod dynamics;
pub mod error;
pub mod fnspace;
pub mod linop;
pub mod operators;
pub mod rng;
pub mod weakclosure;

pub use error::{LabError, Result};
pub use fnspace::{DualFunctional, Grid, GridFunction, GridKind};
pub use linop::{LinOp, Structure};

use nalgebra::ComplexField;
pub use num_complex::Complex64;

/// Scalar field of the laboratory: `f64` (the default) or `Complex64`.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const IS_COMPLEX: bool;

    /// Builds a scalar from real and imaginary parts. Real scalars drop `im`.
    fn from_parts(re: f64, im: f64) -> Self;

    fn re_part(self) -> f64;

    fn im_part(self) -> f64;
}

impl Scalar for f64 {
    const IS_COMPLEX: bool = false;

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }

    fn re_part(self) -> f64 {
        self
    }

    fn im_part(self) -> f64 {
        0.0
    }
}

impl Scalar for Complex64 {
    const IS_COMPLEX: bool = true;

    fn from_parts(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    fn re_part(self) -> f64 {
        self.re
    }

    fn im_part(self) -> f64 {
        self.im
    }
}
