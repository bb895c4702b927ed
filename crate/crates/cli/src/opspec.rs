//! Operator spec strings and the arithmetic expressions they embed.
//!
//! `V`, `M`, `cesaro`, `T_alpha:<expr>`, `S_alpha:<expr>`, `R_s:<s>`, `conv:<expr>`,
//! `shift_example:<N>`, `kronecker:<θ1,θ2,...>`. Expressions are in the variable `x`
//! and may use `pi`, `e`, `sqrt`, `exp`, `ln`, `sin`, `cos`, `abs`, `^`.

use std::str::FromStr;

use volterra_lab::algebra::ConvElement;
use volterra_lab::fnspace::{DualFunctional, Grid, GridFunction};
use volterra_lab::operators::{
    cesaro, kronecker_mult, mult_by_x, r_s, shift_example_pair, volterra, weighted_volterra_s, weighted_volterra_t,
};
use volterra_lab::{Complex64, LinOp};

use crate::error::{CliError, Result};

/// A function of `x` given as an expression string.
#[derive(Clone, Debug, PartialEq)]
pub struct Expr {
    expr: meval::Expr,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self> {
        let expr: meval::Expr = src.parse().map_err(|e| CliError::config(format!("expression `{src}`: {e}")))?;
        // binding fails on free variables other than x
        let _ = expr.clone().bind("x").map_err(|e| CliError::config(format!("expression `{src}`: {e}")))?;
        Ok(Self { expr })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let f = self.expr.clone().bind("x").expect("checked at parse");
        f(x)
    }

    pub fn sample(&self, grid: Grid, p: f64) -> Result<GridFunction<f64>> {
        let f = self.expr.clone().bind("x").expect("checked at parse");
        Ok(GridFunction::from_fn(grid, p, f)?)
    }

    pub fn functional(&self, grid: Grid, q: f64) -> Result<DualFunctional<f64>> {
        let f = self.expr.clone().bind("x").expect("checked at parse");
        Ok(DualFunctional::from_fn(grid, q, f)?)
    }
}

/// Evaluates a closed expression such as `2*pi*(sqrt(2)-1)`.
pub fn constant(src: &str) -> Result<f64> {
    let v = meval::eval_str(src).map_err(|e| CliError::config(format!("constant `{src}`: {e}")))?;
    if !v.is_finite() {
        return Err(CliError::config(format!("constant `{src}` is not finite")));
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub enum OpSpec {
    Volterra,
    MultX,
    Cesaro,
    TAlpha(Expr),
    SAlpha(Expr),
    Rs(f64),
    Conv(Expr),
    ShiftExample(usize),
    Kronecker(Vec<f64>),
}

/// A built operator over either scalar field.
#[derive(Clone, Debug)]
pub enum AnyOp {
    Real(LinOp<f64>),
    Complex(LinOp<Complex64>),
}

impl AnyOp {
    pub fn grid(&self) -> Grid {
        match self {
            Self::Real(a) => a.grid(),
            Self::Complex(a) => a.grid(),
        }
    }

    pub fn real(self, what: &str) -> Result<LinOp<f64>> {
        match self {
            Self::Real(a) => Ok(a),
            Self::Complex(_) => Err(CliError::config(format!("{what} must be a real operator"))),
        }
    }
}

impl FromStr for OpSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s, None),
        };
        let need = || arg.ok_or_else(|| CliError::config(format!("operator `{head}` needs an argument")));
        let spec = match head {
            "V" => Self::Volterra,
            "M" => Self::MultX,
            "cesaro" => Self::Cesaro,
            "T_alpha" => Self::TAlpha(Expr::parse(need()?)?),
            "S_alpha" => Self::SAlpha(Expr::parse(need()?)?),
            "R_s" => Self::Rs(constant(need()?)?),
            "conv" => Self::Conv(Expr::parse(need()?)?),
            "shift_example" => {
                let a = need()?;
                let n: usize = a.parse().map_err(|_| CliError::config(format!("shift_example size `{a}`")))?;
                if n < 3 {
                    return Err(CliError::config("shift_example needs N ≥ 3"));
                }
                Self::ShiftExample(n)
            }
            "kronecker" => {
                let angles = need()?.split(',').map(constant).collect::<Result<Vec<_>>>()?;
                if angles.is_empty() {
                    return Err(CliError::config("kronecker needs at least one angle"));
                }
                Self::Kronecker(angles)
            }
            _ => return Err(CliError::config(format!("unknown operator spec `{s}`"))),
        };
        if matches!(head, "V" | "M" | "cesaro") && arg.is_some() {
            return Err(CliError::config(format!("operator `{head}` takes no argument")));
        }
        Ok(spec)
    }
}

impl OpSpec {
    pub fn parse(s: &str) -> Result<Self> {
        s.parse()
    }

    /// Operators that carry their own sequence-space grid and ignore the requested size.
    pub fn owns_grid(&self) -> bool {
        matches!(self, Self::ShiftExample(_) | Self::Kronecker(_))
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Self::Kronecker(_))
    }

    /// Builds the operator on the unit-interval grid with `n` nodes.
    pub fn build(&self, n: usize) -> Result<AnyOp> {
        let grid = || Grid::unit_interval(n);
        let weight = |e: &Expr| -> Result<GridFunction<f64>> { e.sample(grid()?, 1.0) };
        Ok(match self {
            Self::Volterra => AnyOp::Real(volterra(grid()?)),
            Self::MultX => AnyOp::Real(mult_by_x(grid()?)),
            Self::Cesaro => AnyOp::Real(cesaro(grid()?)),
            Self::TAlpha(e) => AnyOp::Real(weighted_volterra_t(grid()?, &weight(e)?)?),
            Self::SAlpha(e) => AnyOp::Real(weighted_volterra_s(grid()?, &weight(e)?)?),
            Self::Rs(s) => AnyOp::Real(r_s(grid()?, *s)),
            Self::Conv(e) => {
                let g = grid()?;
                AnyOp::Real(ConvElement::from_fn(g, |x| e.eval(x)).matrix())
            }
            Self::ShiftExample(n) => AnyOp::Real(shift_example_pair(*n)?.0),
            Self::Kronecker(angles) => AnyOp::Complex(kronecker_mult(angles)?),
        })
    }
}
