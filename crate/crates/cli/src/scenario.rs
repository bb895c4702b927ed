//! Scenario documents: `{ "name", "kind", "seed", "params" }`.
//!
//! Every parameter has a default, unknown keys are rejected, and the whole
//! document is validated before any output is written.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};
use crate::opspec::{Expr, OpSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Verify,
    Orbit,
    Certify,
    Kronecker,
    Commutant,
    Witness,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Orbit => "orbit",
            Self::Certify => "certify",
            Self::Kronecker => "kronecker",
            Self::Commutant => "commutant",
            Self::Witness => "witness",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    kind: Kind,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    params: Option<Value>,
}

/// A validated scenario, ready to run.
#[derive(Clone, Debug, Serialize)]
pub struct Scenario {
    pub name: String,
    pub kind: Kind,
    pub seed: u64,
    pub params: Params,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum Params {
    Verify(VerifyParams),
    Orbit(OrbitParams),
    Certify(CertifyParams),
    Kronecker(KroneckerParams),
    Commutant(CommutantParams),
    Witness(WitnessParams),
}

/// Command-line overrides applied on top of the document.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub grid: Option<usize>,
}

impl Scenario {
    pub fn from_path(path: &Path, overrides: Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text, overrides).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str, overrides: Overrides) -> Result<Self> {
        let raw: RawScenario = serde_json::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        Self::build(raw.name, raw.kind, raw.seed, raw.params, overrides)
    }

    /// A scenario with default parameters, used when no `--config` is given.
    pub fn default_for(kind: Kind, overrides: Overrides) -> Result<Self> {
        Self::build(kind.as_str().to_string(), kind, None, None, overrides)
    }

    fn build(name: String, kind: Kind, seed: Option<u64>, params: Option<Value>, ov: Overrides) -> Result<Self> {
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(CliError::config(format!("scenario name `{name}` must be non-empty [A-Za-z0-9_-]")));
        }
        let params = params.unwrap_or(Value::Object(Default::default()));
        fn typed<T: for<'de> Deserialize<'de>>(v: Value) -> Result<T> {
            serde_json::from_value(v).map_err(|e| CliError::config(format!("params: {e}")))
        }
        let mut params = match kind {
            Kind::Verify => Params::Verify(typed(params)?),
            Kind::Orbit => Params::Orbit(typed(params)?),
            Kind::Certify => Params::Certify(typed(params)?),
            Kind::Kronecker => Params::Kronecker(typed(params)?),
            Kind::Commutant => Params::Commutant(typed(params)?),
            Kind::Witness => Params::Witness(typed(params)?),
        };
        if let Some(n) = ov.grid {
            params.override_grid(n);
        }
        params.validate()?;
        Ok(Self { name, kind, seed: ov.seed.or(seed).unwrap_or(0), params })
    }
}

/// A norm exponent in `[1, ∞]`; JSON accepts a number or `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExponentRepr", into = "ExponentRepr")]
pub struct Exponent(pub f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ExponentRepr {
    Num(f64),
    Text(String),
}

impl TryFrom<ExponentRepr> for Exponent {
    type Error = String;

    fn try_from(r: ExponentRepr) -> std::result::Result<Self, String> {
        let p = match r {
            ExponentRepr::Num(p) => p,
            ExponentRepr::Text(s) if matches!(s.as_str(), "inf" | "infinity") => f64::INFINITY,
            ExponentRepr::Text(s) => return Err(format!("exponent `{s}`")),
        };
        if p >= 1.0 {
            Ok(Self(p))
        } else {
            Err(format!("exponent {p} outside [1, inf]"))
        }
    }
}

impl From<Exponent> for ExponentRepr {
    fn from(e: Exponent) -> Self {
        if e.0.is_finite() {
            Self::Num(e.0)
        } else {
            Self::Text("inf".into())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Commutator,
    Der,
    Leibniz,
    G1Chain,
    IntertwiningExact,
    Star,
    VolterraCalculus,
    IntertwiningRate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyParams {
    pub grids: Vec<usize>,
    pub checks: Vec<Check>,
    pub operator: String,
    pub derivation: String,
    pub alpha: String,
    pub der_n_max: u32,
    pub witnesses: usize,
    pub g1_n_max: usize,
    pub samples: usize,
    pub tol: VerifyTol,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            grids: vec![512],
            checks: vec![
                Check::Commutator,
                Check::Der,
                Check::Leibniz,
                Check::G1Chain,
                Check::IntertwiningExact,
                Check::Star,
            ],
            operator: "V".into(),
            derivation: "M".into(),
            alpha: "2*x".into(),
            der_n_max: 10,
            witnesses: 4,
            g1_n_max: 40,
            samples: 8,
            tol: VerifyTol::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyTol {
    pub commutator: f64,
    /// `‖[M,V] − V²‖ ≤ continuum·h·‖V‖`.
    pub continuum: f64,
    pub der: f64,
    pub leibniz: f64,
    pub margin: f64,
    pub chain: f64,
    pub star: f64,
    pub calculus: f64,
    /// Allowed `|ratio/2 − 1|` for the error ratio between `N/2` and `N`.
    pub calculus_ratio: f64,
    pub intertwining_spread: f64,
}

impl Default for VerifyTol {
    fn default() -> Self {
        Self {
            commutator: 1e-13,
            continuum: 1.5,
            der: 1e-11,
            leibniz: 1e-13,
            margin: 1e-9,
            chain: 1e-10,
            star: 1e-13,
            calculus: 5e-3,
            calculus_ratio: 0.2,
            intertwining_spread: 1.25,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitParams {
    pub grid: usize,
    pub ps: Vec<Exponent>,
    pub operator: String,
    /// An expression in `x`, or `random_signed` / `random_positive`.
    pub x: String,
    /// Number of random inputs (ignored for expressions).
    pub inputs: usize,
    pub functionals: Vec<String>,
    pub n_max: usize,
    pub angle_closed_form: Option<AngleCheck>,
    pub weak_null: Option<WeakNullCheck>,
    pub quasinilpotency: Option<QuasinilpotencyCheck>,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            grid: 512,
            ps: vec![Exponent(2.0)],
            operator: "V".into(),
            x: "1".into(),
            inputs: 1,
            functionals: vec!["1".into()],
            n_max: 40,
            angle_closed_form: None,
            weak_null: None,
            quasinilpotency: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleCheck {
    pub n_min: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakNullCheck {
    pub n_lo: usize,
    pub n_hi: usize,
    pub factor: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasinilpotencyCheck {
    pub n: usize,
    pub tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifyParams {
    /// Points `xₙ = (n+1)^growth eₙ`, `n < count`, with target `y = 0`.
    pub count: usize,
    pub growth: f64,
    pub p: Exponent,
    pub q: Exponent,
    pub k: usize,
    pub trials: usize,
    pub truncation: Option<usize>,
    pub replay: bool,
    pub small_ball: Option<SmallBall>,
}

impl Default for CertifyParams {
    fn default() -> Self {
        Self {
            count: 200,
            growth: 1.0,
            p: Exponent(2.0),
            q: Exponent(1.5),
            k: 4,
            trials: 5,
            truncation: None,
            replay: true,
            small_ball: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallBall {
    pub indices: Vec<usize>,
    pub epsilon: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KroneckerParams {
    pub operator: String,
    pub targets: usize,
    pub delta: f64,
    pub n_max: u64,
    pub obstruction_samples: usize,
    pub obstruction_tol: f64,
    pub two_term: usize,
    pub two_term_max_norm: f64,
    pub two_term_delta: f64,
}

impl Default for KroneckerParams {
    fn default() -> Self {
        Self {
            operator: "kronecker:2*pi*(sqrt(2)-1),2*pi*(sqrt(3)-1)".into(),
            targets: 20,
            delta: 0.15,
            n_max: 1_000_000,
            obstruction_samples: 10_000,
            obstruction_tol: 1e-12,
            two_term: 10,
            two_term_max_norm: 2.0,
            two_term_delta: 0.2,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommutantParams {
    pub a: String,
    pub b: String,
    pub grids: Vec<usize>,
    pub expect_dimension: usize,
    pub min_gap: f64,
}

impl Default for CommutantParams {
    fn default() -> Self {
        Self { a: "V".into(), b: "M".into(), grids: vec![8, 16], expect_dimension: 1, min_gap: 1e3 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WitnessParams {
    pub grid: usize,
    pub operator: String,
    pub derivation: String,
    pub x: String,
    /// Seed kernel of the witnesses: an expression in `x`, or `random`.
    pub w: String,
    pub witnesses: usize,
    pub n_max: usize,
    pub margin_tol: f64,
    pub chain_tol: f64,
    pub le3: Option<Le3Check>,
    pub sobolev: Option<SobolevCheck>,
}

impl Default for WitnessParams {
    fn default() -> Self {
        Self {
            grid: 128,
            operator: "V".into(),
            derivation: "M".into(),
            x: "1".into(),
            w: "random".into(),
            witnesses: 10,
            n_max: 100,
            margin_tol: 1e-9,
            chain_tol: 1e-10,
            le3: None,
            sobolev: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Le3Check {
    pub n_max: usize,
    pub k: usize,
    pub trials: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SobolevCheck {
    pub samples: usize,
    /// `|‖(V²f)′‖₂ − ‖Vf‖₂| ≤ factor·h·max(1, ‖f‖_∞)`.
    pub factor: f64,
}

pub const MAX_COMMUTANT_GRID: usize = 64;
pub const MIN_SMALL_BALL_SAMPLES: usize = 10_000;

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(CliError::config(format!("{name} must be positive")));
    }
    Ok(())
}

fn finite_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(CliError::config(format!("{name} must be finite and positive, got {v}")));
    }
    Ok(())
}

fn interval_op(name: &str, spec: &str) -> Result<OpSpec> {
    let op = OpSpec::parse(spec)?;
    if op.owns_grid() {
        return Err(CliError::config(format!("{name} `{spec}` must act on the unit interval")));
    }
    Ok(op)
}

fn input(name: &str, src: &str, random: &[&str]) -> Result<()> {
    if !random.contains(&src) {
        Expr::parse(src).map_err(|e| CliError::config(format!("{name}: {e}")))?;
    }
    Ok(())
}

impl Params {
    fn override_grid(&mut self, n: usize) {
        match self {
            Self::Verify(p) => p.grids = vec![n],
            Self::Orbit(p) => p.grid = n,
            Self::Certify(p) => p.count = n,
            Self::Kronecker(_) => {}
            Self::Commutant(p) => p.grids = vec![n],
            Self::Witness(p) => p.grid = n,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Verify(p) => {
                if p.grids.is_empty() || p.grids.iter().any(|&n| n < 4) {
                    return Err(CliError::config("verify grids must be non-empty with N ≥ 4"));
                }
                interval_op("operator", &p.operator)?;
                interval_op("derivation", &p.derivation)?;
                Expr::parse(&p.alpha)?;
                positive("witnesses", p.witnesses)?;
                positive("samples", p.samples)?;
                positive("der_n_max", p.der_n_max as usize)?;
                let t = &p.tol;
                for (name, v) in [
                    ("tol.commutator", t.commutator),
                    ("tol.continuum", t.continuum),
                    ("tol.der", t.der),
                    ("tol.leibniz", t.leibniz),
                    ("tol.margin", t.margin),
                    ("tol.chain", t.chain),
                    ("tol.star", t.star),
                    ("tol.calculus", t.calculus),
                    ("tol.calculus_ratio", t.calculus_ratio),
                    ("tol.intertwining_spread", t.intertwining_spread),
                ] {
                    finite_positive(name, v)?;
                }
            }
            Self::Orbit(p) => {
                positive("grid", p.grid)?;
                positive("n_max", p.n_max)?;
                positive("inputs", p.inputs)?;
                if p.ps.is_empty() {
                    return Err(CliError::config("ps must be non-empty"));
                }
                OpSpec::parse(&p.operator)?;
                input("x", &p.x, &["random_signed", "random_positive"])?;
                for f in &p.functionals {
                    Expr::parse(f)?;
                }
                if let Some(c) = &p.angle_closed_form {
                    if p.functionals.is_empty() || c.n_min > p.n_max {
                        return Err(CliError::config("angle_closed_form needs a functional and n_min ≤ n_max"));
                    }
                    finite_positive("angle_closed_form.tol", c.tol)?;
                }
                if let Some(c) = &p.weak_null {
                    if p.functionals.is_empty() || c.n_lo >= c.n_hi || c.n_hi > p.n_max {
                        return Err(CliError::config("weak_null needs functionals and n_lo < n_hi ≤ n_max"));
                    }
                    finite_positive("weak_null.factor", c.factor)?;
                }
                if let Some(c) = &p.quasinilpotency {
                    positive("quasinilpotency.n", c.n)?;
                    finite_positive("quasinilpotency.tol", c.tol)?;
                }
            }
            Self::Certify(p) => {
                positive("count", p.count)?;
                positive("k", p.k)?;
                positive("trials", p.trials)?;
                if !p.growth.is_finite() || !p.p.0.is_finite() || !p.q.0.is_finite() {
                    return Err(CliError::config("growth, p and q must be finite"));
                }
                if let Some(sb) = &p.small_ball {
                    if sb.samples < MIN_SMALL_BALL_SAMPLES {
                        return Err(CliError::config(format!("small_ball.samples must be ≥ {MIN_SMALL_BALL_SAMPLES}")));
                    }
                    if let Some(&bad) = sb.indices.iter().find(|&&n| n >= p.count) {
                        return Err(CliError::config(format!("small_ball index {bad} ≥ count {}", p.count)));
                    }
                    finite_positive("small_ball.epsilon", sb.epsilon)?;
                }
            }
            Self::Kronecker(p) => {
                if !OpSpec::parse(&p.operator)?.is_complex() {
                    return Err(CliError::config("kronecker operator must be `kronecker:<angles>`"));
                }
                finite_positive("delta", p.delta)?;
                finite_positive("two_term_delta", p.two_term_delta)?;
                finite_positive("two_term_max_norm", p.two_term_max_norm)?;
                finite_positive("obstruction_tol", p.obstruction_tol)?;
            }
            Self::Commutant(p) => {
                OpSpec::parse(&p.a)?;
                OpSpec::parse(&p.b)?;
                if p.grids.is_empty() || p.grids.iter().any(|&n| n == 0 || n > MAX_COMMUTANT_GRID) {
                    return Err(CliError::config(format!("commutant grids must lie in 1..={MAX_COMMUTANT_GRID}")));
                }
                finite_positive("min_gap", p.min_gap)?;
            }
            Self::Witness(p) => {
                if p.grid < 4 {
                    return Err(CliError::config("witness grid must be ≥ 4"));
                }
                interval_op("operator", &p.operator)?;
                interval_op("derivation", &p.derivation)?;
                input("x", &p.x, &[])?;
                input("w", &p.w, &["random"])?;
                positive("witnesses", p.witnesses)?;
                finite_positive("margin_tol", p.margin_tol)?;
                finite_positive("chain_tol", p.chain_tol)?;
                if let Some(l) = &p.le3 {
                    positive("le3.n_max", l.n_max)?;
                    positive("le3.k", l.k)?;
                    positive("le3.trials", l.trials)?;
                }
                if let Some(s) = &p.sobolev {
                    positive("sobolev.samples", s.samples)?;
                    finite_positive("sobolev.factor", s.factor)?;
                }
            }
        }
        Ok(())
    }
}
