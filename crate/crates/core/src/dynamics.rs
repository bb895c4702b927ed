//! Orbits in the log domain and the statistics read off them.
//!
//! `Vⁿx` decays like `1/n!`, which underflows `f64` near `n = 170`, so orbits
//! carry a unit vector and an accumulated `log ‖Tⁿx‖`.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fnspace::{pair, DualFunctional, GridFunction};
use crate::linop::LinOp;
use crate::rng::stream_rng;
use crate::weakclosure::{build_norming_family, gaussian_certificate, CertificateOutcome, CertifyParams};
use crate::{Complex64, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct OrbitRecord<T: Scalar = f64> {
    pub n: usize,
    /// `log ‖Tⁿx‖_p`.
    pub log_norm: f64,
    pub unit: GridFunction<T>,
    /// `g_j(Tⁿx)/‖Tⁿx‖_p` for each tracked functional.
    pub functional_values: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Orbit<T: Scalar = f64> {
    pub records: Vec<OrbitRecord<T>>,
    /// Step at which `T` annihilated the iterate, if it did.
    pub annihilated_at: Option<usize>,
}

/// `Tⁿx` for `n = 0..=n_max`, renormalized every step.
pub fn orbit<T: Scalar>(
    t: &LinOp<T>,
    x: &GridFunction<T>,
    n_max: usize,
    functionals: &[DualFunctional<T>],
) -> Result<Orbit<T>> {
    let norm0 = x.norm();
    if norm0 == 0.0 {
        return Err(LabError::ZeroVector);
    }
    let record = |n, log_norm, unit: GridFunction<T>| -> Result<OrbitRecord<T>> {
        let functional_values = functionals.iter().map(|g| pair(g, &unit)).collect::<Result<_>>()?;
        Ok(OrbitRecord { n, log_norm, unit, functional_values })
    };
    let mut records = Vec::with_capacity(n_max + 1);
    records.push(record(0, norm0.ln(), x.scaled(T::from_real(1.0 / norm0)))?);
    let mut annihilated_at = None;
    for n in 1..=n_max {
        let prev = &records[n - 1];
        let next = t.apply(&prev.unit)?;
        let s = next.norm();
        if s == 0.0 {
            annihilated_at = Some(n);
            break;
        }
        let log_norm = prev.log_norm + s.ln();
        records.push(record(n, log_norm, next.scaled(T::from_real(1.0 / s)))?);
    }
    Ok(Orbit { records, annihilated_at })
}

impl<T: Scalar> Orbit<T> {
    /// `n, log_norm, functional_1, …`; complex values add a `functional_j_im` column.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let count = self.records.first().map_or(0, |r| r.functional_values.len());
        let mut header = vec!["n".to_string(), "log_norm".to_string()];
        for j in 1..=count {
            header.push(format!("functional_{j}"));
            if T::IS_COMPLEX {
                header.push(format!("functional_{j}_im"));
            }
        }
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![r.n.to_string(), r.log_norm.to_string()];
            for v in &r.functional_values {
                row.push(v.re_part().to_string());
                if T::IS_COMPLEX {
                    row.push(v.im_part().to_string());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `aₙ = |f(Tⁿx)|/(‖f‖_q‖Tⁿx‖_p)` for `n = 0..=n_max`.
pub fn angle_statistic<T: Scalar>(
    t: &LinOp<T>,
    x: &GridFunction<T>,
    f: &DualFunctional<T>,
    n_max: usize,
) -> Result<Vec<f64>> {
    let fnorm = f.norm();
    if fnorm == 0.0 {
        return Err(LabError::ZeroVector);
    }
    let orb = orbit(t, x, n_max, std::slice::from_ref(f))?;
    if let Some(step) = orb.annihilated_at {
        return Err(LabError::ZeroOrbit { step });
    }
    Ok(orb.records.iter().map(|r| r.functional_values[0].modulus() / fnorm).collect())
}

/// `|g_j(Tⁿx)|/‖Tⁿx‖_p` per functional and step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakNullReport {
    /// `ratios[j][n]`.
    pub ratios: Vec<Vec<f64>>,
}

impl WeakNullReport {
    /// `sup_j` ratio at step `n`.
    pub fn sup_at(&self, n: usize) -> f64 {
        self.ratios.iter().map(|r| r[n]).fold(0.0, f64::max)
    }

    /// `max_j ratio_j(n_hi)/ratio_j(n_lo)`; functionals vanishing at `n_lo` are skipped.
    pub fn decay_factor(&self, n_lo: usize, n_hi: usize) -> f64 {
        self.ratios
            .iter()
            .filter(|r| r[n_lo] > 0.0)
            .map(|r| r[n_hi] / r[n_lo])
            .fold(0.0, f64::max)
    }

    /// Every functional's ratio fell by at least `factor` between `n_lo` and `n_hi`.
    pub fn is_null(&self, n_lo: usize, n_hi: usize, factor: f64) -> bool {
        self.decay_factor(n_lo, n_hi) <= factor
    }
}

pub fn weak_null_test<T: Scalar>(
    t: &LinOp<T>,
    x: &GridFunction<T>,
    functionals: &[DualFunctional<T>],
    n_max: usize,
) -> Result<WeakNullReport> {
    let orb = orbit(t, x, n_max, functionals)?;
    if let Some(step) = orb.annihilated_at {
        return Err(LabError::ZeroOrbit { step });
    }
    let ratios = (0..functionals.len())
        .map(|j| orb.records.iter().map(|r| r.functional_values[j].modulus()).collect())
        .collect();
    Ok(WeakNullReport { ratios })
}

/// `max_{s<t} ||g_t f_s| − |g_s f_t||`, zero whenever `|g| = c|f|` componentwise.
pub fn obstruction_violation(f: &[Complex64], g: &[Complex64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(LabError::LengthMismatch { expected: f.len(), got: g.len() });
    }
    let mut worst: f64 = 0.0;
    for s in 0..f.len() {
        for t in s + 1..f.len() {
            worst = worst.max(((g[t] * f[s]).norm() - (g[s] * f[t]).norm()).abs());
        }
    }
    Ok(worst)
}

/// Worst [`obstruction_violation`] over `g = z·Tⁿf`, `T = diag(e^{iθ_j})`, at the sampled `(z, n)`.
pub fn projective_obstruction(f: &[Complex64], angles: &[f64], samples: &[(Complex64, u64)]) -> Result<f64> {
    if f.len() != angles.len() {
        return Err(LabError::LengthMismatch { expected: angles.len(), got: f.len() });
    }
    if f.iter().all(|v| *v == Complex64::new(0.0, 0.0)) {
        return Err(LabError::ZeroVector);
    }
    let mut worst: f64 = 0.0;
    let mut g = vec![Complex64::new(0.0, 0.0); f.len()];
    for &(z, n) in samples {
        for ((gj, fj), &theta) in g.iter_mut().zip(f).zip(angles) {
            *gj = z * Complex64::from_polar(1.0, (n as f64 * theta).rem_euclid(TAU)) * fj;
        }
        worst = worst.max(obstruction_violation(f, &g)?);
    }
    Ok(worst)
}

/// `count` pairs `(z, n)`: `z` standard complex normal, `n` uniform in `0..=n_max`.
pub fn sample_projective_pairs(seed: u64, count: usize, n_max: u64) -> Vec<(Complex64, u64)> {
    let mut rng = stream_rng(seed, 0);
    let mut normal = crate::rng::Normals::new(stream_rng(seed, 1));
    (0..count)
        .map(|_| {
            let z = Complex64::new(normal.next_normal(), normal.next_normal());
            (z, rng.random_range(0..=n_max))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub angles: Vec<f64>,
    /// `[re, im]` per component.
    pub target: Vec<[f64; 2]>,
    pub delta: f64,
    pub n_found: Option<u64>,
    pub elapsed_steps: u64,
}

fn check_unimodular(target: &[Complex64]) -> Result<()> {
    if let Some(j) = target.iter().position(|t| (t.norm() - 1.0).abs() > 1e-9) {
        return Err(LabError::InvalidArgument(format!("target component {j} is not unimodular")));
    }
    Ok(())
}

fn sup_distance(angles: &[f64], target: &[Complex64], n: u64) -> f64 {
    angles
        .iter()
        .zip(target)
        .map(|(&th, &t)| (Complex64::from_polar(1.0, (n as f64 * th).rem_euclid(TAU)) - t).norm())
        .fold(0.0, f64::max)
}

/// Least `n ≤ n_max` with `maxⱼ |e^{inθⱼ} − targetⱼ| < δ`, by linear scan.
pub fn kronecker_density_search(
    angles: &[f64],
    target: &[Complex64],
    delta: f64,
    n_max: u64,
) -> Result<DensityResult> {
    if angles.len() != target.len() {
        return Err(LabError::LengthMismatch { expected: angles.len(), got: target.len() });
    }
    check_unimodular(target)?;
    let mut n_found = None;
    let mut steps = 0;
    for n in 0..=n_max {
        steps = n + 1;
        if sup_distance(angles, target, n) < delta {
            n_found = Some(n);
            break;
        }
    }
    Ok(DensityResult {
        angles: angles.to_vec(),
        target: target.iter().map(|t| [t.re, t.im]).collect(),
        delta,
        n_found,
        elapsed_steps: steps,
    })
}

impl DensityResult {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `g ≈ r(Tᵏ𝟙 + Tᵐ𝟙)` in the sup norm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoTermResult {
    pub k: u64,
    pub m: u64,
    pub r: f64,
    pub error: f64,
}

/// Splits `g/r`, `r = ‖g‖_∞/2`, into two unimodular vectors and locates each on the orbit of `𝟙`.
pub fn two_term_approximation(
    angles: &[f64],
    g: &[Complex64],
    delta: f64,
    n_max: u64,
) -> Result<Option<TwoTermResult>> {
    if angles.len() != g.len() {
        return Err(LabError::LengthMismatch { expected: angles.len(), got: g.len() });
    }
    let r = g.iter().map(|v| v.norm()).fold(0.0, f64::max) / 2.0;
    if r == 0.0 {
        return Ok(Some(TwoTermResult { k: 0, m: 0, r: 0.0, error: 0.0 }));
    }
    let (g1, g2): (Vec<Complex64>, Vec<Complex64>) = g
        .iter()
        .map(|&v| {
            let w = v / r;
            // w = e^{i(ψ+β)} + e^{i(ψ−β)} with 2cos β = |w|
            let beta = (w.norm() / 2.0).min(1.0).acos();
            let psi = w.arg();
            (Complex64::from_polar(1.0, psi + beta), Complex64::from_polar(1.0, psi - beta))
        })
        .unzip();
    let sub = (delta / (2.0 * r)).min(1.0);
    let (Some(k), Some(m)) = (
        kronecker_density_search(angles, &g1, sub, n_max)?.n_found,
        kronecker_density_search(angles, &g2, sub, n_max)?.n_found,
    ) else {
        return Ok(None);
    };
    let error = angles
        .iter()
        .zip(g)
        .map(|(&th, &v)| {
            let e = |n: u64| Complex64::from_polar(1.0, (n as f64 * th).rem_euclid(TAU));
            ((e(k) + e(m)) * r - v).norm()
        })
        .fold(0.0, f64::max);
    Ok(Some(TwoTermResult { k, m, r, error }))
}

/// Hypotheses and outcome of the scaled-set pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Le3Report {
    /// `b = u(y)`.
    pub b: f64,
    /// `maxₙ (n+1)|u(xₙ)|/‖xₙ‖`.
    pub decay_constant: f64,
    /// `‖yₙ‖` for `yₙ = xₙ/f(xₙ)`, `f = u/b`.
    pub scaled_norms: Vec<f64>,
    /// `minₙ ‖yₙ‖·c/((n+1)|b|)`; at least 1 when the decay bound holds with constant `c`.
    pub growth_ratio: f64,
    pub outcome: CertificateOutcome,
}

/// Checks `|u(xₙ)| ≤ c(n+1)⁻¹‖xₙ‖`, rescales `yₙ = xₙ/f(xₙ)` with `f = u/u(y)`, and
/// asks for a Gaussian certificate that `y` is outside the weak closure of `{yₙ}`.
///
/// With `claimed = Some(c)` the measured constant must not exceed `c`; otherwise
/// the measured constant is used.
pub fn le3_pipeline(
    points: &[GridFunction<f64>],
    u: &DualFunctional<f64>,
    y: &GridFunction<f64>,
    claimed: Option<f64>,
    exps: crate::fnspace::NormingExponents,
    params: &CertifyParams,
) -> Result<Le3Report> {
    if points.is_empty() {
        return Err(LabError::EmptyPointSet);
    }
    let b = pair(u, y)?;
    if b == 0.0 {
        return Err(LabError::InvalidArgument("u(y) = 0".into()));
    }
    let mut decay_constant: f64 = 0.0;
    let mut scaled = Vec::new();
    let mut scaled_norms = Vec::new();
    let mut growth_ratio = f64::INFINITY;
    let mut ratios = Vec::with_capacity(points.len());
    for x in points {
        let nx = x.norm();
        if nx == 0.0 {
            return Err(LabError::ZeroVector);
        }
        // work with x/‖x‖: yₙ is invariant under rescaling xₙ
        let unit = x.scaled(1.0 / nx);
        let ux = pair(u, &unit)?;
        ratios.push(ux.abs());
        let n1 = (ratios.len()) as f64;
        decay_constant = decay_constant.max(n1 * ux.abs());
        if ux != 0.0 {
            let yn = unit.scaled(b / ux);
            scaled_norms.push(yn.norm());
            scaled.push(yn);
        } else {
            scaled_norms.push(f64::INFINITY);
        }
    }
    let c = match claimed {
        Some(c) => {
            if let Some(n) = ratios.iter().enumerate().position(|(n, r)| (n + 1) as f64 * r > c * (1.0 + 1e-9)) {
                return Err(LabError::DecayHypothesis { n, ratio: (n + 1) as f64 * ratios[n], bound: c });
            }
            c
        }
        None => decay_constant,
    };
    for (n, &norm) in scaled_norms.iter().enumerate() {
        if norm.is_finite() {
            growth_ratio = growth_ratio.min(norm * c / ((n + 1) as f64 * b.abs()));
        }
    }
    if scaled.is_empty() {
        return Err(LabError::EmptyPointSet);
    }
    let family = build_norming_family(&scaled, y, exps)?;
    let outcome = gaussian_certificate(&family, params)?;
    Ok(Le3Report { b, decay_constant, scaled_norms, growth_ratio, outcome })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspace::{conjugate_exponent, Grid, NormingExponents};
    use crate::operators::{kronecker_mult, shift_example_pair, volterra};

    fn ln_factorial(n: usize) -> f64 {
        (1..=n).map(|k| (k as f64).ln()).sum()
    }

    #[test]
    fn identity_orbit_is_constant() {
        let g = Grid::unit_interval(32).unwrap();
        let x = GridFunction::from_fn(g, 2.0, |t| 1.0 + t).unwrap();
        let orb = orbit(&LinOp::identity(g), &x, 10, &[]).unwrap();
        assert!(orb.records.iter().all(|r| r.log_norm == orb.records[0].log_norm));
        assert!(orb.records.iter().all(|r| r.unit == orb.records[0].unit));
    }

    #[test]
    fn volterra_orbit_log_norms() {
        let g = Grid::unit_interval(2048).unwrap();
        let v = volterra::<f64>(g);
        for p in [1.0, 2.0] {
            let one = GridFunction::constant(g, 1.0, p).unwrap();
            let gfun = DualFunctional::from_fn(g, conjugate_exponent(p), |t| t * t).unwrap();
            let orb = orbit(&v, &one, 30, std::slice::from_ref(&gfun)).unwrap();
            for r in &orb.records {
                let n = r.n as f64;
                let exact = -ln_factorial(r.n) - (n * p + 1.0).ln() / p;
                let err = (r.log_norm - exact).abs();
                assert!(err <= 0.02 * exact.abs().max(1.0), "p = {p}, n = {n}");
                // first order in h
                assert!(err <= (n + 1.0) * (n + 1.0) * g.h(), "p = {p}, n = {n}");
                assert!((r.unit.norm() - 1.0).abs() < 1e-12);
                assert!(r.functional_values[0].abs() <= gfun.norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn angle_statistic_examples() {
        let g = Grid::unit_interval(2048).unwrap();
        let v = volterra::<f64>(g);
        let one = GridFunction::constant(g, 1.0, 2.0).unwrap();
        let f = DualFunctional::from_fn(g, 2.0, |_| 1.0).unwrap();
        let a = angle_statistic(&v, &one, &f, 40).unwrap();
        for (n, an) in a.iter().enumerate().skip(1) {
            let exact = ((2 * n + 1) as f64).sqrt() / (n + 1) as f64;
            assert!((an / exact - 1.0).abs() < 0.02);
        }
        let s = Grid::sequence(4).unwrap();
        let x = GridFunction::basis(s, 0, 2.0).unwrap();
        let orth = DualFunctional::new(s, vec![0.0, 1.0, 0.0, 0.0], 2.0).unwrap();
        assert!(angle_statistic(&LinOp::identity(s), &x, &orth, 5).unwrap().iter().all(|&v| v == 0.0));
        let zero = DualFunctional::new(s, vec![0.0; 4], 2.0).unwrap();
        assert!(angle_statistic(&LinOp::identity(s), &x, &zero, 5).is_err());
    }

    #[test]
    fn shift_example_angle_does_not_vanish() {
        let (t, _) = shift_example_pair(64).unwrap();
        let s = t.grid();
        let x = GridFunction::constant(s, 1.0, 2.0).unwrap();
        let e0 = DualFunctional::new(s, (0..64).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(), 2.0).unwrap();
        let a = angle_statistic(&t, &x, &e0, 200).unwrap();
        let tail = a[150..].iter().copied().fold(0.0, f64::max);
        assert!(tail > 0.1, "tail {tail}");
    }

    #[test]
    fn weak_null_examples() {
        let g = Grid::unit_interval(512).unwrap();
        let x = GridFunction::from_fn(g, 2.0, |t| 1.0 + t * t).unwrap();
        let gs = vec![DualFunctional::from_fn(g, 2.0, |_| 1.0).unwrap()];
        let id = weak_null_test(&LinOp::identity(g), &x, &gs, 20).unwrap();
        assert_eq!(id.ratios[0][0], id.ratios[0][20]);
        assert!(!id.is_null(5, 20, 0.5));
        let v = weak_null_test(&volterra::<f64>(g), &x, &gs, 100).unwrap();
        assert!(v.sup_at(100) < v.sup_at(10));
    }

    #[test]
    fn projective_obstruction_examples() {
        let angles = [1.3, 2.9];
        let f = [Complex64::new(0.4, -1.1), Complex64::new(2.0, 0.3)];
        assert_eq!(projective_obstruction(&f, &angles, &[(Complex64::new(1.0, 0.0), 0)]).unwrap(), 0.0);
        let samples = sample_projective_pairs(11, 2000, 10_000);
        assert!(projective_obstruction(&f, &angles, &samples).unwrap() <= 1e-12);
        let mut g = f;
        g[1] *= 1.01;
        let v = obstruction_violation(&f, &g).unwrap();
        assert!((v - 0.01 * (f[0] * f[1]).norm()).abs() < 1e-12);
        assert!(projective_obstruction(&[Complex64::new(0.0, 0.0); 2], &angles, &samples).is_err());
        // consistent with the multiplier itself
        let t = kronecker_mult(&angles).unwrap();
        let fx = GridFunction::new(t.grid(), f.to_vec(), f64::INFINITY).unwrap();
        let tf = t.pow(7).unwrap().apply(&fx).unwrap();
        assert!(obstruction_violation(&f, tf.samples()).unwrap() <= 1e-14);
    }

    #[test]
    fn density_search_examples() {
        let angles = [TAU * (2f64.sqrt() - 1.0), TAU * (3f64.sqrt() - 1.0)];
        let target: Vec<_> = angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
        let res = kronecker_density_search(&angles, &target, 1e-9, 10).unwrap();
        assert_eq!(res.n_found, Some(1));
        let one_d = [TAU * (5f64.sqrt() - 2.0)];
        let t = [Complex64::from_polar(1.0, 2.0)];
        let res = kronecker_density_search(&one_d, &t, 0.1, 10_000).unwrap();
        let n = res.n_found.unwrap();
        assert!(n <= 1000);
        assert!(sup_distance(&one_d, &t, n) < 0.1);
        assert!(kronecker_density_search(&one_d, &[Complex64::new(2.0, 0.0)], 0.1, 10).is_err());
    }

    #[test]
    fn two_term_examples() {
        let angles = [TAU * (2f64.sqrt() - 1.0), TAU * (3f64.sqrt() - 1.0)];
        let g = [Complex64::new(1.2, -0.4), Complex64::new(-0.3, 0.1)];
        let res = two_term_approximation(&angles, &g, 0.2, 1_000_000).unwrap().unwrap();
        assert!(res.error < 0.2);
        let zero = [Complex64::new(0.0, 0.0); 2];
        assert_eq!(two_term_approximation(&angles, &zero, 0.2, 10).unwrap().unwrap().error, 0.0);
    }

    #[test]
    fn le3_ray_is_refused() {
        let s = Grid::sequence(8).unwrap();
        let y = GridFunction::from_fn(s, 2.0, |i| 1.0 + i).unwrap();
        let u = DualFunctional::riesz(&y);
        let points: Vec<_> = (1..6).map(|t| y.scaled(t as f64)).collect();
        let exps = NormingExponents::new(2.0, 1.5).unwrap();
        let params = CertifyParams { k: 2, trials: 3, seed: 1, truncation: None };
        assert!(matches!(
            le3_pipeline(&points, &u, &y, None, exps, &params),
            Err(LabError::TargetInSet { .. })
        ));
        let zero_u = DualFunctional::new(s, vec![0.0; 8], 2.0).unwrap();
        assert!(le3_pipeline(&points, &zero_u, &y, None, exps, &params).is_err());
    }

    #[test]
    fn le3_growing_points_certified() {
        // xₙ = e₀ + (n+1)e_{n+1}: u = e₀* decays like 1/n relative to ‖xₙ‖
        let s = Grid::sequence(60).unwrap();
        let y = GridFunction::basis(s, 0, 2.0).unwrap();
        let points: Vec<_> = (0..50)
            .map(|n| y.add(&GridFunction::basis(s, n + 1, 2.0).unwrap().scaled((n + 1) as f64)).unwrap())
            .collect();
        let u = DualFunctional::riesz(&y);
        let exps = NormingExponents::new(2.0, 1.5).unwrap();
        let params = CertifyParams { k: 4, trials: 5, seed: 42, truncation: None };
        let rep = le3_pipeline(&points, &u, &y, Some(2.0), exps, &params).unwrap();
        assert!(rep.growth_ratio >= 1.0);
        assert!(rep.outcome.certificate().is_some());
        assert!(matches!(
            le3_pipeline(&points, &u, &y, Some(0.5), exps, &params),
            Err(LabError::DecayHypothesis { n: 0, .. })
        ));
    }
}
