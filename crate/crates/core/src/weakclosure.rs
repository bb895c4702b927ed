//! Gaussian certificates that a point lies outside the weak closure of a finite set.
//!
//! For points `xₙ` and a target `y`, shift to `xₙ′ = xₙ − y` and build the scaled
//! norming family `fₙ` (`‖fₙ‖ = ‖xₙ′‖^{−q/p}`, `fₙ(xₙ′) = ‖xₙ′‖^{(p−q)/p}`).
//! Random functionals `u_j = Σₙ γₙ⁽ʲ⁾fₙ` with independent standard normals
//! separate the set from `y` as soon as `minₙ maxⱼ |u_j(xₙ′)| > 0`: the
//! weak neighbourhood `{z : maxⱼ |u_j(z − y)| < ε}` then misses every point.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{LabError, Result};
use crate::fnspace::{lp_norm, pair, scaled_norming_functional, DualFunctional, GridFunction, NormingExponents};
use crate::rng::normals;

/// Points closer to the target than this (relative) are treated as the target itself.
pub const COINCIDENCE_TOL: f64 = 1e-12;

/// Draws are stored in the certificate when `k·truncation` does not exceed this.
pub const MAX_STORED_DRAWS: usize = 10_000;

/// Tail log-log slope of `‖xₙ′‖^{−q}` below which `|fₙ(xₙ′)|⁻¹` is taken as `ℓ_r`-summable.
pub const SUMMABLE_SLOPE: f64 = -1.05;

#[derive(Clone, Debug)]
pub struct NormingFamily {
    pub functionals: Vec<DualFunctional<f64>>,
    pub exps: NormingExponents,
    /// `gram[n][m] = f_m(xₙ′)`.
    pub gram: Vec<Vec<f64>>,
    pub diagnostics: FamilyDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyDiagnostics {
    /// `Σ‖fₙ‖²` over the finite family.
    pub sum_sq_norms: f64,
    /// `Σ|fₙ(xₙ′)|^{−r}`, `r = pq/(p−q)`.
    pub r_partial_sum: f64,
    pub r: f64,
    /// Least-squares slope of `ln ‖xₙ′‖^{−q}` against `ln(n+1)` over the second half.
    pub tail_slope: Option<f64>,
    /// `false` flags a family outside the summability regime of the certificate lemma;
    /// the certificate may still succeed on the finite set.
    pub summable: Option<bool>,
}

fn shifted(points: &[GridFunction<f64>], y: &GridFunction<f64>) -> Result<Vec<GridFunction<f64>>> {
    if points.is_empty() {
        return Err(LabError::EmptyPointSet);
    }
    let y_norm = y.norm();
    points
        .iter()
        .enumerate()
        .map(|(index, x)| {
            let d = x.sub(y)?;
            let dn = d.norm();
            let scale = y_norm.max(x.norm());
            if dn == 0.0 || dn <= COINCIDENCE_TOL * scale {
                return Err(LabError::TargetInSet { index });
            }
            if !dn.is_finite() {
                return Err(LabError::DegeneratePoint { index });
            }
            Ok(d)
        })
        .collect()
}

fn tail_slope(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 4 {
        return None;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        (n / 2..n).map(|i| (((i + 1) as f64).ln(), values[i].ln())).unzip();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Builds `fₙ` for `xₙ′ = xₙ − y` in the `L_p` norm of the points.
pub fn build_norming_family(
    points: &[GridFunction<f64>],
    y: &GridFunction<f64>,
    exps: NormingExponents,
) -> Result<NormingFamily> {
    let shifted = shifted(points, y)?;
    let space_p = points[0].p();
    let mut functionals = Vec::with_capacity(shifted.len());
    let mut norms = Vec::with_capacity(shifted.len());
    for (index, d) in shifted.iter().enumerate() {
        let f = scaled_norming_functional(d, space_p, exps).map_err(|e| match e {
            LabError::ZeroVector => LabError::DegeneratePoint { index },
            other => other,
        })?;
        norms.push(lp_norm(d, space_p)?);
        functionals.push(f);
    }
    let gram: Vec<Vec<f64>> = shifted
        .iter()
        .map(|d| functionals.iter().map(|f| pair(f, d)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;

    let r = exps.r();
    let sum_sq_norms = functionals.iter().map(|f| f.norm().powi(2)).sum();
    let r_partial_sum = gram.iter().enumerate().map(|(n, row)| row[n].abs().powf(-r)).sum();
    let terms: Vec<f64> = norms.iter().map(|nm| nm.powf(-exps.q)).collect();
    let slope = tail_slope(&terms);
    let diagnostics = FamilyDiagnostics {
        sum_sq_norms,
        r_partial_sum,
        r,
        tail_slope: slope,
        summable: slope.map(|s| s < SUMMABLE_SLOPE),
    };
    Ok(NormingFamily { functionals, exps, gram, diagnostics })
}

impl NormingFamily {
    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// `aₙ = (Σ_m f_m(xₙ′)²)^{1/2}`, the standard deviation of `u(xₙ′)` for `u = Σγ_m f_m`.
    pub fn a(&self, n: usize) -> f64 {
        self.gram[n].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `fₙ(xₙ′)`.
    pub fn diagonal(&self, n: usize) -> f64 {
        self.gram[n][n]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyParams {
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    /// Number of family members in each Gaussian sum; defaults to the point count.
    pub truncation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub k: usize,
    pub epsilon: f64,
    pub seed: u64,
    /// Index of the successful trial; its normals come from stream `trial` of `seed`.
    pub trial: usize,
    pub truncation: usize,
    /// `maxⱼ |u_j(xₙ − y)|` per point.
    pub margins: Vec<f64>,
    /// `ε^k·Σₙ|fₙ(xₙ − y)|^{−k}`, the union bound on the failure probability at this `ε`.
    pub bound: f64,
    /// `γ[n][j]`, stored when small.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functionals_ref: Option<String>,
    #[serde(skip)]
    pub functionals: Vec<DualFunctional<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub worst_index: usize,
    pub worst_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum CertificateOutcome {
    Certified(Certificate),
    Failed(Vec<TrialFailure>),
}

impl CertificateOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Self::Certified(c) => Some(c),
            Self::Failed(_) => None,
        }
    }
}

struct TrialResult {
    draws: Vec<Vec<f64>>,
    margins: Vec<f64>,
}

/// Normals of one trial, `γ[m][j]` for `m < truncation`, `j < k`, drawn row by row
/// so that a longer truncation extends a shorter one.
fn trial_draws(seed: u64, trial: usize, truncation: usize, k: usize) -> Vec<Vec<f64>> {
    let mut g = normals(seed, trial as u64);
    (0..truncation).map(|_| g.take(k)).collect()
}

fn run_trial(family: &NormingFamily, seed: u64, trial: usize, truncation: usize, k: usize) -> TrialResult {
    let draws = trial_draws(seed, trial, truncation, k);
    let margins = family
        .gram
        .iter()
        .map(|row| {
            (0..k)
                .map(|j| row.iter().zip(&draws).map(|(g, d)| g * d[j]).sum::<f64>().abs())
                .fold(0.0, f64::max)
        })
        .collect();
    TrialResult { draws, margins }
}

fn effective_truncation(family: &NormingFamily, params: &CertifyParams) -> Result<usize> {
    let points = family.len();
    let t = params.truncation.unwrap_or(points);
    if t < points {
        return Err(LabError::TruncationTooSmall { truncation: t, points });
    }
    // the family has one member per point; a longer series adds nothing
    Ok(points)
}

/// Tries `params.trials` independent draws and keeps the first that separates.
pub fn gaussian_certificate(family: &NormingFamily, params: &CertifyParams) -> Result<CertificateOutcome> {
    if family.is_empty() {
        return Err(LabError::EmptyPointSet);
    }
    if params.k == 0 || params.trials == 0 {
        return Err(LabError::InvalidArgument("certificate needs k ≥ 1 and trials ≥ 1".into()));
    }
    let truncation = effective_truncation(family, params)?;
    let mut failures = Vec::new();
    for trial in 0..params.trials {
        let res = run_trial(family, params.seed, trial, truncation, params.k);
        let (worst_index, eps_star) = res
            .margins
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
        if eps_star > 0.0 && eps_star.is_finite() {
            let epsilon = eps_star / 2.0;
            let k = params.k as i32;
            let bound = (0..family.len()).map(|n| (epsilon / family.diagonal(n).abs()).powi(k)).sum();
            let functionals = (0..params.k)
                .map(|j| {
                    let mut acc = family.functionals[0].scaled(res.draws[0][j]);
                    for m in 1..truncation {
                        acc = acc.add(&family.functionals[m].scaled(res.draws[m][j]))?;
                    }
                    Ok(acc)
                })
                .collect::<Result<Vec<_>>>()?;
            let draws = (params.k * truncation <= MAX_STORED_DRAWS).then_some(res.draws);
            return Ok(CertificateOutcome::Certified(Certificate {
                k: params.k,
                epsilon,
                seed: params.seed,
                trial,
                truncation,
                margins: res.margins,
                bound,
                draws,
                functionals_ref: None,
                functionals,
            }));
        }
        failures.push(TrialFailure { trial, worst_index, worst_margin: eps_star });
    }
    Ok(CertificateOutcome::Failed(failures))
}

impl Certificate {
    /// Every margin is at least `ε > 0`; the target side is `maxⱼ|u_j(0)| = 0 < ε`.
    pub fn is_valid(&self) -> bool {
        self.epsilon > 0.0 && self.margins.iter().all(|&m| m >= self.epsilon)
    }

    /// Margins recomputed from the stored seed and trial.
    pub fn margins_for(&self, family: &NormingFamily) -> Result<Vec<f64>> {
        if family.len() != self.margins.len() {
            return Err(LabError::LengthMismatch { expected: self.margins.len(), got: family.len() });
        }
        Ok(run_trial(family, self.seed, self.trial, self.truncation, self.k).margins)
    }

    /// The stored margins are reproduced bit for bit and still clear `ε`.
    pub fn validate(&self, family: &NormingFamily) -> Result<bool> {
        Ok(self.is_valid() && self.margins_for(family)? == self.margins)
    }

    /// Writes the certificate JSON; the functionals go to a CSV beside it when
    /// `k·len ≤ 10⁴` (one column per functional).
    pub fn write_json(&mut self, path: &Path) -> Result<()> {
        let len = self.functionals.first().map_or(0, |f| f.samples().len());
        if !self.functionals.is_empty() && self.k * len <= MAX_STORED_DRAWS {
            let csv_path = path.with_extension("functionals.csv");
            let mut w = csv::Writer::from_path(&csv_path)?;
            let header: Vec<String> = (0..self.k).map(|j| format!("u_{j}")).collect();
            w.write_record(&header)?;
            for i in 0..len {
                w.write_record(self.functionals.iter().map(|f| f.samples()[i].to_string()))?;
            }
            w.flush()?;
            self.functionals_ref = csv_path.file_name().map(|s| s.to_string_lossy().into_owned());
        }
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallBallRow {
    pub n: usize,
    pub empirical: f64,
    /// `P(|N(0, aₙ²)| < ε) = erf(ε/(aₙ√2))`.
    pub exact: f64,
    /// `ε/|fₙ(xₙ − y)|`.
    pub bound: f64,
    /// Relative Monte Carlo error `√((1 − P̂)/(S·P̂))`.
    pub sigma_mc: f64,
    pub within_bound: bool,
    /// `|P̂ − P| ≤ 3√(P(1 − P)/S)`.
    pub matches_exact: bool,
}

/// Monte Carlo estimate of `P(|u(xₙ − y)| < ε)` for `u = Σγ_m f_m` at the points `indices`.
pub fn small_ball_bound_check(
    family: &NormingFamily,
    indices: &[usize],
    epsilon: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<Vec<SmallBallRow>> {
    if mc_samples < 10_000 {
        return Err(LabError::InvalidArgument(format!("small-ball check needs ≥ 10⁴ samples, got {mc_samples}")));
    }
    if let Some(&bad) = indices.iter().find(|&&n| n >= family.len()) {
        return Err(LabError::InvalidArgument(format!("point index {bad} out of range")));
    }
    let mut hits = vec![0usize; indices.len()];
    let mut g = normals(seed, 0);
    let mut gamma = vec![0.0; family.len()];
    for _ in 0..mc_samples {
        g.fill(&mut gamma);
        for (h, &n) in hits.iter_mut().zip(indices) {
            let v: f64 = family.gram[n].iter().zip(&gamma).map(|(a, b)| a * b).sum();
            if v.abs() < epsilon {
                *h += 1;
            }
        }
    }
    let s = mc_samples as f64;
    Ok(indices
        .iter()
        .zip(hits)
        .map(|(&n, hit)| {
            let empirical = hit as f64 / s;
            let a = family.a(n);
            let exact = if epsilon == 0.0 { 0.0 } else { erf(epsilon / (a * std::f64::consts::SQRT_2)) };
            let bound = epsilon / family.diagonal(n).abs();
            let sigma_mc = if hit == 0 { 0.0 } else { ((1.0 - empirical) / (s * empirical)).sqrt() };
            SmallBallRow {
                n,
                empirical,
                exact,
                bound,
                sigma_mc,
                within_bound: empirical <= bound * (1.0 + 3.0 * sigma_mc),
                matches_exact: (empirical - exact).abs() <= 3.0 * (exact * (1.0 - exact) / s).sqrt() + 1.0 / s,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fnspace::Grid;

    fn growing(count: usize) -> (Vec<GridFunction<f64>>, GridFunction<f64>) {
        let g = Grid::sequence(count).unwrap();
        let pts = (0..count).map(|n| GridFunction::basis(g, n, 2.0).unwrap().scaled((n + 1) as f64)).collect();
        (pts, GridFunction::zeros(g, 2.0).unwrap())
    }

    fn exps() -> NormingExponents {
        NormingExponents::new(2.0, 1.5).unwrap()
    }

    #[test]
    fn family_for_single_unit_vector() {
        let (pts, y) = growing(1);
        let fam = build_norming_family(&pts, &y, exps()).unwrap();
        assert!((fam.functionals[0].norm() - 1.0).abs() < 1e-15);
        assert!((fam.diagonal(0) - 1.0).abs() < 1e-15);
        assert_eq!(fam.diagnostics.tail_slope, None);
    }

    #[test]
    fn family_for_growing_basis() {
        let (pts, y) = growing(200);
        let fam = build_norming_family(&pts, &y, exps()).unwrap();
        for n in [0usize, 9, 199] {
            let m = (n + 1) as f64;
            assert!((fam.functionals[n].norm() - m.powf(-0.75)).abs() < 1e-12 * m);
            assert!((fam.diagonal(n) - m.powf(0.25)).abs() < 1e-12 * m);
            assert!(fam.a(n) >= fam.diagonal(n).abs());
        }
        assert_eq!(fam.diagnostics.r, 6.0);
        let partial: f64 = (1..=200).map(|m| (m as f64).powf(-1.5)).sum();
        assert!((fam.diagnostics.r_partial_sum - partial).abs() < 1e-10);
        assert!((fam.diagnostics.tail_slope.unwrap() + 1.5).abs() < 1e-9);
        assert_eq!(fam.diagnostics.summable, Some(true));
    }

    #[test]
    fn slow_growth_is_flagged() {
        let g = Grid::sequence(100).unwrap();
        let pts: Vec<_> = (0..100)
            .map(|n| GridFunction::basis(g, n, 2.0).unwrap().scaled(((n + 1) as f64).powf(0.6)))
            .collect();
        let fam = build_norming_family(&pts, &GridFunction::zeros(g, 2.0).unwrap(), exps()).unwrap();
        assert_eq!(fam.diagnostics.summable, Some(false));
    }

    #[test]
    fn one_point_certificate_margin_is_the_normal() {
        let (pts, y) = growing(1);
        let fam = build_norming_family(&pts, &y, exps()).unwrap();
        let params = CertifyParams { k: 1, trials: 1, seed: 9, truncation: None };
        let cert = gaussian_certificate(&fam, &params).unwrap();
        let cert = cert.certificate().unwrap();
        let gamma = normals(9, 0).next_normal();
        assert_eq!(cert.margins, vec![gamma.abs()]);
        assert_eq!(cert.epsilon, gamma.abs() / 2.0);
        assert!(cert.validate(&fam).unwrap());
    }

    #[test]
    fn target_in_set_and_errors() {
        let (mut pts, y) = growing(5);
        pts.push(y.clone());
        assert!(matches!(build_norming_family(&pts, &y, exps()), Err(LabError::TargetInSet { index: 5 })));
        assert!(matches!(build_norming_family(&[], &y, exps()), Err(LabError::EmptyPointSet)));
        let (pts, y) = growing(5);
        let fam = build_norming_family(&pts, &y, exps()).unwrap();
        let params = CertifyParams { k: 2, trials: 1, seed: 1, truncation: Some(3) };
        assert!(matches!(gaussian_certificate(&fam, &params), Err(LabError::TruncationTooSmall { .. })));
    }

    #[test]
    fn adding_points_shrinks_the_margin() {
        let (pts, y) = growing(40);
        let params = CertifyParams { k: 3, trials: 1, seed: 5, truncation: None };
        let mut last = f64::INFINITY;
        for len in [5, 10, 20, 40] {
            let fam = build_norming_family(&pts[..len], &y, exps()).unwrap();
            let cert = gaussian_certificate(&fam, &params).unwrap();
            let eps = cert.certificate().unwrap().epsilon;
            assert!(eps <= last);
            last = eps;
        }
    }

    #[test]
    fn certificate_json_round_trip() {
        let (pts, y) = growing(20);
        let fam = build_norming_family(&pts, &y, exps()).unwrap();
        let params = CertifyParams { k: 4, trials: 5, seed: 42, truncation: None };
        let CertificateOutcome::Certified(mut cert) = gaussian_certificate(&fam, &params).unwrap() else {
            panic!("no certificate");
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("certificate.json");
        cert.write_json(&path).unwrap();
        assert_eq!(cert.functionals_ref.as_deref(), Some("certificate.functionals.csv"));
        let back = Certificate::read_json(&path).unwrap();
        assert_eq!(back.margins, cert.margins);
        assert_eq!(back.draws, cert.draws);
        assert!(back.validate(&fam).unwrap());
    }

    #[test]
    fn small_ball_with_zero_radius() {
        let (pts, y) = growing(10);
        let fam = build_norming_family(&pts, &y, exps()).unwrap();
        let rows = small_ball_bound_check(&fam, &[0, 9], 0.0, 10_000, 3).unwrap();
        for r in rows {
            assert_eq!((r.empirical, r.bound, r.exact), (0.0, 0.0, 0.0));
            assert!(r.within_bound);
        }
        assert!(small_ball_bound_check(&fam, &[0], 0.1, 100, 3).is_err());
    }
}
