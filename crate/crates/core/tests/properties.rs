mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;
use volterra_lab::algebra::{
    der_identity_residual, g1_margin, leibniz_check, matched_kernels, star, witness_builder, ConvElement,
};
use volterra_lab::dynamics::{kronecker_density_search, orbit, projective_obstruction};
use volterra_lab::fnspace::{DualFunctional, Grid, GridFunction, NormingExponents};
use volterra_lab::operators::{mult_by_x, volterra};
use volterra_lab::weakclosure::{build_norming_family, gaussian_certificate, CertifyParams};
use volterra_lab::Complex64;

fn kernel(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

fn dyadic_kernel(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((-8i32..8).prop_map(f64::from), n)
}

const N: usize = 32;

fn grid() -> Grid {
    Grid::unit_interval(N).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn convolution_operators_commute_exactly(a in kernel(N), b in kernel(N)) {
        let g = grid();
        let ma = ConvElement::new(g, a).unwrap().matrix();
        let mb = ConvElement::new(g, b).unwrap().matrix();
        let ab = ma.compose(&mb).unwrap().to_dense();
        let ba = mb.compose(&ma).unwrap().to_dense();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn star_matches_operator_product(a in kernel(N), b in kernel(N)) {
        let g = grid();
        let ea = ConvElement::new(g, a).unwrap();
        let eb = ConvElement::new(g, b).unwrap();
        let ab = star(&ea, &eb).unwrap();
        prop_assert_eq!(&ab, &star(&eb, &ea).unwrap());
        prop_assert_eq!(ab.matrix().to_dense(), ea.matrix().compose(&eb.matrix()).unwrap().to_dense());
    }

    #[test]
    fn star_is_associative(a in kernel(N), b in kernel(N), c in kernel(N)) {
        let g = grid();
        let (ea, eb, ec) = (
            ConvElement::new(g, a).unwrap(),
            ConvElement::new(g, b).unwrap(),
            ConvElement::new(g, c).unwrap(),
        );
        let left = star(&star(&ea, &eb).unwrap(), &ec).unwrap();
        let right = star(&ea, &star(&eb, &ec).unwrap()).unwrap();
        let scale = left.coeffs().iter().fold(1e-300f64, |m, v| m.max(v.abs()));
        prop_assert!(left.max_abs_diff(&right).unwrap() <= 1e-13 * scale);
    }

    #[test]
    fn star_is_associative_bitwise_on_dyadic_kernels(a in dyadic_kernel(N), b in dyadic_kernel(N), c in dyadic_kernel(N)) {
        let g = grid();
        let (ea, eb, ec) = (
            ConvElement::new(g, a).unwrap(),
            ConvElement::new(g, b).unwrap(),
            ConvElement::new(g, c).unwrap(),
        );
        let left = star(&star(&ea, &eb).unwrap(), &ec).unwrap();
        let right = star(&ea, &star(&eb, &ec).unwrap()).unwrap();
        prop_assert_eq!(left.matrix().to_dense(), right.matrix().to_dense());
    }

    #[test]
    fn leibniz_holds_to_rounding(a in kernel(N), b in kernel(N)) {
        let g = grid();
        let m = mult_by_x::<f64>(g);
        let r = leibniz_check(&m, &ConvElement::new(g, a).unwrap(), &ConvElement::new(g, b).unwrap()).unwrap();
        prop_assert!(r <= 1e-14);
    }

    #[test]
    fn witnesses_commute_exactly(u in kernel(N), v in kernel(N)) {
        prop_assume!(u.iter().any(|&x| x != 0.0));
        let g = grid();
        let u = GridFunction::new(g, u, 2.0).unwrap();
        let v = GridFunction::new(g, v, 2.0).unwrap();
        let w = witness_builder(&volterra(g), &u, &v, &mult_by_x(g)).unwrap();
        prop_assert_eq!(w.c.apply(&v).unwrap(), w.b.apply(&u).unwrap());
    }

    #[test]
    fn der_residual_for_dyadic_convolutions(a in dyadic_kernel(N), n in 1u32..8) {
        prop_assume!(a.iter().any(|&x| x != 0.0));
        let g = grid();
        let t = ConvElement::new(g, a).unwrap().matrix();
        let r = der_identity_residual(&t, &mult_by_x(g), n).unwrap();
        prop_assert!(r.residual <= 1e-12 * t.op_norm().powi(n as i32).max(r.scale));
    }

    #[test]
    fn orbit_inequality_holds(seed in 0u64..10_000) {
        let g = grid();
        let x = common::smooth_signed(g, 2.0, seed, 0);
        let w = common::smooth_positive(g, 2.0, seed, 1);
        let (u, v) = matched_kernels(&w, &x).unwrap();
        let wit = witness_builder(&volterra(g), &u, &v, &mult_by_x(g)).unwrap();
        let h = common::random_functional(g, 2.0, seed, 2);
        let rep = g1_margin(&wit, &x, &h, 40).unwrap();
        prop_assert!(rep.min_margin() >= -1e-9);
        prop_assert!(rep.max_chain_residual() <= 1e-10);
    }

    #[test]
    fn projective_obstruction_is_exact(
        re in prop::collection::vec(-3.0f64..3.0, 3),
        im in prop::collection::vec(-3.0f64..3.0, 3),
        zr in -3.0f64..3.0, zi in -3.0f64..3.0, n in 0u64..100_000,
    ) {
        let f: Vec<_> = re.iter().zip(&im).map(|(&a, &b)| Complex64::new(a, b)).collect();
        prop_assume!(f.iter().any(|v| v.norm() > 0.0));
        let angles = [0.7, 2.1, 5.3];
        let v = projective_obstruction(&f, &angles, &[(Complex64::new(zr, zi), n)]).unwrap();
        prop_assert!(v <= 1e-12);
    }

    #[test]
    fn density_hits_satisfy_delta(phase1 in 0.0..TAU, phase2 in 0.0..TAU, delta in 0.05f64..0.5) {
        let angles = [TAU * (2f64.sqrt() - 1.0), TAU * (3f64.sqrt() - 1.0)];
        let target = [Complex64::from_polar(1.0, phase1), Complex64::from_polar(1.0, phase2)];
        let res = kronecker_density_search(&angles, &target, delta, 200_000).unwrap();
        if let Some(n) = res.n_found {
            for (th, t) in angles.iter().zip(target) {
                prop_assert!((Complex64::from_polar(1.0, n as f64 * th) - t).norm() < delta);
            }
        }
    }

    #[test]
    fn certificates_revalidate(seed in 0u64..1000, k in 1usize..5) {
        let s = Grid::sequence(30).unwrap();
        let pts: Vec<_> = (0..30).map(|n| GridFunction::basis(s, n, 2.0).unwrap().scaled((n + 1) as f64)).collect();
        let fam = build_norming_family(&pts, &GridFunction::zeros(s, 2.0).unwrap(), NormingExponents::new(2.0, 1.5).unwrap()).unwrap();
        let out = gaussian_certificate(&fam, &CertifyParams { k, trials: 3, seed, truncation: None }).unwrap();
        let cert = out.certificate().unwrap();
        prop_assert!(cert.validate(&fam).unwrap());
        for n in 0..30 {
            prop_assert!(fam.a(n) >= fam.diagonal(n).abs());
        }
    }
}

#[test]
fn orbit_reconstruction_matches_direct_iteration() {
    let g = Grid::unit_interval(512).unwrap();
    let v = volterra::<f64>(g);
    let x = common::smooth_signed(g, 2.0, 77, 0);
    let orb = orbit(&v, &x, 30, &[DualFunctional::from_fn(g, 2.0, |t| t).unwrap()]).unwrap();
    let mut direct = x.clone();
    for r in &orb.records {
        let rebuilt = r.unit.scaled(r.log_norm.exp());
        let scale = direct.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!(rebuilt.max_abs_diff(&direct).unwrap() <= 1e-8 * scale, "n = {}", r.n);
        direct = v.apply(&direct).unwrap();
    }
}

#[test]
fn der_rejects_non_commuting_derivation() {
    let g = Grid::unit_interval(16).unwrap();
    let v = volterra::<f64>(g);
    let m = mult_by_x::<f64>(g);
    // M² is not a derivation of the algebra: [V, [V, M²]] ≠ 0
    let m2 = m.compose(&m).unwrap();
    assert!(matches!(
        der_identity_residual(&v, &m2, 3),
        Err(volterra_lab::LabError::NonCommutingDerivation { .. })
    ));
}
