use std::f64::consts::{FRAC_PI_3, PI, TAU};

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::hamiltonians::{build_family, FamilySpec, PeriodicHamiltonian};
use crate::linalg::test_util::*;
use crate::linalg::{circular_distance, expm, identity, CMatrix, Tolerances, I};
use crate::spectral::DerivativeMethod;

fn family(spec: FamilySpec) -> PeriodicHamiltonian {
    build_family(&spec).unwrap()
}

fn blocks_for(fam: &PeriodicHamiltonian, steps: usize) -> HatBlocks {
    prepare_blocks(fam, steps, DerivativeMethod::default(), Tolerances::default())
        .unwrap()
        .1
}

/// `Σ_j log(1 − e^{−2πmE_j})` with the branch of each factor.
fn closed_form_log(energies: &[f64], m: f64) -> Complex64 {
    energies
        .iter()
        .map(|&e| {
            let x = -TAU * m * e;
            if x < 0.0 {
                Complex64::new((-x.exp()).ln_1p(), 0.0)
            } else {
                // 1 − e^x = −e^x (1 − e^{−x})
                Complex64::new(x + (-(-x).exp()).ln_1p(), PI)
            }
        })
        .sum()
}

#[test]
fn free_operator_is_not_invertible() {
    let op = FirstOrderOperator::constant(CMatrix::zeros(2, 2));
    let mon = monodromy(&op, &OdeOptions::with_steps(64)).unwrap();
    assert!((mon.t2pi.as_ref().unwrap() - identity(2)).norm() < 1e-15);
    assert_eq!(mon.logdet_t, Complex64::new(0.0, 0.0));
    assert!(matches!(
        det_pm_bfk(&mon, &op),
        Err(Error::NonInvertibleOperator { .. })
    ));
}

#[test]
fn constant_coefficient_matches_expm() {
    let mut r = rng(1);
    for _ in 0..4 {
        let a = random_matrix(&mut r, 3) * Complex64::from(0.3);
        let op = FirstOrderOperator::constant(a.clone());
        let mon = monodromy(&op, &OdeOptions::default()).unwrap();
        let exact = expm(&(a * (-I * TAU))).unwrap();
        let err = (mon.t2pi.as_ref().unwrap() - &exact).norm() / exact.norm();
        assert!(err < 1e-9, "{err:.3e}");
    }
}

#[test]
fn logdet_matches_determinant() {
    let mut r = rng(2);
    let a0 = random_matrix(&mut r, 3) * Complex64::from(0.4);
    let a1 = random_matrix(&mut r, 3) * Complex64::from(0.3);
    let a2 = random_matrix(&mut r, 3) * Complex64::from(0.2);
    let op = FirstOrderOperator::new(
        3,
        move |t| &a0 + &a1 * Complex64::from(t.cos()) + &a2 * Complex64::from((2.0 * t).sin()),
        OperatorLabel::Generic,
    );
    let mon = monodromy(&op, &OdeOptions::default()).unwrap();
    assert!(mon.determinant_residual().unwrap() <= 1e-8);
}

#[test]
fn overflow_is_flagged() {
    let op = FirstOrderOperator::constant(CMatrix::from_diagonal_element(1, 1, I * 100.0));
    let opts = OdeOptions {
        steps: Some(1 << 17),
        ..Default::default()
    };
    assert!(matches!(monodromy(&op, &opts), Err(Error::OverflowRisk(_))));
}

#[test]
fn coarse_grid_is_refused() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    let op = FirstOrderOperator::d_m(&fam, 100.0).unwrap();
    assert!(matches!(
        monodromy(&op, &OdeOptions::with_steps(64)),
        Err(Error::OdeToleranceFailure(_))
    ));
}

#[test]
fn two_level_closed_form() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    let op = FirstOrderOperator::d_m(&fam, 1.0).unwrap();
    let exact = closed_form_log(&[1.0, -1.0], 1.0);
    for route in [Route::Dense, Route::Dichotomy] {
        let pair = det_pm(&op, 1.0, &RouteOptions {
            route,
            ..Default::default()
        })
        .unwrap();
        assert!((pair.plus.re - exact.re).abs() < 1e-9, "{route:?}");
        assert!(circular_distance(pair.plus.im, PI) < 1e-9);
        assert!(circular_distance(pair.minus.im, PI) < 1e-9);
    }
}

#[test]
fn dichotomy_agrees_with_dense_route() {
    let fam = family(FamilySpec::random_gapped(4, 2, 11, 2));
    for m in [0.5, 1.5] {
        let op = FirstOrderOperator::d_m(&fam, m).unwrap();
        let dense = det_pm(&op, m, &RouteOptions {
            route: Route::Dense,
            ..Default::default()
        })
        .unwrap();
        let split = det_pm(&op, m, &RouteOptions::default()).unwrap();
        assert!(circular_distance(dense.plus.im, split.plus.im) < 1e-8);
        assert!(circular_distance(dense.minus.im, split.minus.im) < 1e-8);
        assert!((dense.plus.re - split.plus.re).abs() < 1e-8 * dense.plus.re.abs().max(1.0));
        let mon = monodromy_dichotomy(&op, 2, &OdeOptions::default()).unwrap();
        assert!(mon.blockwise_residual().unwrap() < 1e-8);
    }
}

#[test]
fn constant_family_blocks_are_trivial() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0, 2.0]));
    let blocks = blocks_for(&fam, 256);
    assert_eq!((blocks.n_plus, blocks.n_minus), (2, 1));
    for (h, (k, r)) in blocks
        .h_tilde
        .iter()
        .zip(blocks.connection.iter().zip(&blocks.coupling))
    {
        assert!(k.norm() < 1e-12 && r.norm() < 1e-12);
        let eig = crate::linalg::herm_eig(h).unwrap();
        assert!((eig.eigenvalues[0] + 1.0).abs() < 1e-12);
    }
    assert!((blocks.gap - 1.0).abs() < 1e-12);
}

#[test]
fn spin_half_blocks() {
    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let blocks = blocks_for(&fam, 2048);
    for (h, r) in blocks.h_tilde.iter().zip(&blocks.coupling) {
        assert!((h[(0, 0)] - 1.0).norm() < 1e-8);
        assert!((h[(1, 1)] + 1.0).norm() < 1e-8);
        assert_eq!(r.trace(), Complex64::new(0.0, 0.0));
        assert!((r - r.adjoint()).norm() < 1e-12);
    }
}

#[test]
fn hat_determinant_on_two_levels() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    let blocks = blocks_for(&fam, 2 * default_steps(100.0));
    for m in [1.0, 2.0, 4.0, 8.0, 100.0] {
        let pair = det_phase_hat(&blocks, m).unwrap();
        let exact = closed_form_log(&[1.0, -1.0], m);
        assert!(circular_distance(pair.plus.im, PI) < 1e-9);
        assert!(circular_distance(pair.minus.im, PI) < 1e-9);
        assert!((pair.plus.re - exact.re).abs() < 1e-9 * exact.re.abs().max(1.0));
    }
}

#[test]
fn hat_route_matches_dense_route_at_small_m() {
    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let blocks = blocks_for(&fam, 2 * default_steps(2.0));
    let stable = det_phase_hat(&blocks, 2.0).unwrap();
    let op = blocks.deformed_operator(2.0, 0.0).unwrap();
    let dense = det_pm(&op, 2.0, &RouteOptions {
        route: Route::Dense,
        ..Default::default()
    })
    .unwrap();
    assert!(circular_distance(stable.plus.im, dense.plus.im) < 1e-6);
    assert!(circular_distance(stable.minus.im, dense.minus.im) < 1e-6);
}

#[test]
fn hat_route_is_finite_for_large_m() {
    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let blocks = blocks_for(&fam, 2 * 32768);
    for m in [200.0, 1e4] {
        let pair = det_phase_hat(&blocks, m).unwrap();
        assert!(pair.plus.im.is_finite() && pair.minus.im.is_finite());
        assert!(pair.plus.re.is_finite());
    }
}

#[test]
fn theorem_is_exact_for_constant_diagonal() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    let report = theorem_verify(&fam, &[1.0, 2.0, 4.0], &TheoremOptions::default()).unwrap();
    for row in &report.rows {
        assert!(row.gap_plus < 1e-12 && row.gap_minus < 1e-12, "{row:?}");
    }
    assert!(report.nonincreasing());
}

#[test]
fn theorem_rejects_bad_mlists() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    for bad in [vec![], vec![2.0, 1.0], vec![0.0, 1.0]] {
        assert!(theorem_verify(&fam, &bad, &TheoremOptions::default()).is_err());
    }
}

#[test]
fn deformation_endpoints() {
    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let m = 2.0;
    let blocks = blocks_for(&fam, 2 * default_steps(m));
    let sweep = deformation_sweep(&blocks, m, &[0.0, 0.5, 1.0], &RouteOptions::default()).unwrap();
    let hat = det_phase_hat(&blocks, m).unwrap();
    assert!(circular_distance(sweep.reference, hat.plus.im) < 1e-6);
    // s = 1 is D_m in another gauge
    let op = FirstOrderOperator::d_m(&fam, m).unwrap();
    let direct = det_pm(&op, m, &RouteOptions {
        route: Route::Dense,
        ..Default::default()
    })
    .unwrap();
    assert!(circular_distance(sweep.rows[2].imlogdet_plus, direct.plus.im) < 1e-6);
}

#[test]
fn deformation_is_flat_without_coupling() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0, 2.0]));
    let blocks = blocks_for(&fam, 4096);
    let sweep = deformation_sweep(&blocks, 3.0, &[0.0, 0.25, 0.5, 1.0], &RouteOptions::default())
        .unwrap();
    assert!(sweep.delta() < 1e-12);
}

#[test]
fn dense_route_is_capped() {
    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let blocks = blocks_for(&fam, 2 * default_steps(30.0));
    let opts = RouteOptions {
        route: Route::Dense,
        ..Default::default()
    };
    assert!(matches!(
        deformation_sweep(&blocks, 30.0, &[0.5], &opts),
        Err(Error::Context { .. }) | Err(Error::OverflowRisk(_))
    ));
}

#[test]
fn spectral_radius_on_two_levels() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    let blocks = blocks_for(&fam, 4096);
    let report = spectral_radius_check(&blocks, 2.0, 32).unwrap();
    assert_eq!(report.rows.len(), 32);
    assert_eq!(report.rows[0].rho_plus, 1.0);
    assert_eq!(report.rows[0].bound, 1.0);
    let half = &report.rows[16];
    assert!((half.t - PI).abs() < 1e-12);
    assert!((half.rho_plus - (-TAU).exp()).abs() < 1e-9 * (-TAU).exp());
    assert!(half.rho_plus <= half.bound);
}

#[test]
fn spectral_radius_on_spin_half() {
    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let blocks = blocks_for(&fam, 4096);
    let report = spectral_radius_check(&blocks, 8.0, 32).unwrap();
    assert!(report.rows.iter().all(|r| r.rho_plus <= r.bound));
}

#[test]
fn conjugation_identity() {
    let fam = family(FamilySpec::diag_const(&[1.0, -1.0]));
    let report = conjugate_identity_check(&fam, 1.0, &RouteOptions::default()).unwrap();
    assert!(circular_distance(report.plus_dm, PI) < 1e-9);
    assert!(circular_distance(report.minus_conjugate, PI) < 1e-9);

    let fam = family(FamilySpec::spin_half(FRAC_PI_3, 1.0));
    let report = conjugate_identity_check(&fam, 4.0, &RouteOptions::default()).unwrap();
    assert!(report.holds(1e-6), "{report:?}");

    let zero = family(FamilySpec::diag_const(&[0.0, 0.0]));
    assert!(matches!(
        conjugate_identity_check(&zero, 1.0, &RouteOptions::default()),
        Err(Error::GapViolation { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn branch_difference_is_n_pi(seed in 0u64..1000, m in 0.2f64..1.5) {
        let mut r = rng(seed);
        let h = random_hermitian(&mut r, 3);
        let fam = PeriodicHamiltonian::from_fourier(h, vec![]).unwrap();
        let op = FirstOrderOperator::d_m(&fam, m).unwrap();
        let pair = det_pm(&op, m, &RouteOptions { route: Route::Dense, ..Default::default() }).unwrap();
        prop_assert!(circular_distance(pair.minus.im - pair.plus.im, 3.0 * PI) < 1e-9);
    }

    #[test]
    fn constant_diagonal_matches_product(e in prop::collection::vec(0.3f64..2.0, 1..4), signs in prop::collection::vec(any::<bool>(), 4), m in 0.5f64..3.0) {
        let energies: Vec<f64> = e.iter().zip(&signs).map(|(x, s)| if *s { *x } else { -x }).collect();
        let fam = family(FamilySpec::diag_const(&energies));
        let op = FirstOrderOperator::d_m(&fam, m).unwrap();
        let pair = det_pm(&op, m, &RouteOptions::default()).unwrap();
        let exact = closed_form_log(&energies, m);
        prop_assert!(circular_distance(pair.plus.im, exact.im) < 1e-9);
        prop_assert!((pair.plus.re - exact.re).abs() < 1e-8 * exact.re.abs().max(1.0));
    }
}
