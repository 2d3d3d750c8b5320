use std::f64::consts::{FRAC_PI_3, PI};

use berry_det::determinant::{
    default_steps, deformation_sweep, det_pm, prepare_blocks, theorem_verify,
    FirstOrderOperator, OdeOptions, Route, RouteOptions, TheoremOptions,
};
use berry_det::hamiltonians::{build_family, FamilySpec};
use berry_det::linalg::{circular_distance, Tolerances};
use berry_det::spectral::DerivativeMethod;
use berry_det::transport::Method;

#[test]
fn theorem_gaps_do_not_depend_on_gamma_source() {
    let fam = build_family(&FamilySpec::random_gapped(4, 2, 4, 2)).unwrap();
    let mlist = [2.0, 4.0];
    let gaps = |method| {
        let opts = TheoremOptions {
            gamma_method: method,
            ..Default::default()
        };
        theorem_verify(&fam, &mlist, &opts).unwrap().rows
    };
    let reference = gaps(Method::Holonomy);
    for method in [Method::Trace, Method::Wilson, Method::Exterior] {
        for (a, b) in reference.iter().zip(gaps(method)) {
            assert!((a.gap_plus - b.gap_plus).abs() < 1e-6, "{method:?}");
            assert!((a.gap_minus - b.gap_minus).abs() < 1e-6, "{method:?}");
        }
    }
}

#[test]
fn agmon_branches_differ_by_n_pi() {
    for spec in [
        FamilySpec::spin_half(FRAC_PI_3, 1.0),
        FamilySpec::random_gapped(6, 2, 6, 3),
    ] {
        let fam = build_family(&spec).unwrap();
        let n = fam.dim() as f64;
        for m in [1.0, 5.0] {
            let op = FirstOrderOperator::d_m(&fam, m).unwrap();
            let pair = det_pm(&op, m, &RouteOptions::default()).unwrap();
            assert!(circular_distance(pair.minus.im - pair.plus.im, n * PI) < 1e-9);
        }
    }
}

#[test]
fn gauge_conjugation_preserves_the_determinant() {
    // D_m directly against D̃_{m,1}, its periodic-gauge transform
    let fam = build_family(&FamilySpec::random_gapped(4, 2, 4, 2)).unwrap();
    let m = 1.5;
    let (_, blocks) = prepare_blocks(
        &fam,
        2 * default_steps(m),
        DerivativeMethod::default(),
        Tolerances::default(),
    )
    .unwrap();
    let sweep = deformation_sweep(&blocks, m, &[1.0], &RouteOptions::default()).unwrap();
    let op = FirstOrderOperator::d_m(&fam, m).unwrap();
    let dense = RouteOptions {
        route: Route::Dense,
        ode: OdeOptions::with_steps(default_steps(m)),
        ..Default::default()
    };
    let direct = det_pm(&op, m, &dense).unwrap();
    assert!(circular_distance(sweep.rows[0].imlogdet_plus, direct.plus.im) < 1e-6);
}

#[test]
fn dichotomy_and_dense_routes_agree_on_full_operator() {
    let fam = build_family(&FamilySpec::spin_half(FRAC_PI_3, 1.0)).unwrap();
    let m = 2.0;
    let op = FirstOrderOperator::d_m(&fam, m).unwrap();
    let ode = OdeOptions::with_steps(default_steps(m));
    let dense = det_pm(&op, m, &RouteOptions {
        route: Route::Dense,
        ode,
        ..Default::default()
    })
    .unwrap();
    let split = det_pm(&op, m, &RouteOptions {
        ode,
        ..Default::default()
    })
    .unwrap();
    assert!(circular_distance(dense.plus.im, split.plus.im) < 1e-8);
    assert!(circular_distance(dense.minus.im, split.minus.im) < 1e-8);
}
