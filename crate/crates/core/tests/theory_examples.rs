use proptest::prelude::*;
use subspace_gp::gp::SparsityPattern;
use subspace_gp::lingeom::Orthogonal;
use subspace_gp::model::{make_truth, FamilySpec, GroundTruth, SettingKind};
use subspace_gp::par::{stream_rng, Execution};
use subspace_gp::qmc::ball_grid;
use subspace_gp::theory::*;

fn truth(spec: FamilySpec, d: usize, dstar: usize) -> GroundTruth {
    let core = spec.build(dstar).unwrap();
    make_truth(core, d, dstar, Some(Orthogonal::identity(d)), &mut stream_rng(0, 0)).unwrap()
}

#[test]
fn rate_constants_at_unit_smoothness() {
    let r = rates(&RateInputs::new(1024, 1.0, 1, 3)).unwrap();
    assert!((r.kappa - 2.0 / 3.0).abs() < 1e-15);
    assert!((r.eps_lower - 0.09921).abs() < 5e-6, "{}", r.eps_lower);
    for dstar in 1..=3 {
        let r = rates(&RateInputs::new(5000, 1.5, dstar, 4)).unwrap();
        assert!((r.delta3 / r.delta1 - (2.0 * dstar as f64).sqrt()).abs() < 1e-12);
        assert_eq!(r.delta1, r.delta2);
    }
}

#[test]
fn invalid_rate_inputs_are_rejected() {
    let mut i = RateInputs::new(100, 1.0, 1, 3);
    i.window = 1.0;
    assert!(rates(&i).is_err());
    assert!(rates(&RateInputs::new(100, 1.0, 4, 3)).is_err());
    assert!(rates(&RateInputs::new(100, 0.0, 1, 3)).is_err());
}

#[test]
fn concentration_of_zero_is_the_small_ball_exponent() {
    let grid = ball_grid(1, 32);
    let pattern = SparsityPattern::new(Orthogonal::identity(2), 1, 1.0).unwrap();
    let c = concentration(&vec![0.0; grid.len()], &grid, &pattern, 0.5, 20_000, 1, Execution::Parallel).unwrap();
    assert!(c.rkhs_term.abs() < 1e-12);
    assert_eq!(c.total, c.smallball_term);
    assert!(c.smallball_term > 0.0);
}

#[test]
fn concentration_decreases_in_eps() {
    let grid = ball_grid(1, 32);
    let f: Vec<f64> = grid.iter().map(|t| (2.0 * t[0]).sin()).collect();
    let pattern = SparsityPattern::new(Orthogonal::identity(1), 1, 1.0).unwrap();
    let mut prev = f64::INFINITY;
    for eps in [0.3, 0.5, 0.8, 1.2] {
        let c = concentration(&f, &grid, &pattern, eps, 20_000, 2, Execution::Parallel).unwrap();
        assert!(c.total < prev, "eps {eps}: {} after {prev}", c.total);
        prev = c.total;
    }
}

#[test]
fn small_ball_exponent_grows_with_scale() {
    let grid = ball_grid(1, 32);
    let zero = vec![0.0; grid.len()];
    let mut prev: Option<(f64, f64)> = None;
    for a in [1.0, 2.0, 4.0] {
        let pattern = SparsityPattern::new(Orthogonal::identity(1), 1, a).unwrap();
        let c = concentration(&zero, &grid, &pattern, 1.0, 40_000, 3, Execution::Parallel).unwrap();
        if let Some((v, se)) = prev {
            let joint = (se * se + c.smallball_se * c.smallball_se).sqrt();
            assert!(c.smallball_term - v > 3.0 * joint, "a={a}: {} vs {v}", c.smallball_term);
        }
        prev = Some((c.smallball_term, c.smallball_se));
    }
}

#[test]
fn constant_truth_fails_the_gradient_condition() {
    let t = truth(FamilySpec::Constant { value: 0.3 }, 3, 1);
    let rep = check_gradient_condition(&t, SettingKind::FixedDesign, &[vec![0.1]], 0.3, &Default::default()).unwrap();
    assert!(!rep.pass && rep.reason.is_some());
}

#[test]
fn parallel_gradients_fail_the_gradient_condition() {
    let t = truth(FamilySpec::Linear { direction: Some(vec![1.0, 2.0]) }, 3, 2);
    let pts = [vec![0.1, 0.0], vec![-0.2, 0.3]];
    let rep = check_gradient_condition(&t, SettingKind::FixedDesign, &pts, 0.3, &Default::default()).unwrap();
    assert!(!rep.pass);
    assert!(rep.smallest_singular_value < 1e-8);
}

#[test]
fn linear_truth_gives_closed_form_constants() {
    for c in [0.5, 1.0, 3.0] {
        let t = truth(FamilySpec::Linear { direction: Some(vec![c]) }, 2, 1);
        let rep = check_gradient_condition(&t, SettingKind::FixedDesign, &[vec![0.2]], 0.4, &Default::default()).unwrap();
        assert!(rep.pass);
        assert!((rep.r - 0.5 * c).abs() < 1e-12);
        assert!((rep.detect - c * c / 96.0).abs() < 1e-12);
        assert!((rep.window - 0.4).abs() < 1e-12);
    }
}

#[test]
fn linear_detectability_threshold_is_one_twelfth() {
    // Residual of c·t on a segment of length l is c² l³ / 12.
    let t = truth(FamilySpec::Linear { direction: None }, 3, 1);
    let cfg = VerifierConfig::default();
    assert!(check_detectability(&t, SettingKind::FixedDesign, 0.5, 0.05, 2, &cfg).unwrap().pass);
    assert!(check_detectability(&t, SettingKind::FixedDesign, 0.5, 1.0 / 12.0 - 1e-6, 2, &cfg).unwrap().pass);
    let fail = check_detectability(&t, SettingKind::FixedDesign, 0.5, 1.0 / 12.0 + 1e-3, 2, &cfg).unwrap();
    assert!(!fail.pass);
    let w = &fail.failures[0];
    assert!(w.residual < w.required);
}

#[test]
fn gradient_pass_implies_detectability_in_one_dimension() {
    for (spec, kind) in [
        (FamilySpec::Sine { weights: None }, SettingKind::FixedDesign),
        (FamilySpec::Sine { weights: Some(vec![0.7]) }, SettingKind::Density),
        (FamilySpec::Quadratic { weights: None }, SettingKind::RandomDesign),
    ] {
        let t = truth(spec, 3, 1);
        let cfg = VerifierConfig::default();
        let rep = check_gradient_condition(&t, kind, &[vec![0.3]], 0.3, &cfg).unwrap();
        assert!(rep.pass, "{rep:?}");
        let det = check_detectability(&t, kind, rep.window, rep.detect, 2, &cfg).unwrap();
        assert!(det.pass, "{:?}", det.failures);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn eps_n_is_the_lower_rate_times_a_log_factor(n in 3u64..10_000_000, beta in 0.2f64..4.0, dstar in 1usize..=4) {
        let r = rates(&RateInputs::new(n, beta, dstar, 4)).unwrap();
        let expected = r.eps_lower * (n as f64).ln().powf(r.kappa);
        prop_assert!((r.eps_n / expected - 1.0).abs() < 1e-12);
        prop_assert!((r.eps_lower - (n as f64).powf(-beta / (2.0 * beta + dstar as f64))).abs() < 1e-14);
    }

    #[test]
    fn intrinsic_dimension_bound_is_nondecreasing(n in 3u64..1_000_000, step in 1u64..1_000_000) {
        let a = rates(&RateInputs::new(n, 1.0, 1, 8)).unwrap();
        let b = rates(&RateInputs::new(n + step, 1.0, 1, 8)).unwrap();
        prop_assert!(b.max_intrinsic_dim >= a.max_intrinsic_dim);
    }

    #[test]
    fn rnb_solves_the_growth_equation(b in 1usize..=6, log_rhs in -20.0f64..80.0, bump in 0.01f64..5.0) {
        let rhs = log_rhs.exp();
        let r = solve_rnb(b, rhs).unwrap();
        prop_assert!(r > 1.0);
        prop_assert!((growth(b, r) / rhs - 1.0).abs() < 1e-9);
        prop_assert!(solve_rnb(b, rhs * (1.0 + bump)).unwrap() > r);
    }
}
