use std::f64::consts::{E, PI, SQRT_2};

use proptest::prelude::*;
use subspace_gp::metrics::*;

/// Composite Simpson rule on [a, b] with `n` (even) intervals.
fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn hellinger_one_dimensional_quadrature_oracle() {
    let norm = E - 1.0 / E;
    let p = |x: f64| x.exp() / norm;
    let u = |_x: f64| 0.5f64;
    let exact = simpson(|x| (p(x).sqrt() - u(x).sqrt()).powi(2), -1.0, 1.0, 100_000).sqrt();
    let integ = BallIntegrator::new(1, 1 << 14, 41).unwrap();
    let h = hellinger(|x| p(x[0]), |x| u(x[0]), &integ).unwrap();
    assert!((h.value / exact - 1.0).abs() < 0.003, "{} vs {exact}", h.value);
}

#[test]
fn hellinger_of_disjoint_supports_is_sqrt_two() {
    let integ = BallIntegrator::new(2, 1 << 14, 42).unwrap();
    let left = |x: &[f64]| if x[0] < 0.0 { 2.0 / PI } else { 0.0 };
    let right = |x: &[f64]| if x[0] >= 0.0 { 2.0 / PI } else { 0.0 };
    let h = hellinger(left, right, &integ).unwrap();
    let raw = integ.integrate(|x| (left(x).sqrt() - right(x).sqrt()).powi(2));
    assert!((raw.value - 2.0).abs() < 3.0 * raw.std_error + 1e-3, "{raw:?}");
    assert!(h.value <= SQRT_2 && (h.value - SQRT_2).abs() < 3.0 * h.std_error + 1e-3);
}

#[test]
fn hellinger_seeds_agree() {
    let p = |x: &[f64]| (x[0] + x[1]).exp();
    let q = |x: &[f64]| (1.0 - x[1]).max(0.0);
    let a = hellinger(p, q, &BallIntegrator::new(2, 1 << 14, 43).unwrap()).unwrap();
    let b = hellinger(p, q, &BallIntegrator::new(2, 1 << 14, 44).unwrap()).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.value - b.value).abs() <= 3.0 * se, "{a:?} {b:?}");
}

#[test]
fn design_norm_of_identity_on_the_interval() {
    let integ = BallIntegrator::new(1, 1 << 14, 45).unwrap();
    let r = l2_design(|x| x[0], |_| 0.0, 100.0, |_| 0.5, 0.5, &integ).unwrap();
    assert!((r.estimate.value * 3f64.sqrt() - 1.0).abs() < 0.005, "{:?}", r.estimate);
    assert!(!r.below_floor);
}

#[test]
fn design_norm_clips_before_squaring() {
    let integ = BallIntegrator::new(2, 4096, 46).unwrap();
    let q = 0.75;
    let r = l2_design(|_| 2.0 * q, |_| -2.0 * q, q, |_| 1.0 / PI, 1.0 / PI, &integ).unwrap();
    assert!((r.estimate.value - 2.0 * q).abs() < 1e-12);
}

#[test]
fn design_norm_ignores_values_outside_the_ball() {
    let integ = BallIntegrator::new(3, 4096, 47).unwrap();
    let f = |x: &[f64]| x[0] * x[2];
    let outside = |x: &[f64]| if x.iter().map(|v| v * v).sum::<f64>() > 1.0 { 1e6 } else { f(x) };
    let a = l2_design(f, |_| 0.0, 10.0, |_| 0.3, 0.1, &integ).unwrap();
    let b = l2_design(outside, |_| 0.0, 10.0, |_| 0.3, 0.1, &integ).unwrap();
    assert_eq!(a.estimate, b.estimate);
}

#[test]
fn low_design_density_is_flagged() {
    let integ = BallIntegrator::new(2, 2048, 48).unwrap();
    let r = l2_design(|x| x[0], |_| 0.0, 10.0, |x| 0.05 + x[0].abs(), 0.1, &integ).unwrap();
    assert!(r.below_floor && r.min_density < 0.1);
}

fn vec_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(-5.0f64..5.0, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn empirical_l2_is_root_mean_square((f, g, h) in vec_pair(), c in -3.0f64..3.0) {
        let n = f.len() as f64;
        let mut acc = 0.0;
        for (a, b) in f.iter().zip(&g) {
            acc += (a - b) * (a - b);
        }
        let d = empirical_l2(&f, &g).unwrap();
        prop_assert!((d - (acc / n).sqrt()).abs() < 1e-12);
        let zero = vec![0.0; f.len()];
        let scaled: Vec<f64> = f.iter().map(|v| c * v).collect();
        prop_assert!((empirical_l2(&scaled, &zero).unwrap() - c.abs() * empirical_l2(&f, &zero).unwrap()).abs() < 1e-12);
        prop_assert!(empirical_l2(&f, &h).unwrap() <= d + empirical_l2(&g, &h).unwrap() + 1e-12);
        let shifted: Vec<f64> = f.iter().map(|v| v + c).collect();
        prop_assert!((empirical_l2(&shifted, &f).unwrap() - c.abs()).abs() < 1e-12);
    }

    #[test]
    fn hellinger_is_a_bounded_symmetric_metric(a in 0.1f64..3.0, b in -2.0f64..2.0, c in 0.0f64..2.0) {
        let integ = BallIntegrator::new(2, 2048, 49).unwrap();
        let p = move |x: &[f64]| (a * x[0]).exp();
        let q = move |x: &[f64]| (b * x[1]).exp() / 2.0;
        let r = move |x: &[f64]| 1.0 + c * x[0] * x[1];
        let pq = hellinger(p, q, &integ).unwrap();
        let qp = hellinger(q, p, &integ).unwrap();
        let pr = hellinger(p, r, &integ).unwrap();
        let rq = hellinger(r, q, &integ).unwrap();
        prop_assert!((pq.value - qp.value).abs() < 1e-12);
        prop_assert!(pq.value <= SQRT_2);
        prop_assert!(pq.value <= pr.value + rq.value + 3.0 * (pq.std_error + pr.std_error + rq.std_error));
        prop_assert!(hellinger(p, p, &integ).unwrap().value < 1e-12);
    }
}
