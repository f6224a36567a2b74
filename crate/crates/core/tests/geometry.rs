use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use subspace_gp::lingeom::*;
use subspace_gp::par::{stream_rng, Execution};

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn random_frame(d: usize, b: usize, rng: &mut impl Rng) -> SubspaceFrame {
    SubspaceFrame::from_spanning(gaussian(d, b, rng)).unwrap()
}

/// Unit vectors of a 2-dim subspace on an angular grid over a half circle.
fn circle(frame: &DMatrix<f64>, k: usize) -> Vec<DVector<f64>> {
    (0..k)
        .map(|i| {
            let t = PI * i as f64 / k as f64;
            frame.column(0) * t.cos() + frame.column(1) * t.sin()
        })
        .collect()
}

#[test]
fn largest_angle_matches_max_min_grid_search() {
    let mut rng = stream_rng(101, 0);
    for _ in 0..20 {
        let s = random_frame(4, 2, &mut rng);
        let s2 = random_frame(4, 2, &mut rng);
        let us = circle(s.frame(), 720);
        let vs = circle(s2.frame(), 720);
        let brute = us
            .iter()
            .map(|u| vs.iter().map(|v| u.dot(v).abs().min(1.0).acos()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        let angles = principal_angles(&s, &s2).unwrap();
        assert!((angles[0] - brute).abs() < 0.02, "{} vs {brute}", angles[0]);
    }
}

/// Near-uniform points of S² (Fibonacci lattice).
fn sphere_points(k: usize) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..k)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            [r * th.cos(), r * th.sin(), z]
        })
        .collect()
}

fn projector(cols: &[DVector<f64>]) -> DMatrix<f64> {
    let d = cols[0].len();
    let mut p = DMatrix::zeros(d, d);
    for c in cols {
        p += c * c.transpose();
    }
    p
}

/// Directional Hausdorff distance between the unit spheres of span(us) and
/// the subspace with projector `p2`, over a circle grid when `us` has two
/// vectors.
fn hausdorff(us: &[DVector<f64>], p2: &DMatrix<f64>) -> f64 {
    let pts: Vec<DVector<f64>> = if us.len() == 1 {
        vec![us[0].clone()]
    } else {
        (0..720)
            .map(|i| {
                let t = PI * i as f64 / 720.0;
                &us[0] * t.cos() + &us[1] * t.sin()
            })
            .collect()
    };
    pts.iter()
        .map(|u| (2.0 - 2.0 * (p2 * u).norm().min(1.0)).max(0.0).sqrt())
        .fold(0.0, f64::max)
}

#[test]
fn extended_loss_equals_both_brute_force_formulations() {
    let mut rng = stream_rng(102, 0);
    let fib = sphere_points(10_000);
    for _ in 0..10 {
        let s = random_frame(4, 1, &mut rng);
        let s2 = random_frame(4, 2, &mut rng);
        let u = s.frame().column(0).into_owned();
        let ps = projector(std::slice::from_ref(&u));
        let ps2 = s2.projection();

        // Lines inside S′.
        let mut best_d2 = f64::INFINITY;
        let mut best_d3 = f64::INFINITY;
        for i in 0..10_000 {
            let t = PI * i as f64 / 10_000.0;
            let v: DVector<f64> = s2.frame().column(0) * t.cos() + s2.frame().column(1) * t.sin();
            best_d2 = best_d2.min((&u - &v).norm().min((&u + &v).norm()));
            best_d3 = best_d3.min((&ps - projector(&[v])).norm());
        }

        // Planes containing S, spanned by u and a unit w ⊥ u.
        let mut m = gaussian(4, 4, &mut rng);
        m.set_column(0, &u);
        let comp = m.qr().q().columns(1, 3).into_owned();
        let mut sup_d2 = f64::INFINITY;
        let mut sup_d3 = f64::INFINITY;
        for p in &fib {
            let w = &comp * DVector::from_column_slice(p);
            let cols = [u.clone(), w];
            sup_d2 = sup_d2.min(hausdorff(&cols, &ps2));
            sup_d3 = sup_d3.min((projector(&cols) - &ps2).norm());
        }

        let d2 = subspace_distance(SubspaceLoss::D2, &s, &s2).unwrap();
        let d3 = subspace_distance(SubspaceLoss::D3, &s, &s2).unwrap();
        assert!((d2 - best_d2).abs() < 0.02, "d2 {d2} vs lines {best_d2}");
        assert!((d2 - sup_d2).abs() < 0.02, "d2 {d2} vs planes {sup_d2}");
        assert!((d3 - best_d3).abs() < 0.02, "d3 {d3} vs lines {best_d3}");
        assert!((d3 - sup_d3).abs() < 0.02, "d3 {d3} vs planes {sup_d3}");
        assert_eq!(subspace_distance(SubspaceLoss::D1, &s, &s2).unwrap(), d2);
    }
}

#[test]
fn orthogonal_lines_in_the_plane() {
    let e1 = SubspaceFrame::coordinate(2, 1).unwrap();
    let e2 = SubspaceFrame::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
    let d3 = subspace_distance(SubspaceLoss::D3, &e1, &e2).unwrap();
    assert!((d3 - 2f64.sqrt()).abs() < 1e-12);
    assert!((principal_angles(&e1, &e2).unwrap()[0] - PI / 2.0).abs() < 1e-12);
}

/// Rotation `exp(Ω)` of an orthonormal basis with `‖Ω‖_op = t`, moving each
/// vector by at most `t`.
fn perturbed(e: &DMatrix<f64>, t: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = gaussian(e.nrows(), e.nrows(), rng);
    let omega = &a - a.transpose();
    let op = omega.singular_values().max();
    (omega * (t / op)).exp() * e
}

#[test]
fn procrustes_completion_bound_on_random_trials() {
    let (d, b, eps) = (5, 2, 0.05);
    let mut rng = stream_rng(103, 0);
    for _ in 0..100 {
        let e = haar_sample(d, &mut rng).unwrap().matrix().clone();
        let t = eps * rng.random::<f64>();
        let g = perturbed(&e, t, &mut rng).columns(0, b).into_owned();
        for i in 0..b {
            assert!((e.column(i) - g.column(i)).norm() <= eps);
        }
        let full = complete_basis(&g, &e, eps).unwrap();
        assert!(orthonormality_defect(&full) < 1e-10);
        assert_eq!(full.columns(0, b), g.columns(0, b));
        let worst = (0..d).map(|j| (e.column(j) - full.column(j)).norm()).fold(0.0, f64::max);
        assert!(worst <= 2.0 * (b as f64).sqrt() * eps, "{worst}");
    }
}

#[test]
fn completion_of_exact_vectors_recovers_the_rest() {
    let e = DMatrix::<f64>::identity(4, 4);
    let g = e.columns(0, 2).into_owned();
    let full = complete_basis(&g, &e, 0.0).unwrap();
    for j in 2..4 {
        assert!((full.column(j).dot(&e.column(j)).abs() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn sphere_nets_cover_and_respect_bounds() {
    for (d, eps, bound) in [(2, 0.5, PI.sqrt() * 16.0), (3, 1.0, (1.5 * PI).sqrt() * 64.0)] {
        let net = sphere_net(d, eps, &mut stream_rng(104, d as u64)).unwrap();
        assert!((net.cardinality_bound - bound).abs() < 1e-9 * bound);
        assert!((net.len() as f64) <= bound);
        assert!(net.points.iter().all(|p| orthonormality_defect(p) < 1e-10));
        let cov = net.coverage(10_000, 7, Execution::Parallel);
        assert!(cov >= 0.999, "d={d}: coverage {cov}");
    }
}

#[test]
fn stiefel_net_covers_two_frames_in_three_dimensions() {
    let net = stiefel_net(3, 2, 0.8, &mut stream_rng(105, 0)).unwrap();
    assert!(net.respects_bound());
    assert!(net.coverage(1000, 8, Execution::Parallel) >= 0.99);
}

#[test]
fn haar_mass_matches_planar_angle_oracle() {
    // In O(2) with b = 1 the stabiliser is {I, reflection}; a rotation by φ
    // is a member iff 2|sin(φ/2)| ≤ ε, and reflections split evenly.
    let qstar = haar_sample(2, &mut stream_rng(106, 0)).unwrap();
    for eps in [0.3, 0.8, 1.4] {
        let rep = haar_mass_check(&qstar, 1, eps, 100_000, 9, Execution::Parallel).unwrap();
        let exact = (1.0 - eps * eps / 4.0).acos() / PI;
        assert!(
            (rep.estimate - exact).abs() <= 2.0 * rep.std_error.max(1e-12),
            "eps={eps}: {} vs {exact} (se {})",
            rep.estimate,
            rep.std_error
        );
    }
}

#[test]
fn haar_mass_exceeds_bound_in_three_dimensions() {
    let qstar = haar_sample(3, &mut stream_rng(107, 0)).unwrap();
    for eps in [0.5, 1.0, 1.5] {
        let rep = haar_mass_check(&qstar, 1, eps, 100_000, 10, Execution::Parallel).unwrap();
        assert!(rep.meets_bound && rep.conclusive, "{rep:?}");
    }
}

fn arb_pair() -> impl Strategy<Value = (usize, usize, u64)> {
    (2usize..=6).prop_flat_map(|d| (Just(d), 1..=d, any::<u64>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn d1_equals_d2_and_d3_is_projector_distance((d, b, seed) in arb_pair()) {
        let mut rng = stream_rng(seed, 0);
        let s = random_frame(d, b, &mut rng);
        let s2 = random_frame(d, b, &mut rng);
        let d1 = subspace_distance(SubspaceLoss::D1, &s, &s2).unwrap();
        let d2 = subspace_distance(SubspaceLoss::D2, &s, &s2).unwrap();
        let d3 = subspace_distance(SubspaceLoss::D3, &s, &s2).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
        prop_assert!((d3 - (s.projection() - s2.projection()).norm()).abs() < 1e-8);
        prop_assert!((d3 - subspace_distance(SubspaceLoss::D3, &s2, &s).unwrap()).abs() < 1e-12);
        prop_assert!((d2 - subspace_distance(SubspaceLoss::D2, &s2, &s).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn d3_triangle_inequality((d, b, seed) in arb_pair()) {
        let mut rng = stream_rng(seed, 1);
        let f: Vec<SubspaceFrame> = (0..3).map(|_| random_frame(d, b, &mut rng)).collect();
        let dist = |i: usize, j: usize| subspace_distance(SubspaceLoss::D3, &f[i], &f[j]).unwrap();
        prop_assert!(dist(0, 2) <= dist(0, 1) + dist(1, 2) + 1e-8);
    }

    #[test]
    fn angles_lie_in_range_and_are_sorted((d, b, seed) in arb_pair(), b2 in 1usize..=6) {
        let b2 = b2.min(d);
        let mut rng = stream_rng(seed, 2);
        let s = random_frame(d, b, &mut rng);
        let s2 = random_frame(d, b2, &mut rng);
        let angles = principal_angles(&s, &s2).unwrap();
        prop_assert_eq!(angles.len(), b.min(b2));
        prop_assert!(angles.iter().all(|t| (0.0..=PI / 2.0).contains(t)));
        prop_assert!(angles.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn haar_samples_are_orthogonal(d in 1usize..=8, seed in any::<u64>()) {
        let q = haar_sample(d, &mut stream_rng(seed, 3)).unwrap();
        prop_assert!(q.defect() < 1e-10);
        prop_assert!((q.determinant().abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn contained_subspace_has_zero_loss(d in 2usize..=6, seed in any::<u64>()) {
        let mut rng = stream_rng(seed, 4);
        let big = random_frame(d, d - 1, &mut rng);
        let coeffs = gaussian(d - 1, 1, &mut rng);
        let small = SubspaceFrame::from_spanning(big.frame() * coeffs).unwrap();
        for loss in SubspaceLoss::ALL {
            prop_assert!(subspace_distance(loss, &small, &big).unwrap() < 1e-6);
        }
    }

    #[test]
    fn completion_always_orthonormal(seed in any::<u64>(), d in 2usize..=6, eps in 0.001f64..0.3) {
        let mut rng = stream_rng(seed, 5);
        let b = rng.random_range(1..d);
        let e = haar_sample(d, &mut rng).unwrap().matrix().clone();
        let g = perturbed(&e, eps, &mut rng).columns(0, b).into_owned();
        let full = complete_basis(&g, &e, eps).unwrap();
        prop_assert!(orthonormality_defect(&full) < 1e-10);
        let worst = (0..d).map(|j| (e.column(j) - full.column(j)).norm()).fold(0.0, f64::max);
        prop_assert!(worst <= 2.0 * (b as f64).sqrt() * eps + 1e-12);
    }
}
