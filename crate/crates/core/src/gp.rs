//! Squared-exponential Gaussian processes and the projected process
//! `W^{a,b,q}_x = W(a·(qx)_{1..b})`.
//!
//! A latent function is represented by its values at a finite set of anchor
//! points together with the whitened coordinates `z` such that
//! `values = L z`, `L` the Cholesky factor of the anchor Gram matrix.
//! Off-anchor values come from Gaussian conditioning.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lingeom::Orthogonal;
use crate::par::{self, Execution};

pub const DEFAULT_JITTER: f64 = 1e-8;
const JITTER_RETRIES: usize = 3;

/// `k(s, t) = exp(−a²‖s − t‖²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SEKernel {
    pub inv_lengthscale: f64,
}

impl SEKernel {
    pub fn new(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("kernel scale must be positive, got {a}")));
        }
        Ok(SEKernel { inv_lengthscale: a })
    }

    /// The unscaled kernel, used on already-projected inputs.
    pub fn unit() -> Self {
        SEKernel { inv_lengthscale: 1.0 }
    }

    #[inline]
    pub fn eval(&self, s: &[f64], t: &[f64]) -> f64 {
        let a2 = self.inv_lengthscale * self.inv_lengthscale;
        let d2: f64 = s.iter().zip(t).map(|(x, y)| (x - y) * (x - y)).sum();
        (-a2 * d2).exp()
    }

    /// Kernel matrix between two point lists.
    pub fn cross(&self, xs: &[Vec<f64>], ys: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(xs.len(), ys.len(), |i, j| self.eval(&xs[i], &ys[j]))
    }
}

/// Sparsity pattern `(a, b, q)` of the projected process.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityPattern {
    q: Orthogonal,
    b: usize,
    a: f64,
}

impl SparsityPattern {
    pub fn new(q: Orthogonal, b: usize, a: f64) -> Result<Self> {
        if b == 0 || b > q.dim() {
            return Err(Error::InvalidDimension(format!(
                "intrinsic dim must lie in 1..={}, got {b}",
                q.dim()
            )));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale a must be positive, got {a}")));
        }
        Ok(SparsityPattern { q, b, a })
    }

    pub fn orientation(&self) -> &Orthogonal {
        &self.q
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.b
    }

    pub fn scale(&self) -> f64 {
        self.a
    }

    pub fn ambient_dim(&self) -> usize {
        self.q.dim()
    }

    pub fn with_orientation(&self, q: Orthogonal) -> Self {
        SparsityPattern { q, ..self.clone() }
    }

    pub fn with_scale(&self, a: f64) -> Self {
        SparsityPattern { a, ..self.clone() }
    }

    pub fn with_intrinsic_dim(&self, b: usize) -> Self {
        SparsityPattern { b, ..self.clone() }
    }

    /// Projector `R = q⁻¹ diag(1_b, 0) q` onto `q⁻¹(E_b)`.
    pub fn projector(&self) -> DMatrix<f64> {
        let rows = self.q.matrix().rows(0, self.b);
        rows.transpose() * rows
    }

    /// `a·(qx)_{1..b}`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let m = self.q.matrix();
        (0..self.b)
            .map(|i| self.a * (0..x.len()).map(|j| m[(i, j)] * x[j]).sum::<f64>())
            .collect()
    }

    pub fn project_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.project(x)).collect()
    }
}

/// Projected input `a·(qx)_{1..b}` of a point of the unit ball.
pub fn projected_input(x: &[f64], pattern: &SparsityPattern) -> Vec<f64> {
    debug_assert!(x.iter().map(|v| v * v).sum::<f64>() <= (1.0 + 1e-9f64).powi(2));
    pattern.project(x)
}

/// A Gram matrix with its Cholesky factor.
#[derive(Clone, Debug)]
pub struct Gram {
    pub matrix: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    /// Jitter actually added to the diagonal.
    pub jitter: f64,
}

impl Gram {
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

/// Factor a kernel matrix, escalating the diagonal jitter ×10 up to three
/// times if the factorisation fails.
pub fn factor_kernel_matrix(mut k: DMatrix<f64>, jitter: f64) -> Result<Gram> {
    let m = k.nrows();
    let asym = (&k - k.transpose()).abs().max();
    debug_assert!(asym <= 1e-12, "Gram asymmetry {asym}");
    if asym > 1e-12 {
        return Err(Error::NumericalDegeneracy(format!("Gram matrix asymmetric by {asym:.3e}")));
    }
    let mut jit = jitter.max(0.0);
    for i in 0..m {
        k[(i, i)] += jit;
    }
    for attempt in 0..=JITTER_RETRIES {
        if let Some(chol) = Cholesky::new(k.clone()) {
            return Ok(Gram { matrix: k, chol, jitter: jit });
        }
        if attempt == JITTER_RETRIES {
            break;
        }
        let next = if jit > 0.0 { jit * 10.0 } else { DEFAULT_JITTER };
        for i in 0..m {
            k[(i, i)] += next - jit;
        }
        jit = next;
    }
    Err(Error::NumericalDegeneracy(format!(
        "Gram matrix of size {m} not positive definite after jitter {jit:.1e}"
    )))
}

/// Gram matrix of `kernel` on `points` plus `jitter·I`, and its factor.
pub fn gram(points: &[Vec<f64>], kernel: &SEKernel, jitter: f64) -> Result<Gram> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("gram needs at least one point".into()));
    }
    if jitter < 0.0 {
        return Err(Error::InvalidArgument("jitter must be nonnegative".into()));
    }
    factor_kernel_matrix(kernel.cross(points, points), jitter)
}

/// Latent function values at anchor points under a sparsity pattern.
#[derive(Clone, Debug)]
pub struct LatentField {
    pub pattern: SparsityPattern,
    pub anchors: Arc<Vec<Vec<f64>>>,
    pub values: DVector<f64>,
    pub whitened: DVector<f64>,
}

impl LatentField {
    /// Build from whitened coordinates, computing `values = L z`.
    pub fn from_whitened(
        pattern: SparsityPattern,
        anchors: Arc<Vec<Vec<f64>>>,
        whitened: DVector<f64>,
    ) -> Result<Self> {
        if whitened.len() != anchors.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} whitened coordinates for {} anchors",
                whitened.len(),
                anchors.len()
            )));
        }
        let g = gram(&pattern.project_all(&anchors), &SEKernel::unit(), DEFAULT_JITTER)?;
        let values = g.lower() * &whitened;
        Ok(LatentField { pattern, anchors, values, whitened })
    }

    pub fn anchor_gram(&self) -> Result<Gram> {
        gram(&self.pattern.project_all(&self.anchors), &SEKernel::unit(), DEFAULT_JITTER)
    }
}

/// Draw the latent field at `anchors` from the projected process prior.
pub fn sample_path<R: Rng + ?Sized>(
    pattern: &SparsityPattern,
    anchors: Arc<Vec<Vec<f64>>>,
    rng: &mut R,
) -> Result<LatentField> {
    let z = DVector::from_fn(anchors.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    LatentField::from_whitened(pattern.clone(), anchors, z)
}

/// Gaussian predictive distribution.
#[derive(Clone, Debug)]
pub struct Predictive {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl Predictive {
    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

/// Condition the field on its anchor values and predict at `query`.
pub fn condition(field: &LatentField, query: &[Vec<f64>]) -> Result<Predictive> {
    let g = field.anchor_gram()?;
    let kernel = SEKernel::unit();
    let pa = field.pattern.project_all(&field.anchors);
    let pq = field.pattern.project_all(query);
    let k_aq = kernel.cross(&pa, &pq);
    let alpha = g.chol.solve(&field.values);
    let mean = k_aq.transpose() * alpha;
    let l_inv_k = g
        .chol
        .l()
        .solve_lower_triangular(&k_aq)
        .ok_or_else(|| Error::NumericalDegeneracy("triangular solve failed".into()))?;
    let mut cov = kernel.cross(&pq, &pq) - l_inv_k.transpose() * &l_inv_k;
    for i in 0..cov.nrows() {
        if cov[(i, i)] < 0.0 {
            debug_assert!(cov[(i, i)] > -1e-9, "negative predictive variance {}", cov[(i, i)]);
            cov[(i, i)] = 0.0;
        }
    }
    Ok(Predictive { mean, cov })
}

/// Linear map from whitened anchor coordinates to function values at a set
/// of evaluation points: `f_eval = Φ z` with `Φ = K_EA L⁻ᵀ`.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub phi: DMatrix<f64>,
    /// Log-determinant of the (jittered) anchor Gram matrix.
    pub log_det: f64,
}

/// Build the feature map of `pattern` for `eval` points given `anchors`.
/// With `anchored_eval`, the evaluation points are the anchors themselves and
/// `Φ = L` exactly.
pub fn feature_map(
    pattern: &SparsityPattern,
    anchors: &[Vec<f64>],
    eval: &[Vec<f64>],
    anchored_eval: bool,
) -> Result<FeatureMap> {
    if anchors.is_empty() {
        return Ok(FeatureMap { phi: DMatrix::zeros(eval.len(), 0), log_det: 0.0 });
    }
    let kernel = SEKernel::unit();
    let pa = pattern.project_all(anchors);
    let g = gram(&pa, &kernel, DEFAULT_JITTER)?;
    let l = g.lower();
    let log_det = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if anchored_eval {
        return Ok(FeatureMap { phi: l, log_det });
    }
    let pe = pattern.project_all(eval);
    let k_ae = kernel.cross(&pa, &pe);
    let x = l
        .solve_lower_triangular(&k_ae)
        .ok_or_else(|| Error::NumericalDegeneracy("triangular solve failed".into()))?;
    Ok(FeatureMap { phi: x.transpose(), log_det })
}

/// Result of [`rkhs_min_norm`].
#[derive(Clone, Debug, Serialize)]
pub struct RkhsApprox {
    /// Squared RKHS norm of the approximant; an upper bound on the infimum.
    pub norm_sq: f64,
    pub values: Vec<f64>,
    pub sup_error: f64,
    pub ridge: f64,
    pub upper_bound_surrogate: bool,
}

/// Smallest RKHS norm² over kernel-ridge approximants of `f` (values on
/// `grid`) whose grid sup-error is at most `eps`. The ridge weight is chosen
/// from a fixed logarithmic ladder so the result is monotone in `eps`.
pub fn rkhs_min_norm(
    f_target: &[f64],
    grid: &[Vec<f64>],
    kernel: &SEKernel,
    eps: f64,
) -> Result<RkhsApprox> {
    if f_target.len() != grid.len() || grid.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} target values on {} grid points",
            f_target.len(),
            grid.len()
        )));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    let f_sup = f_target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if f_sup <= eps {
        return Ok(RkhsApprox {
            norm_sq: 0.0,
            values: vec![0.0; grid.len()],
            sup_error: f_sup,
            ridge: f64::INFINITY,
            upper_bound_surrogate: true,
        });
    }
    let k = kernel.cross(grid, grid);
    let n = grid.len();
    let eig = k.symmetric_eigen();
    let lam: Vec<f64> = eig.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    let v = &eig.eigenvectors;
    let coef = v.transpose() * DVector::from_column_slice(f_target);
    let trace: f64 = lam.iter().sum();
    let ladder: Vec<f64> = (0..240)
        .map(|i| trace * 10f64.powf(4.0 - i as f64 * 18.0 / 239.0))
        .collect();
    let mut best: Option<RkhsApprox> = None;
    for &ridge in &ladder {
        let shrink = DVector::from_fn(n, |i, _| coef[i] * lam[i] / (lam[i] + ridge));
        let h = v * &shrink;
        let sup_error = h
            .iter()
            .zip(f_target)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if sup_error > eps {
            continue;
        }
        let norm_sq: f64 = (0..n)
            .map(|i| lam[i] * coef[i] * coef[i] / ((lam[i] + ridge) * (lam[i] + ridge)))
            .sum();
        if best.as_ref().is_none_or(|b| norm_sq < b.norm_sq) {
            best = Some(RkhsApprox {
                norm_sq,
                values: h.iter().copied().collect(),
                sup_error,
                ridge,
                upper_bound_surrogate: true,
            });
        }
    }
    best.ok_or_else(|| {
        Error::EstimateInfeasible(format!("no ridge weight reaches grid sup-error {eps}"))
    })
}

/// Monte-Carlo estimate of `−log P(sup_grid |W| ≤ eps)`.
#[derive(Clone, Debug, Serialize)]
pub struct SmallBall {
    pub neglog: f64,
    pub std_error: f64,
    pub hits: usize,
    pub n_mc: usize,
}

/// Small-ball exponent of the intrinsic process `t ↦ W(a t)` on `grid`
/// (points of the unit ball of ℝ^b). The law does not depend on `q`.
pub fn small_ball_neglog(
    pattern: &SparsityPattern,
    eps: f64,
    grid: &[Vec<f64>],
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<SmallBall> {
    if !(eps > 0.0 && eps <= 4.0) {
        return Err(Error::InvalidArgument(format!("eps must lie in (0, 4], got {eps}")));
    }
    if grid.iter().any(|p| p.len() != pattern.intrinsic_dim()) {
        return Err(Error::DimensionMismatch("grid points must live in ℝ^b".into()));
    }
    let a = pattern.scale();
    let scaled: Vec<Vec<f64>> = grid.iter().map(|p| p.iter().map(|v| a * v).collect()).collect();
    let g = gram(&scaled, &SEKernel::unit(), DEFAULT_JITTER)?;
    let l = g.lower();
    let m = grid.len();
    let hits = par::count_hits(exec, seed, n_mc, |rng| {
        let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = &l * z;
        w.iter().all(|v| v.abs() <= eps)
    });
    if hits < 10 {
        return Err(Error::EstimateInfeasible(format!(
            "only {hits} of {n_mc} paths stayed below {eps}; increase eps or n_mc"
        )));
    }
    let p = hits as f64 / n_mc as f64;
    Ok(SmallBall {
        neglog: -p.ln(),
        std_error: ((1.0 - p) / (n_mc as f64 * p)).sqrt(),
        hits,
        n_mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lingeom::haar_sample;
    use crate::par::stream_rng;
    use crate::qmc::ball_grid;

    fn pattern(d: usize, b: usize, a: f64, seed: u64) -> SparsityPattern {
        let q = haar_sample(d, &mut stream_rng(seed, 0)).unwrap();
        SparsityPattern::new(q, b, a).unwrap()
    }

    #[test]
    fn identity_pattern_is_identity() {
        let p = SparsityPattern::new(Orthogonal::identity(3), 3, 1.0).unwrap();
        let x = [0.1, -0.2, 0.3];
        assert_eq!(projected_input(&x, &p), x.to_vec());
    }

    #[test]
    fn projection_constant_along_fibres() {
        let p = pattern(4, 2, 1.7, 1);
        let r = p.projector();
        assert!((&r * &r - &r).abs().max() < 1e-9);
        let x = DVector::from_column_slice(&[0.2, -0.1, 0.4, 0.3]);
        let rx = &r * &x;
        let a = projected_input(x.as_slice(), &p);
        let b = projected_input(rx.as_slice(), &p);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn gram_small_cases() {
        let k = SEKernel::unit();
        let g = gram(&[vec![0.3]], &k, 1e-8).unwrap();
        assert!((g.matrix[(0, 0)] - (1.0 + 1e-8)).abs() < 1e-15);
        let g = gram(&[vec![0.3, 0.1], vec![0.3, 0.1]], &k, 1e-8).unwrap();
        assert!((g.matrix[(0, 1)] - 1.0).abs() < 1e-15);
        let g = gram(&[vec![0.0], vec![1.0]], &k, 0.0).unwrap();
        assert!((g.matrix[(0, 1)] - (-1f64).exp()).abs() < 1e-12);
        assert!((g.matrix[(0, 1)] - 0.367879).abs() < 1e-6);
        assert!(gram(&[], &k, 1e-8).is_err());
    }

    #[test]
    fn jitter_escalates_on_duplicate_points() {
        let pts = vec![vec![0.0]; 5];
        let g = gram(&pts, &SEKernel::unit(), 0.0).unwrap();
        assert!(g.jitter > 0.0);
    }

    #[test]
    fn kernel_rejects_bad_scale() {
        assert!(SEKernel::new(0.0).is_err());
        assert!(SEKernel::new(f64::NAN).is_err());
    }

    #[test]
    fn single_anchor_has_unit_variance() {
        let p = pattern(3, 2, 1.0, 2);
        let anchors = Arc::new(vec![vec![0.1, 0.2, 0.0]]);
        let mut rng = stream_rng(3, 0);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| sample_path(&p, anchors.clone(), &mut rng).unwrap().values[0])
            .collect();
        let v = crate::stats::variance(&xs);
        assert!((0.97..=1.03).contains(&v), "variance {v}");
    }

    #[test]
    fn fibre_points_get_identical_values() {
        let p = pattern(3, 1, 2.0, 4);
        let x = DVector::from_column_slice(&[0.3, 0.1, -0.2]);
        let r = p.projector();
        // Move along the kernel of R while staying in the ball.
        let mut v = DVector::from_column_slice(&[0.0, 0.0, 0.1]);
        v -= &r * &v;
        let y = &x + &v;
        let anchors = Arc::new(vec![x.as_slice().to_vec(), y.as_slice().to_vec()]);
        let field = sample_path(&p, anchors, &mut stream_rng(5, 0)).unwrap();
        assert!((field.values[0] - field.values[1]).abs() < 1e-3);
        // Conditioning at a fibre point matches conditioning at the anchor.
        let pred = condition(&field, &[x.as_slice().to_vec(), y.as_slice().to_vec()]).unwrap();
        assert!((pred.mean[0] - pred.mean[1]).abs() < 1e-9);
        assert!((pred.mean[0] - field.values[0]).abs() < 1e-3);
    }

    #[test]
    fn large_scale_decorrelates() {
        let p = pattern(2, 1, 50.0, 6);
        let anchors = Arc::new(vec![vec![0.5, 0.0], vec![-0.5, 0.0]]);
        let mut rng = stream_rng(7, 0);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..10_000 {
            let f = sample_path(&p, anchors.clone(), &mut rng).unwrap();
            xs.push(f.values[0]);
            ys.push(f.values[1]);
        }
        let (mx, my) = (crate::stats::mean(&xs), crate::stats::mean(&ys));
        let cov: f64 = xs.iter().zip(&ys).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / 1e4;
        let r = cov / (crate::stats::variance(&xs) * crate::stats::variance(&ys)).sqrt();
        assert!(r.abs() < 0.05, "correlation {r}");
    }

    #[test]
    fn conditioning_interpolates_anchors() {
        let p = pattern(3, 2, 1.5, 8);
        let mut rng = stream_rng(9, 0);
        let anchors: Vec<Vec<f64>> = crate::qmc::ball_points(3, 12, &mut rng);
        let field = sample_path(&p, Arc::new(anchors.clone()), &mut rng).unwrap();
        let pred = condition(&field, &anchors[..3]).unwrap();
        for i in 0..3 {
            assert!((pred.mean[i] - field.values[i]).abs() < 1e-6);
            assert!(pred.cov[(i, i)] <= 2.0 * DEFAULT_JITTER);
            assert!(pred.cov[(i, i)] >= 0.0);
        }
    }

    #[test]
    fn feature_map_matches_conditioning() {
        let p = pattern(3, 2, 1.2, 10);
        let mut rng = stream_rng(11, 0);
        let anchors = crate::qmc::ball_points(3, 20, &mut rng);
        let eval = crate::qmc::ball_points(3, 7, &mut rng);
        let field = sample_path(&p, Arc::new(anchors.clone()), &mut rng).unwrap();
        let fm = feature_map(&p, &anchors, &eval, false).unwrap();
        let direct = &fm.phi * &field.whitened;
        let pred = condition(&field, &eval).unwrap();
        assert!((direct - pred.mean).abs().max() < 1e-6);
        let anchored = feature_map(&p, &anchors, &anchors, true).unwrap();
        assert!((&anchored.phi * &field.whitened - &field.values).abs().max() < 1e-12);
    }

    #[test]
    fn rkhs_norm_trivial_cases() {
        let grid = ball_grid(1, 64);
        let k = SEKernel::new(1.0).unwrap();
        let zero = vec![0.0; grid.len()];
        assert_eq!(rkhs_min_norm(&zero, &grid, &k, 0.1).unwrap().norm_sq, 0.0);
        let f: Vec<f64> = grid.iter().map(|t| 0.3 * t[0]).collect();
        assert_eq!(rkhs_min_norm(&f, &grid, &k, 0.5).unwrap().norm_sq, 0.0);
    }

    #[test]
    fn rkhs_norm_of_kernel_section_is_one() {
        let grid = ball_grid(1, 64);
        let k = SEKernel::new(1.0).unwrap();
        let f: Vec<f64> = grid.iter().map(|t| k.eval(t, &[0.0])).collect();
        let r = rkhs_min_norm(&f, &grid, &k, 1e-5).unwrap();
        assert!((r.norm_sq - 1.0).abs() < 0.05, "norm² {}", r.norm_sq);
        assert!(r.sup_error <= 1e-5);
    }

    #[test]
    fn rkhs_norm_monotone_in_eps() {
        let grid = ball_grid(1, 64);
        let k = SEKernel::new(2.0).unwrap();
        let f: Vec<f64> = grid.iter().map(|t| (3.0 * t[0]).sin()).collect();
        let mut last = f64::INFINITY;
        for eps in [0.01, 0.03, 0.1, 0.3, 0.6, 0.99] {
            let n = rkhs_min_norm(&f, &grid, &k, eps).unwrap().norm_sq;
            assert!(n <= last + 1e-12);
            last = n;
        }
    }

    #[test]
    fn small_ball_wide_radius_is_near_zero() {
        let p = SparsityPattern::new(Orthogonal::identity(2), 1, 0.1).unwrap();
        let grid = ball_grid(1, 8);
        let s = small_ball_neglog(&p, 4.0, &grid, 2000, 1, Execution::Sequential).unwrap();
        assert!(s.neglog < 0.01, "{}", s.neglog);
    }

    #[test]
    fn small_ball_monotone_in_eps() {
        let p = SparsityPattern::new(Orthogonal::identity(2), 1, 1.0).unwrap();
        let grid = ball_grid(1, 32);
        let tight = small_ball_neglog(&p, 0.5, &grid, 20_000, 3, Execution::Parallel).unwrap();
        let loose = small_ball_neglog(&p, 1.0, &grid, 20_000, 3, Execution::Parallel).unwrap();
        assert!(tight.neglog >= loose.neglog);
    }

    #[test]
    fn small_ball_refuses_without_hits() {
        let p = SparsityPattern::new(Orthogonal::identity(2), 1, 8.0).unwrap();
        let grid = ball_grid(1, 64);
        let r = small_ball_neglog(&p, 0.05, &grid, 200, 1, Execution::Sequential);
        assert!(matches!(r, Err(Error::EstimateInfeasible(_))));
    }
}
