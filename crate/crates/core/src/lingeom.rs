//! Orthogonal-group and subspace geometry.
//!
//! Subspaces are carried as [`SubspaceFrame`]s (orthonormal column frames) and
//! only ever compared through principal angles or projection matrices, so
//! results do not depend on the choice of frame.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

const ORTHO_TOL: f64 = 1e-10;

/// Largest absolute entry of `MᵀM − I`.
pub fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// A d×d orthogonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Orthogonal {
    m: DMatrix<f64>,
}

impl Orthogonal {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimension(format!(
                "orthogonal matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = orthonormality_defect(&m);
        if defect > ORTHO_TOL {
            return Err(Error::NotOrthogonal(format!("|QᵀQ − I| = {defect:.3e}")));
        }
        Ok(Orthogonal { m })
    }

    pub fn identity(d: usize) -> Self {
        Orthogonal { m: DMatrix::identity(d, d) }
    }

    /// Nearest orthogonal matrix in the QR sense: Q from `m = QR` with the
    /// diagonal of R made positive.
    pub fn from_qr(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidDimension("square matrix required".into()));
        }
        let q = canonical_qr(m)?;
        Ok(Orthogonal { m: q })
    }

    /// Row-major constructor used by deserialisation.
    pub fn from_row_major(d: usize, data: &[f64]) -> Result<Self> {
        if data.len() != d * d {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for a {d}x{d} matrix, got {}",
                d * d,
                data.len()
            )));
        }
        Orthogonal::new(DMatrix::from_row_slice(d, d, data))
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Orthogonal { m }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                out.push(self.m[(i, j)]);
            }
        }
        out
    }

    pub fn determinant(&self) -> f64 {
        self.m.determinant()
    }

    pub fn inverse(&self) -> Orthogonal {
        Orthogonal { m: self.m.transpose() }
    }

    pub fn compose(&self, other: &Orthogonal) -> Orthogonal {
        Orthogonal { m: &self.m * &other.m }
    }

    pub fn apply(&self, x: &[f64]) -> DVector<f64> {
        &self.m * DVector::from_column_slice(x)
    }

    pub fn defect(&self) -> f64 {
        orthonormality_defect(&self.m)
    }
}

impl fmt::Display for Orthogonal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.m)
    }
}

/// Q factor of a thin QR decomposition with the signs of R's diagonal
/// absorbed into Q (so the factorisation is unique for full-rank input).
fn canonical_qr(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let cols = m.ncols();
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..cols {
        let rjj = r[(j, j)];
        if rjj.abs() < 1e-300 {
            return Err(Error::DegenerateInput("rank-deficient matrix in QR".into()));
        }
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with
/// the signs of R's diagonal absorbed into Q.
pub fn haar_sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Orthogonal> {
    if d == 0 {
        return Err(Error::InvalidDimension("haar_sample needs d >= 1".into()));
    }
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(Orthogonal { m: canonical_qr(g)? })
}

/// Uniform point on the unit sphere of ℝ^d.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// A b-dimensional subspace of ℝ^d held as a d×b orthonormal frame.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceFrame {
    frame: DMatrix<f64>,
}

impl SubspaceFrame {
    pub fn new(frame: DMatrix<f64>) -> Result<Self> {
        if frame.ncols() == 0 || frame.ncols() > frame.nrows() {
            return Err(Error::InvalidDimension(format!(
                "frame must be d x b with 1 <= b <= d, got {}x{}",
                frame.nrows(),
                frame.ncols()
            )));
        }
        let defect = orthonormality_defect(&frame);
        if defect > ORTHO_TOL {
            return Err(Error::NotOrthogonal(format!("|FᵀF − I| = {defect:.3e}")));
        }
        Ok(SubspaceFrame { frame })
    }

    /// Orthonormalise the columns of a full-rank spanning matrix.
    pub fn from_spanning(m: DMatrix<f64>) -> Result<Self> {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(Error::InvalidDimension("spanning set must have 1..=d columns".into()));
        }
        Ok(SubspaceFrame { frame: canonical_qr(m)? })
    }

    /// `E_b = span(e_1, …, e_b)`.
    pub fn coordinate(d: usize, b: usize) -> Result<Self> {
        if b == 0 || b > d {
            return Err(Error::InvalidDimension(format!("need 1 <= b <= d, got b={b}, d={d}")));
        }
        Ok(SubspaceFrame { frame: DMatrix::identity(d, d).columns(0, b).into_owned() })
    }

    /// `q⁻¹(E_b)`: the span of the first `b` rows of `q`.
    pub fn pulled_back(q: &Orthogonal, b: usize) -> Result<Self> {
        let d = q.dim();
        if b == 0 || b > d {
            return Err(Error::InvalidDimension(format!("need 1 <= b <= d, got b={b}, d={d}")));
        }
        Ok(SubspaceFrame { frame: q.matrix().rows(0, b).transpose() })
    }

    pub fn ambient_dim(&self) -> usize {
        self.frame.nrows()
    }

    pub fn sub_dim(&self) -> usize {
        self.frame.ncols()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Orthogonal projector `FFᵀ`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.frame * self.frame.transpose()
    }

    /// Whether `x` lies in the subspace (residual below `tol`).
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        let p = &self.frame * (self.frame.transpose() * x);
        (x - p).norm() <= tol
    }
}

/// Principal angles between two subspaces in nonincreasing order; there are
/// `min(b₁, b₂)` of them.
pub fn principal_angles(s: &SubspaceFrame, s2: &SubspaceFrame) -> Result<Vec<f64>> {
    if s.ambient_dim() != s2.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "ambient dims {} and {}",
            s.ambient_dim(),
            s2.ambient_dim()
        )));
    }
    // Cosines lose accuracy for small angles, so those come from the sines:
    // singular values of the smaller frame's component orthogonal to the
    // larger subspace.
    let (small, large) = if s.sub_dim() <= s2.sub_dim() { (s, s2) } else { (s2, s) };
    let k = small.sub_dim();
    let m = small.frame.transpose() * &large.frame;
    let mut cos: Vec<f64> = m.singular_values().iter().copied().collect();
    cos.sort_by(|a, b| b.total_cmp(a));
    cos.truncate(k);
    let resid = &small.frame - &large.frame * (large.frame.transpose() * &small.frame);
    let mut sin: Vec<f64> = resid.singular_values().iter().copied().collect();
    sin.sort_by(|a, b| a.total_cmp(b));
    let mut angles: Vec<f64> = cos
        .iter()
        .zip(&sin)
        .map(|(c, s)| {
            let c = c.clamp(0.0, 1.0);
            if c * c > 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.acos()
            }
        })
        .collect();
    // Largest cosine ↔ smallest angle, so reverse for nonincreasing angles.
    angles.reverse();
    Ok(angles)
}

/// The three subspace losses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubspaceLoss {
    /// Minimal operator-norm distance between orienting isometries.
    D1,
    /// Directional Hausdorff distance between unit spheres of the subspaces.
    D2,
    /// Frobenius distance between orthogonal projectors.
    D3,
}

impl SubspaceLoss {
    pub const ALL: [SubspaceLoss; 3] = [SubspaceLoss::D1, SubspaceLoss::D2, SubspaceLoss::D3];

    pub fn name(self) -> &'static str {
        match self {
            SubspaceLoss::D1 => "d1",
            SubspaceLoss::D2 => "d2",
            SubspaceLoss::D3 => "d3",
        }
    }
}

impl fmt::Display for SubspaceLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Loss between two subspaces. When dimensions differ this is the extended
/// loss: the smaller subspace is compared with the best subspace of the
/// larger one, which reduces to the principal angles between the two.
pub fn subspace_distance(loss: SubspaceLoss, s: &SubspaceFrame, s2: &SubspaceFrame) -> Result<f64> {
    let angles = principal_angles(s, s2)?;
    Ok(distance_from_angles(loss, &angles))
}

/// Loss value from a nonincreasing vector of principal angles.
pub fn distance_from_angles(loss: SubspaceLoss, angles: &[f64]) -> f64 {
    match loss {
        SubspaceLoss::D1 | SubspaceLoss::D2 => {
            let largest = angles.first().copied().unwrap_or(0.0);
            2.0 * (largest / 2.0).sin()
        }
        SubspaceLoss::D3 => {
            let s: f64 = angles.iter().map(|t| t.sin().powi(2)).sum();
            (2.0 * s).sqrt()
        }
    }
}

/// Complete orthonormal vectors `g` (d×b), each within `eps` of the matching
/// column of the orthonormal basis `e` (d×d), to a full orthonormal basis
/// whose every column stays within `2√b·eps` of `e`.
///
/// The remaining columns of `e` are projected onto `span(g)^⊥` and replaced
/// by the orthogonal polar factor of that block, computed from an SVD whose
/// left factor lives in the complement.
pub fn complete_basis(g: &DMatrix<f64>, e: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let d = e.nrows();
    let b = g.ncols();
    if e.ncols() != d || g.nrows() != d {
        return Err(Error::DimensionMismatch(format!(
            "g is {}x{}, e is {}x{}",
            g.nrows(),
            g.ncols(),
            e.nrows(),
            e.ncols()
        )));
    }
    if b > d {
        return Err(Error::InvalidDimension(format!("b={b} exceeds d={d}")));
    }
    if orthonormality_defect(g) > ORTHO_TOL || orthonormality_defect(e) > ORTHO_TOL {
        return Err(Error::NotOrthogonal("inputs of complete_basis must be orthonormal".into()));
    }
    for i in 0..b {
        let dist = (e.column(i) - g.column(i)).norm();
        if dist > eps {
            log::warn!("complete_basis: |e_{i} - g_{i}| = {dist:.3e} exceeds eps = {eps:.3e}");
        }
    }
    if b == d {
        return Ok(g.clone());
    }
    let complement = DMatrix::identity(d, d) - g * g.transpose();
    let a = &complement * e.columns(b, d - b);
    let svd = a.svd(true, true);
    let smallest = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if smallest < 1e-10 {
        return Err(Error::DegenerateInput(format!(
            "projected completion block is rank deficient (smallest singular value {smallest:.3e})"
        )));
    }
    let w = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested Vᵀ");
    let polar = w * vt;
    let mut out = DMatrix::zeros(d, d);
    out.columns_mut(0, b).copy_from(g);
    out.columns_mut(b, d - b).copy_from(&polar);
    Ok(out)
}

/// Limits on net construction, which grows like (8/ε)^{b(d−1)}.
#[derive(Clone, Debug)]
pub struct NetConfig {
    /// Stop after `streak_per_dim · d` consecutive rejected candidates.
    pub streak_per_dim: usize,
    pub max_ambient_dim: usize,
    pub max_tuple_size: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { streak_per_dim: 200, max_ambient_dim: 4, max_tuple_size: 2 }
    }
}

/// A finite set of orthonormal b-tuples in ℝ^d covering all such tuples at
/// radius `radius` in the per-vector sup distance.
#[derive(Clone, Debug)]
pub struct NetSpec {
    pub ambient_dim: usize,
    pub tuple_size: usize,
    pub radius: f64,
    pub points: Vec<DMatrix<f64>>,
    pub cardinality_bound: f64,
}

/// `(πd/2)^{b/2} (8/ε)^{b(d−1)}`.
pub fn net_cardinality_bound(d: usize, b: usize, eps: f64) -> f64 {
    let (df, bf) = (d as f64, b as f64);
    (std::f64::consts::PI * df / 2.0).powf(bf / 2.0) * (8.0 / eps).powf(bf * (df - 1.0))
}

/// Per-vector sup distance between two tuples.
fn tuple_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (0..x.ncols())
        .map(|i| (x.column(i) - y.column(i)).norm())
        .fold(0.0, f64::max)
}

impl NetSpec {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Whether the size respects the cardinality bound. The bound degenerates
    /// on the zero-sphere (d = 1), where two points are always needed.
    pub fn respects_bound(&self) -> bool {
        self.ambient_dim == 1 || self.points.len() as f64 <= self.cardinality_bound
    }

    /// Distance from `tuple` to the nearest net element.
    pub fn nearest_distance(&self, tuple: &DMatrix<f64>) -> f64 {
        self.points
            .iter()
            .map(|p| tuple_distance(p, tuple))
            .fold(f64::INFINITY, f64::min)
    }

    /// Monte-Carlo fraction of Haar-random tuples within `radius` of the net.
    pub fn coverage(&self, n_mc: usize, seed: u64, exec: Execution) -> f64 {
        let hits = par::count_hits(exec, seed, n_mc, |rng| {
            let t = random_tuple(self.ambient_dim, self.tuple_size, rng);
            self.nearest_distance(&t) <= self.radius
        });
        hits as f64 / n_mc.max(1) as f64
    }

    /// CSV with one vector per row: `tuple,vector,x1..xd`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.ambient_dim).map(|i| format!("x{i}")).collect();
        writeln!(w, "tuple,vector,{}", header.join(","))?;
        for (t, p) in self.points.iter().enumerate() {
            for v in 0..p.ncols() {
                let row: Vec<String> = p.column(v).iter().map(|x| crate::io::fmt_f64(*x)).collect();
                writeln!(w, "{t},{v},{}", row.join(","))?;
            }
        }
        Ok(())
    }
}

/// First `b` columns of a Haar matrix: a uniform orthonormal b-tuple.
pub fn random_tuple<R: Rng + ?Sized>(d: usize, b: usize, rng: &mut R) -> DMatrix<f64> {
    if b == 1 {
        let v = random_unit_vector(d, rng);
        return DMatrix::from_column_slice(d, 1, v.as_slice());
    }
    let q = haar_sample(d, rng).expect("d >= 1");
    q.matrix().columns(0, b).into_owned()
}

fn greedy_packing<R: Rng + ?Sized>(
    d: usize,
    b: usize,
    eps: f64,
    cfg: &NetConfig,
    rng: &mut R,
) -> Vec<DMatrix<f64>> {
    let separation = eps / 2.0;
    let max_streak = cfg.streak_per_dim * d;
    let mut points: Vec<DMatrix<f64>> = Vec::new();
    let mut streak = 0usize;
    while streak < max_streak {
        let cand = random_tuple(d, b, rng);
        if points.iter().all(|p| tuple_distance(p, &cand) > separation) {
            points.push(cand);
            streak = 0;
        } else {
            streak += 1;
        }
    }
    points
}

fn check_radius(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidRadius(eps));
    }
    Ok(())
}

/// Greedy ε/2-packing of the unit sphere S^{d−1}; a maximal packing is an
/// ε-covering.
pub fn sphere_net<R: Rng + ?Sized>(d: usize, eps: f64, rng: &mut R) -> Result<NetSpec> {
    sphere_net_with(d, eps, &NetConfig::default(), rng)
}

pub fn sphere_net_with<R: Rng + ?Sized>(
    d: usize,
    eps: f64,
    cfg: &NetConfig,
    rng: &mut R,
) -> Result<NetSpec> {
    check_radius(eps)?;
    if d == 0 {
        return Err(Error::InvalidDimension("sphere_net needs d >= 1".into()));
    }
    let points = if d == 1 {
        vec![DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, -1.0)]
    } else {
        greedy_packing(d, 1, eps, cfg, rng)
    };
    Ok(NetSpec {
        ambient_dim: d,
        tuple_size: 1,
        radius: eps,
        points,
        cardinality_bound: net_cardinality_bound(d, 1, eps),
    })
}

/// Net over orthonormal b-tuples of ℝ^d; refuses beyond the configured
/// desk-scale limits.
pub fn stiefel_net<R: Rng + ?Sized>(d: usize, b: usize, eps: f64, rng: &mut R) -> Result<NetSpec> {
    stiefel_net_with(d, b, eps, &NetConfig::default(), rng)
}

pub fn stiefel_net_with<R: Rng + ?Sized>(
    d: usize,
    b: usize,
    eps: f64,
    cfg: &NetConfig,
    rng: &mut R,
) -> Result<NetSpec> {
    check_radius(eps)?;
    if b == 0 || b > d {
        return Err(Error::InvalidDimension(format!("need 1 <= b <= d, got b={b}, d={d}")));
    }
    if d > cfg.max_ambient_dim || b > cfg.max_tuple_size {
        return Err(Error::ScaleExceeded(format!(
            "stiefel_net(d={d}, b={b}) exceeds the limits d <= {}, b <= {}",
            cfg.max_ambient_dim, cfg.max_tuple_size
        )));
    }
    if b == 1 {
        return sphere_net_with(d, eps, cfg, rng);
    }
    let points = greedy_packing(d, b, eps, cfg, rng);
    Ok(NetSpec {
        ambient_dim: d,
        tuple_size: b,
        radius: eps,
        points,
        cardinality_bound: net_cardinality_bound(d, b, eps),
    })
}

/// Frobenius-relaxed distance from `q` to the set `{q*q' : q' fixes
/// (q*)⁻¹(E_b) pointwise}`. The minimisation over the stabiliser is an
/// orthogonal Procrustes problem on the complement block with closed form
///
/// ‖E_b − qU_b‖²_F + 2(d−b) − 2‖E_cᵀ q U_c‖_*
///
/// where U = q*ᵀ is split into its first `b` and last `d−b` columns. Because
/// ‖·‖_op ≤ ‖·‖_F this upper-bounds the operator-norm distance.
pub fn stabilizer_distance(qstar: &Orthogonal, q: &Orthogonal, b: usize) -> f64 {
    let d = qstar.dim();
    let u = qstar.matrix().transpose();
    let qu = q.matrix() * &u;
    let mut head = 0.0;
    for j in 0..b {
        for i in 0..d {
            let target = if i == j { 1.0 } else { 0.0 };
            head += (qu[(i, j)] - target).powi(2);
        }
    }
    if b == d {
        return head.sqrt();
    }
    let block = qu.view((b, b), (d - b, d - b)).into_owned();
    let nuclear: f64 = block.singular_values().iter().sum();
    (head + 2.0 * (d - b) as f64 - 2.0 * nuclear).max(0.0).sqrt()
}

/// Result of [`haar_mass_check`].
#[derive(Clone, Debug, Serialize)]
pub struct HaarMassReport {
    pub estimate: f64,
    pub std_error: f64,
    pub bound: f64,
    pub n_mc: usize,
    /// `estimate >= bound`.
    pub meets_bound: bool,
    /// The Monte-Carlo error is small enough for the comparison to be
    /// meaningful (standard error below bound/2, or a 3-SE margin).
    pub conclusive: bool,
}

/// `(2/(πd))^{b/2} (ε/(16√(bd)))^{b(d−1)}`.
pub fn haar_mass_bound(d: usize, b: usize, eps: f64) -> f64 {
    let (df, bf) = (d as f64, b as f64);
    (2.0 / (std::f64::consts::PI * df)).powf(bf / 2.0)
        * (eps / (16.0 * (bf * df).sqrt())).powf(bf * (df - 1.0))
}

/// Monte-Carlo Haar mass of the ε-neighbourhood of `q*` modulo the
/// stabiliser of `(q*)⁻¹(E_b)`, compared with its analytic lower bound.
/// Membership uses [`stabilizer_distance`], which under-reports membership.
pub fn haar_mass_check(
    qstar: &Orthogonal,
    b: usize,
    eps: f64,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<HaarMassReport> {
    let d = qstar.dim();
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    if b == 0 || b > d {
        return Err(Error::InvalidDimension(format!("need 1 <= b <= d, got b={b}, d={d}")));
    }
    if n_mc == 0 {
        return Err(Error::InvalidArgument("n_mc must be positive".into()));
    }
    let bound = haar_mass_bound(d, b, eps);
    // The operator-norm diameter of O(d) is 2.
    let (estimate, std_error) = if eps >= 2.0 {
        (1.0, 0.0)
    } else {
        let hits = par::count_hits(exec, seed, n_mc, |rng| {
            let q = haar_sample(d, rng).expect("d >= 1");
            stabilizer_distance(qstar, &q, b) <= eps
        });
        let p = hits as f64 / n_mc as f64;
        (p, (p * (1.0 - p) / n_mc as f64).sqrt())
    };
    Ok(HaarMassReport {
        estimate,
        std_error,
        bound,
        n_mc,
        meets_bound: estimate >= bound,
        conclusive: std_error < bound / 2.0 || estimate - 3.0 * std_error >= bound,
    })
}
