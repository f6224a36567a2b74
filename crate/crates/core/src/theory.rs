//! Rate formulas, the growth-equation root solver, the concentration function
//! and numerical verifiers of the detectability condition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{rkhs_min_norm, small_ball_neglog, SEKernel, SparsityPattern};
use crate::metrics::BallIntegrator;
use crate::model::{GroundTruth, SettingKind};
use crate::par::{stream_rng, Execution};

/// `t^b (log t)^{b+1}` for `t > 1`.
pub fn growth(b: usize, t: f64) -> f64 {
    let l = t.ln();
    t.powi(b as i32) * l.powi(b as i32 + 1)
}

/// Derivative of [`growth`].
pub fn growth_derivative(b: usize, t: f64) -> f64 {
    let (bf, l) = (b as f64, t.ln());
    t.powi(b as i32 - 1) * l.powi(b as i32) * (bf * l + bf + 1.0)
}

/// Root `t > 1` of `t^b (log t)^{b+1} = rhs`.
///
/// Solved for `v = log log t`, where the equation reads
/// `b e^v + (b+1) v = log rhs` with a strictly increasing left side.
pub fn growth_root(b: usize, rhs: f64) -> f64 {
    assert!(rhs > 0.0 && b >= 1, "growth_root needs rhs > 0 and b >= 1");
    let bf = b as f64;
    let target = rhs.ln();
    let h = |v: f64| bf * v.exp() + (bf + 1.0) * v;
    let (mut lo, mut hi) = (-800.0f64, 8.0f64);
    while h(hi) < target {
        hi *= 2.0;
    }
    assert!(h(lo) < target, "root not bracketed");
    let mut v = 0.5 * (lo + hi);
    for _ in 0..400 {
        let hv = h(v) - target;
        if hv == 0.0 {
            break;
        }
        if hv < 0.0 {
            lo = v;
        } else {
            hi = v;
        }
        // Newton step, falling back to bisection outside the bracket.
        let step = hv / (bf * v.exp() + bf + 1.0);
        let cand = v - step;
        let next = if cand > lo && cand < hi { cand } else { 0.5 * (lo + hi) };
        if next == v || (hi - lo) <= f64::EPSILON * v.abs().max(1.0) {
            v = next;
            break;
        }
        v = next;
    }
    let t = v.exp().exp();
    if t > 1.0 {
        t
    } else {
        1.0 + f64::EPSILON
    }
}

/// Root `r > 1` of `r^b (log r)^{b+1} = rhs`.
pub fn solve_rnb(b: usize, rhs: f64) -> Result<f64> {
    if b == 0 {
        return Err(Error::InvalidDimension("b must be at least 1".into()));
    }
    if !(rhs > 0.0 && rhs.is_finite()) {
        return Err(Error::InvalidArgument(format!("rhs must be positive and finite, got {rhs}")));
    }
    Ok(growth_root(b, rhs))
}

fn default_one() -> f64 {
    1.0
}

/// Inputs of [`rates`]. Every otherwise unspecified constant is an
/// explicit field with default 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateInputs {
    pub n: u64,
    pub beta: f64,
    pub dstar: usize,
    #[serde(default = "default_one")]
    pub holder_bound: f64,
    #[serde(default = "default_one")]
    pub c_eps: f64,
    #[serde(default = "default_one")]
    pub c_int: f64,
    #[serde(default = "default_one")]
    pub c_growth: f64,
    #[serde(default = "default_one")]
    pub c_r: f64,
    /// Detectability window `L ∈ (0, 1)`.
    pub window: f64,
    /// Detectability constant `D > 0`.
    pub detect: f64,
    pub ambient_dim: usize,
    /// Minimum of the design density (random design); rates are divided by
    /// its square root.
    #[serde(default)]
    pub design_min: Option<f64>,
}

impl RateInputs {
    pub fn new(n: u64, beta: f64, dstar: usize, ambient_dim: usize) -> Self {
        RateInputs {
            n,
            beta,
            dstar,
            holder_bound: 1.0,
            c_eps: 1.0,
            c_int: 1.0,
            c_growth: 1.0,
            c_r: 1.0,
            window: 0.5,
            detect: 1.0 / 24.0,
            ambient_dim,
            design_min: None,
        }
    }
}

/// All derived rate quantities alongside the inputs that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub inputs: RateInputs,
    pub kappa: f64,
    /// `n^{−β/(2β+d*)}`.
    pub eps_lower: f64,
    /// `C_ε^{d*} K_n² ε̲_n (log n)^κ`.
    pub eps_n: f64,
    pub max_intrinsic_dim: usize,
    /// Growth bound on the ambient dimension, with unit implicit constant
    /// (scaled by `c_growth`).
    pub dn_bound: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Root of `r^{d*} (log r)^{d*+1} = C_r n ε_n²`.
    pub r_nb: f64,
    pub subspace_recovery_applicable: bool,
    pub notes: Vec<String>,
}

/// Evaluate every rate quantity.
pub fn rates(inputs: &RateInputs) -> Result<RateSpec> {
    let i = inputs;
    if i.n < 3 {
        return Err(Error::Config(format!("n must be at least 3, got {}", i.n)));
    }
    if !(i.beta > 0.0) {
        return Err(Error::Config(format!("beta must be positive, got {}", i.beta)));
    }
    if i.dstar == 0 || i.ambient_dim < i.dstar {
        return Err(Error::Config(format!("need 1 <= d* <= d, got d*={}, d={}", i.dstar, i.ambient_dim)));
    }
    if !(i.holder_bound >= 1.0) {
        return Err(Error::Config(format!("K_n must be at least 1, got {}", i.holder_bound)));
    }
    if !(i.window > 0.0 && i.window < 1.0) {
        return Err(Error::Config(format!("window L must lie in (0, 1), got {}", i.window)));
    }
    if !(i.detect > 0.0) {
        return Err(Error::Config(format!("detectability D must be positive, got {}", i.detect)));
    }
    if let Some(g) = i.design_min {
        if !(g > 0.0) {
            return Err(Error::Config(format!("design density minimum must be positive, got {g}")));
        }
    }
    for (name, c) in [("c_eps", i.c_eps), ("c_int", i.c_int), ("c_growth", i.c_growth), ("c_r", i.c_r)] {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {c}")));
        }
    }
    let n = i.n as f64;
    let (beta, ds, d) = (i.beta, i.dstar as f64, i.ambient_dim as f64);
    let log_n = n.ln();
    let kappa = beta * (ds + 1.0) / (ds + 2.0 * beta);
    let eps_lower = n.powf(-beta / (2.0 * beta + ds));
    let eps_n = i.c_eps.powf(ds) * i.holder_bound.powi(2) * eps_lower * log_n.powf(kappa);
    let max_intrinsic_dim = crate::model::max_intrinsic_dim(i.n as usize, i.c_int);
    let dn_bound = i.c_growth
        * i.holder_bound.powi(4)
        * n.powf(ds / (2.0 * beta + ds))
        * log_n.powf(2.0 * kappa - 2.0);
    let mut delta1 = (2.0 / i.detect).sqrt() * (d / (i.window * i.window)).powf((d + 2.0) / 4.0) * eps_n;
    if let Some(g) = i.design_min {
        delta1 /= g.sqrt();
    }
    let delta3 = (2.0 * ds).sqrt() * delta1;
    let r_nb = solve_rnb(i.dstar, i.c_r * n * eps_n * eps_n)?;
    let subspace_recovery_applicable = delta1 < 1.0 && delta3 < 1.0;
    let mut notes = vec![
        "dn_bound carries an unspecified constant; reported as a scaling times c_growth".to_string(),
        "c_eps, c_int, c_growth and c_r are user constants, not values from the theory".to_string(),
    ];
    if !subspace_recovery_applicable {
        notes.push("delta rates are not below 1: the subspace recovery guarantee does not apply at this n".into());
    }
    Ok(RateSpec {
        inputs: i.clone(),
        kappa,
        eps_lower,
        eps_n,
        max_intrinsic_dim,
        dn_bound,
        delta1,
        delta2: delta1,
        delta3,
        r_nb,
        subspace_recovery_applicable,
        notes,
    })
}

/// The concentration function split into its two surrogate terms.
#[derive(Clone, Debug, Serialize)]
pub struct Concentration {
    /// Upper-bound surrogate of the RKHS approximation term.
    pub rkhs_term: f64,
    /// Monte-Carlo estimate of the small-ball exponent.
    pub smallball_term: f64,
    pub smallball_se: f64,
    pub total: f64,
    pub notes: Vec<String>,
}

/// `φ(ε) = inf ‖h‖²_H + (−log P(‖W‖_∞ < ε))` for the intrinsic process
/// `t ↦ W(a t)` on `grid` (points of the unit ball of ℝ^b, b ≤ 2).
pub fn concentration(
    f_target: &[f64],
    grid: &[Vec<f64>],
    pattern: &SparsityPattern,
    eps: f64,
    n_mc: usize,
    seed: u64,
    exec: Execution,
) -> Result<Concentration> {
    if pattern.intrinsic_dim() > 2 {
        return Err(Error::ScaleExceeded(format!(
            "concentration is limited to b <= 2, got b = {}",
            pattern.intrinsic_dim()
        )));
    }
    let kernel = SEKernel::new(pattern.scale())?;
    let rkhs = rkhs_min_norm(f_target, grid, &kernel, eps)?;
    let sb = small_ball_neglog(pattern, eps, grid, n_mc, seed, exec)?;
    Ok(Concentration {
        rkhs_term: rkhs.norm_sq,
        smallball_term: sb.neglog,
        smallball_se: sb.std_error,
        total: rkhs.norm_sq + sb.neglog,
        notes: vec![
            "rkhs_term is a kernel-ridge upper bound on the infimum, sup-norm taken on the grid".into(),
            "smallball_term is a Monte-Carlo estimate with grid sup-norm".into(),
        ],
    })
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const QUAD_NODES: usize = 64;

/// Result of [`check_gradient_condition`].
#[derive(Clone, Debug, Serialize)]
pub struct GradientReport {
    pub pass: bool,
    pub r: f64,
    pub detect: f64,
    pub window: f64,
    /// Per-point `b_k`.
    pub alignment: Vec<f64>,
    /// Per-point continuity radii `δ_k`.
    pub radii: Vec<f64>,
    pub smallest_singular_value: f64,
    pub reason: Option<String>,
}

impl GradientReport {
    fn fail(reason: String, smallest_singular_value: f64) -> Self {
        GradientReport {
            pass: false,
            r: 0.0,
            detect: 0.0,
            window: 0.0,
            alignment: vec![],
            radii: vec![],
            smallest_singular_value,
            reason: Some(reason),
        }
    }
}

const SAFETY: f64 = 0.9;
const RADIUS_STEPS: usize = 256;

/// Options shared by the two verifiers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifierConfig {
    pub n_dirs: usize,
    pub seed: u64,
    /// QMC points used for the density normaliser.
    pub n_qmc: usize,
    pub truncation: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig { n_dirs: 10_000, seed: 0, n_qmc: 1 << 14, truncation: f64::INFINITY }
    }
}

/// The intrinsic function whose directional variation the detectability
/// condition measures: `g*^Q` (regression) or `p₀` (density).
struct Profile<'a> {
    truth: &'a GroundTruth,
    kind: SettingKind,
    truncation: f64,
    log_norm: f64,
}

impl<'a> Profile<'a> {
    fn new(truth: &'a GroundTruth, kind: SettingKind, cfg: &VerifierConfig) -> Result<Self> {
        let log_norm = if kind == SettingKind::Density {
            let integ = BallIntegrator::new(truth.ambient_dim(), cfg.n_qmc, cfg.seed)?;
            let w: Vec<f64> = integ.points().iter().map(|x| truth.eval(x)).collect();
            crate::model::log_normalizer(&w, integ.volume())?.0
        } else {
            0.0
        };
        Ok(Profile { truth, kind, truncation: cfg.truncation, log_norm })
    }

    fn value(&self, t: &[f64]) -> f64 {
        let g = self.truth.core.eval(t);
        match self.kind {
            SettingKind::Density => (g - self.log_norm).exp().sqrt(),
            _ => g.clamp(-self.truncation, self.truncation),
        }
    }

    /// Gradient of `g*^Q` or of `p₀`.
    fn gradient(&self, t: &[f64]) -> Result<Vec<f64>> {
        let g = self
            .truth
            .core
            .gradient(t)
            .ok_or_else(|| Error::Config(format!("family {} has no gradient", self.truth.core.name())))?;
        Ok(match self.kind {
            SettingKind::Density => {
                let p = (self.truth.core.eval(t) - self.log_norm).exp();
                g.into_iter().map(|v| p * v).collect()
            }
            _ => {
                if self.truth.core.eval(t).abs() >= self.truncation {
                    vec![0.0; g.len()]
                } else {
                    g
                }
            }
        })
    }

    fn max_density(&self) -> f64 {
        let dstar = self.truth.intrinsic_dim;
        let pts = match dstar {
            1 => crate::qmc::ball_grid(1, 4001),
            2 => crate::qmc::ball_grid(2, 201),
            _ => crate::qmc::ball_points(dstar, 1 << 14, &mut stream_rng(17, 0)),
        };
        pts.iter()
            .map(|t| (self.truth.core.eval(t) - self.log_norm).exp())
            .fold(0.0, f64::max)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn unit_directions(dstar: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    if dstar == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let mut rng = stream_rng(seed, 0xd1);
    (0..n)
        .map(|_| crate::lingeom::random_unit_vector(dstar, &mut rng).iter().copied().collect())
        .collect()
}

fn sphere_offsets(dstar: usize, radius: f64) -> Vec<Vec<f64>> {
    match dstar {
        1 => vec![vec![radius], vec![-radius]],
        2 => (0..64)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
                vec![radius * th.cos(), radius * th.sin()]
            })
            .collect(),
        _ => {
            let mut rng = stream_rng(radius.to_bits(), 0xd2);
            (0..256)
                .map(|_| {
                    crate::lingeom::random_unit_vector(dstar, &mut rng)
                        .iter()
                        .map(|v| v * radius)
                        .collect()
                })
                .collect()
        }
    }
}

/// Numerical version of the gradient criterion for detectability: at `d*`
/// points with linearly independent gradients, compute the alignment
/// constants `b_k`, `r = ½ min_k b_k ‖∇g(x_k)‖`, the detectability constant
/// `D` and the window `L`.
///
/// For `d* = 1` the direction set {±1} is exact; otherwise the `b_k` come
/// from `n_dirs` sampled directions and `r` is shrunk by a 0.9 factor.
pub fn check_gradient_condition(
    truth: &GroundTruth,
    kind: SettingKind,
    points: &[Vec<f64>],
    margin: f64,
    cfg: &VerifierConfig,
) -> Result<GradientReport> {
    let dstar = truth.intrinsic_dim;
    if points.len() != dstar || points.iter().any(|p| p.len() != dstar) {
        return Err(Error::DimensionMismatch(format!("need {dstar} points in ℝ^{dstar}")));
    }
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidArgument(format!("margin must lie in (0, 1), got {margin}")));
    }
    if let Some(p) = points.iter().find(|p| norm(p) > 1.0 - margin) {
        return Err(Error::InvalidArgument(format!("point {p:?} lies outside the ball of radius 1 - margin")));
    }
    let profile = Profile::new(truth, kind, cfg)?;
    let grads: Vec<Vec<f64>> = points.iter().map(|p| profile.gradient(p)).collect::<Result<_>>()?;
    let gm = DMatrix::from_fn(dstar, dstar, |i, k| grads[k][i]);
    let sv = gm.singular_values();
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-8) {
        return Ok(GradientReport::fail(
            format!("gradients are linearly dependent (smallest singular value {smin:.3e})"),
            smin,
        ));
    }
    let norms: Vec<f64> = grads.iter().map(|g| norm(g)).collect();
    let units: Vec<Vec<f64>> = grads.iter().zip(&norms).map(|(g, n)| g.iter().map(|v| v / n).collect()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let mut dirs = unit_directions(dstar, cfg.n_dirs, cfg.seed);
    if dstar > 1 {
        for u in &units {
            dirs.push(u.clone());
            dirs.push(u.iter().map(|v| -v).collect());
        }
    }
    let mut alignment = vec![f64::INFINITY; dstar];
    for u in &dirs {
        let (k, best) = units
            .iter()
            .map(|g| dot(g, u).abs())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        alignment[k] = alignment[k].min(best);
    }
    let sampled = dstar > 1;
    let r_raw = 0.5
        * alignment
            .iter()
            .zip(&norms)
            .map(|(b, n)| b * n)
            .fold(f64::INFINITY, f64::min);
    let r = if sampled { SAFETY * r_raw } else { r_raw };

    // Continuity radii: largest δ on a grid with the gradient deviation bound
    // holding on spheres of every radius up to δ.
    let mut radii = Vec::with_capacity(dstar);
    for k in 0..dstar {
        let tol = 0.5 * alignment[k] * norms[k];
        let mut delta = 2.0;
        for step in 1..=RADIUS_STEPS {
            let rho = 2.0 * step as f64 / RADIUS_STEPS as f64;
            let mut violated = false;
            for off in sphere_offsets(dstar, rho) {
                let x: Vec<f64> = points[k].iter().zip(&off).map(|(a, b)| a + b).collect();
                if norm(&x) > 1.0 {
                    continue;
                }
                let g = profile.gradient(&x)?;
                let dev = norm(&g.iter().zip(&grads[k]).map(|(a, b)| a - b).collect::<Vec<_>>());
                if dev > tol {
                    violated = true;
                    break;
                }
            }
            if violated {
                delta = 2.0 * (step - 1) as f64 / RADIUS_STEPS as f64;
                break;
            }
        }
        radii.push(delta);
    }
    let window = radii.iter().copied().fold(margin, f64::min);
    let detect = match kind {
        SettingKind::Density => r * r / (96.0 * profile.max_density()),
        _ => r * r / 24.0,
    };
    let pass = r > 0.0 && window > 0.0 && detect > 0.0;
    Ok(GradientReport {
        pass,
        r,
        detect: if pass { detect } else { 0.0 },
        window: if pass { window } else { 0.0 },
        alignment,
        radii,
        smallest_singular_value: smin,
        reason: (!pass).then(|| "continuity window collapsed to zero".to_string()),
    })
}

/// A configuration violating the detectability inequality.
#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub direction: Vec<f64>,
    pub origin: Vec<f64>,
    pub length: f64,
    pub centre: Vec<f64>,
    /// The minimising constant.
    pub constant: f64,
    pub residual: f64,
    pub required: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DetectabilityReport {
    pub pass: bool,
    pub directions_checked: usize,
    pub failures: Vec<Witness>,
}

/// `min_c ∫_I (h − c)²` over the segment `t + s v`, `|s| < l/2`, with the
/// minimiser `c` (for Hellinger, `h = √p₀` and `√c` is the minimiser).
fn segment_residual(profile: &Profile, t: &[f64], v: &[f64], l: f64, rule: &(Vec<f64>, Vec<f64>)) -> (f64, f64) {
    let (nodes, weights) = rule;
    let half = 0.5 * l;
    let vals: Vec<f64> = nodes
        .iter()
        .map(|s| {
            let x: Vec<f64> = t.iter().zip(v).map(|(a, b)| a + half * s * b).collect();
            profile.value(&x)
        })
        .collect();
    // Weights sum to 2 on [-1, 1]; the segment has length l.
    let mean = vals.iter().zip(weights).map(|(h, w)| h * w).sum::<f64>() / 2.0;
    let res = half * vals.iter().zip(weights).map(|(h, w)| w * (h - mean).powi(2)).sum::<f64>();
    (res, mean)
}

fn candidate_origins(dstar: usize, window: f64) -> Vec<Vec<f64>> {
    let rad = 1.0 - window;
    match dstar {
        1 => (0..=40).map(|i| vec![rad * (-1.0 + i as f64 / 20.0)]).collect(),
        _ => {
            let mut pts = vec![vec![0.0; dstar]];
            if dstar == 2 {
                for ring in 1..=6 {
                    let rr = rad * ring as f64 / 6.0;
                    for k in 0..(8 * ring) {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / (8 * ring) as f64;
                        pts.push(vec![rr * th.cos(), rr * th.sin()]);
                    }
                }
            }
            pts
        }
    }
}

fn segment_centres(origin: &[f64], window: f64) -> Vec<Vec<f64>> {
    let rad = 0.5 * window * 0.999;
    let mut out = vec![origin.to_vec()];
    for off in sphere_offsets(origin.len(), rad)
        .into_iter()
        .chain(sphere_offsets(origin.len(), 0.5 * rad))
    {
        out.push(origin.iter().zip(&off).map(|(a, b)| a + b).collect());
    }
    out
}

/// Check the detectability inequality with constants `(window, detect)`: for
/// each probe direction `v` some origin `o ∈ B_{1−L}` must make every sampled
/// segment `]t − l v/2, t + l v/2[` with `t ∈ B_{L/2}(o)`, `l ≤ L` satisfy
/// `min_c ‖h|_I − c‖² ≥ D l³`.
pub fn check_detectability(
    truth: &GroundTruth,
    kind: SettingKind,
    window: f64,
    detect: f64,
    n_probe: usize,
    cfg: &VerifierConfig,
) -> Result<DetectabilityReport> {
    let dstar = truth.intrinsic_dim;
    if dstar > 2 {
        return Err(Error::ScaleExceeded(format!("detectability check supports d* <= 2, got {dstar}")));
    }
    if !(window > 0.0 && window < 1.0) {
        return Err(Error::InvalidArgument(format!("window must lie in (0, 1), got {window}")));
    }
    let profile = Profile::new(truth, kind, cfg)?;
    let rule = gauss_legendre(QUAD_NODES);
    let lengths: Vec<f64> = [1.0 / 16.0, 0.25, 0.5, 0.75, 1.0].iter().map(|f| f * window).collect();
    let dirs = unit_directions(dstar, n_probe.max(1), cfg.seed ^ 0x5a5a);
    let origins = candidate_origins(dstar, window);
    let mut failures = Vec::new();
    for v in &dirs {
        let mut first_failure: Option<Witness> = None;
        let mut found = false;
        for o in &origins {
            let mut witness = None;
            'segments: for t in segment_centres(o, window) {
                for &l in &lengths {
                    let (res, mean) = segment_residual(&profile, &t, v, l, &rule);
                    let required = detect * l.powi(3);
                    if res < required {
                        let constant = if kind == SettingKind::Density { mean * mean } else { mean };
                        witness = Some(Witness {
                            direction: v.clone(),
                            origin: o.clone(),
                            length: l,
                            centre: t.clone(),
                            constant,
                            residual: res,
                            required,
                        });
                        break 'segments;
                    }
                }
            }
            match witness {
                None => {
                    found = true;
                    break;
                }
                Some(w) => {
                    if first_failure.is_none() {
                        first_failure = Some(w);
                    }
                }
            }
        }
        if !found {
            failures.extend(first_failure);
        }
    }
    Ok(DetectabilityReport { pass: failures.is_empty(), directions_checked: dirs.len(), failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kappa_and_lower_rate() {
        let mut inp = RateInputs::new(1024, 1.0, 1, 3);
        inp.window = 0.5;
        let r = rates(&inp).unwrap();
        assert!((r.kappa - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.eps_lower - 1024f64.powf(-1.0 / 3.0)).abs() < 1e-15);
        assert!((r.delta3 / r.delta1 - 2f64.sqrt()).abs() < 1e-12);
        assert!(rates(&RateInputs::new(2, 1.0, 1, 3)).is_err());
    }

    #[test]
    fn rnb_residual() {
        for b in 1..=4 {
            for rhs in [1e-9, 0.3, 10.0, 1e6, 1e40] {
                let r = solve_rnb(b, rhs).unwrap();
                assert!(r > 1.0);
                let res = (growth(b, r) - rhs).abs();
                assert!(res < 1e-10 * rhs, "b={b} rhs={rhs} residual {res}");
            }
        }
        assert!(solve_rnb(1, 0.0).is_err());
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let (x, w) = gauss_legendre(64);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let i4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((i4 - 0.4).abs() < 1e-13);
        let (x3, w3) = gauss_legendre(3);
        assert!((x3[2] - 0.6f64.sqrt()).abs() < 1e-14);
        assert!((w3[1] - 8.0 / 9.0).abs() < 1e-14);
    }
}
