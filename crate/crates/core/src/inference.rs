//! Metropolis-within-Gibbs posterior sampling over `(b, q, a, latent)` and
//! posterior summaries.
//!
//! The latent function is represented by whitened coordinates `z` at a fixed
//! set of anchor points: the anchor values are `L z` with `L` the Cholesky
//! factor of the anchor Gram matrix under the current pattern, and values
//! elsewhere are the conditional mean `K_xA L⁻ᵀ z`. Moves on `(a, b, q)` keep
//! `z` fixed, so its Gaussian prior term cancels in their acceptance ratios.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{gram, LatentField, SEKernel, SparsityPattern, DEFAULT_JITTER};
use crate::io::{fmt_f64, ChainRecord, MoveCounts};
use crate::lingeom::{haar_sample, subspace_distance, Orthogonal, SubspaceFrame, SubspaceLoss};
use crate::metrics::{empirical_l2, hellinger_values, l2_design_values, BallIntegrator, MetricRow};
use crate::model::{log_normalizer, Dataset, GroundTruth, HierarchicalPrior, Setting, SettingKind};
use crate::par::{self, stream_rng, Execution};
use crate::qmc::ball_points;
use crate::stats;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// How the latent function enters the sampler.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentMode {
    /// Latent coordinates are part of the chain and updated by elliptical
    /// slice sampling.
    #[default]
    Explicit,
    /// Gaussian likelihoods only: hyperparameter moves use the marginal
    /// likelihood with the latent integrated out, and the latent is drawn
    /// exactly from its conditional at every retained draw.
    Collapsed,
}

/// Which moves a sweep performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoveSet {
    pub latent: bool,
    pub scale: bool,
    pub orientation: bool,
    pub dimension: bool,
}

impl Default for MoveSet {
    fn default() -> Self {
        MoveSet { latent: true, scale: true, orientation: true, dimension: true }
    }
}

impl MoveSet {
    pub fn latent_only() -> Self {
        MoveSet { latent: true, scale: false, orientation: false, dimension: false }
    }
}

/// Where the latent anchors sit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnchorSpec {
    /// The design points (regression).
    Design,
    /// A randomised-Halton point set of the unit ball.
    Qmc { count: usize },
}

/// Optional fixed starting point of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitState {
    pub b: usize,
    pub a: f64,
    /// Row-major orientation; Haar-drawn when absent.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    #[serde(default)]
    pub whitened: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Standard deviation of the log random walk on `a`.
    pub step_a: f64,
    /// Rotation step of the geodesic orientation move.
    pub step_q: f64,
    /// Robbins-Monro adaptation of both steps during burn-in.
    pub adapt: bool,
    pub target_accept: f64,
    /// Probability of attempting a dimension move in a sweep.
    pub dim_move_prob: f64,
    pub seed: u64,
    pub latent_mode: LatentMode,
    pub moves: MoveSet,
    /// Defaults to the design points for regression and 256 QMC points for
    /// density estimation.
    pub anchors: Option<AnchorSpec>,
    /// QMC points of the density normaliser.
    pub n_norm: usize,
    /// With `false` the likelihood is switched off and the chain targets the
    /// prior.
    pub likelihood: bool,
    pub init: Option<InitState>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_iter: 5000,
            burn_in: 1000,
            thin: 1,
            step_a: 0.3,
            step_q: 0.1,
            adapt: true,
            target_accept: 0.25,
            dim_move_prob: 1.0,
            seed: 0,
            latent_mode: LatentMode::Explicit,
            moves: MoveSet::default(),
            anchors: None,
            n_norm: 1024,
            likelihood: true,
            init: None,
        }
    }
}

pub const DEFAULT_DENSITY_ANCHORS: usize = 256;
const RENORMALISE_EVERY: usize = 100;
const MAX_REINIT: usize = 10;

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(Error::Config(format!(
                "n_iter ({}) must exceed burn_in ({})",
                self.n_iter, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.step_a > 0.0 && self.step_q > 0.0) {
            return Err(Error::Config("proposal scales must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.dim_move_prob) {
            return Err(Error::Config("dim_move_prob must lie in [0, 1]".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config("target_accept must lie in (0, 1)".into()));
        }
        if let Some(AnchorSpec::Qmc { count: 0 }) = self.anchors {
            return Err(Error::Config("anchor count must be positive".into()));
        }
        Ok(())
    }

    pub fn retained(&self) -> usize {
        (self.n_iter - self.burn_in).div_ceil(self.thin)
    }
}

/// One state of the hierarchical posterior.
#[derive(Clone, Debug)]
pub struct HyperState {
    pub pattern: SparsityPattern,
    pub latent: LatentField,
    pub log_post: f64,
}

/// Output of one chain.
#[derive(Clone, Debug)]
pub struct Chain {
    pub index: usize,
    pub anchors: Arc<Vec<Vec<f64>>>,
    pub records: Vec<ChainRecord>,
    pub counts: MoveCounts,
    pub step_a: f64,
    pub step_q: f64,
}

/// Acceptance rate per move type (`NaN` for moves never proposed).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AcceptanceRates {
    pub latent: f64,
    pub scale: f64,
    pub orientation: f64,
    pub dimension: f64,
}

fn rate((acc, prop): (u64, u64)) -> f64 {
    if prop == 0 {
        f64::NAN
    } else {
        acc as f64 / prop as f64
    }
}

fn add_counts(a: MoveCounts, b: MoveCounts) -> MoveCounts {
    let s = |x: (u64, u64), y: (u64, u64)| (x.0 + y.0, x.1 + y.1);
    MoveCounts {
        latent: s(a.latent, b.latent),
        scale: s(a.scale, b.scale),
        orientation: s(a.orientation, b.orientation),
        dimension: s(a.dimension, b.dimension),
    }
}

impl AcceptanceRates {
    pub fn from_counts(c: &MoveCounts) -> Self {
        AcceptanceRates {
            latent: rate(c.latent),
            scale: rate(c.scale),
            orientation: rate(c.orientation),
            dimension: rate(c.dimension),
        }
    }
}

impl Chain {
    pub fn acceptance(&self) -> AcceptanceRates {
        AcceptanceRates::from_counts(&self.counts)
    }

    pub fn record_state(&self, r: &ChainRecord) -> Result<HyperState> {
        let d = (r.q.len() as f64).sqrt().round() as usize;
        let q = Orthogonal::from_row_major(d, &r.q)?;
        let pattern = SparsityPattern::new(q, r.b, r.a)?;
        let latent = LatentField {
            pattern: pattern.clone(),
            anchors: self.anchors.clone(),
            values: DVector::from_column_slice(&r.latent),
            whitened: DVector::from_column_slice(&r.whitened),
        };
        Ok(HyperState { pattern, latent, log_post: r.log_post })
    }

    pub fn states(&self) -> Result<Vec<HyperState>> {
        self.records.iter().map(|r| self.record_state(r)).collect()
    }
}

/// Kernel matrix `exp(−‖s − t‖²)` between rows of two coordinate matrices.
fn cross_kernel(p: &DMatrix<f64>, anchors: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, m, b) = (p.nrows(), anchors.nrows(), p.ncols());
    DMatrix::from_fn(n, m, |i, j| {
        let mut s = 0.0;
        for k in 0..b {
            let t = p[(i, k)] - anchors[(j, k)];
            s += t * t;
        }
        (-s).exp()
    })
}

fn rows_to_matrix(pts: &[Vec<f64>], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(pts.len(), d, |i, j| pts[i][j])
}

/// Projected coordinates `a (q x)_{1..b}` of each row of `x`.
fn project_rows(x: &DMatrix<f64>, pattern: &SparsityPattern) -> DMatrix<f64> {
    let qb = pattern.orientation().matrix().rows(0, pattern.intrinsic_dim());
    (x * qb.transpose()) * pattern.scale()
}

/// Marginal-likelihood pieces of the collapsed sampler.
#[derive(Clone, Debug)]
struct Marginal {
    chol_m: Cholesky<f64, Dyn>,
    u: DVector<f64>,
    loglik: f64,
}

/// Everything that depends on the pattern only.
#[derive(Clone, Debug)]
struct Features {
    pattern: SparsityPattern,
    l: DMatrix<f64>,
    /// Kernel block data × anchors (absent when the anchors are the data).
    k_data: Option<DMatrix<f64>>,
    /// Kernel block normaliser points × anchors (density).
    k_norm: Option<DMatrix<f64>>,
    marginal: Option<Marginal>,
}

struct Problem<'a> {
    setting: &'a Setting,
    prior: &'a HierarchicalPrior,
    cfg: &'a ChainConfig,
    d: usize,
    anchors: Arc<Vec<Vec<f64>>>,
    anchor_mat: DMatrix<f64>,
    anchored: bool,
    x: DMatrix<f64>,
    n: usize,
    y: Option<DVector<f64>>,
    yty: f64,
    norm_mat: Option<DMatrix<f64>>,
    log_vol: f64,
    use_lik: bool,
}

#[derive(Clone, Debug)]
struct State {
    feat: Features,
    z: DVector<f64>,
    f_data: DVector<f64>,
    f_norm: Option<DVector<f64>>,
    /// Explicit log-likelihood, or the marginal one in collapsed mode.
    loglik: f64,
}

fn log_std_normal(z: &DVector<f64>) -> f64 {
    -0.5 * (z.len() as f64 * LN_2PI + z.norm_squared())
}

impl<'a> Problem<'a> {
    fn new(data: &Dataset, setting: &'a Setting, prior: &'a HierarchicalPrior, cfg: &'a ChainConfig) -> Result<Self> {
        cfg.validate()?;
        if data.kind != setting.kind {
            return Err(Error::Config(format!("data of kind {} for setting {}", data.kind, setting.kind)));
        }
        let d = prior.ambient_dim;
        if let Some(dd) = data.dim() {
            if dd != d {
                return Err(Error::DimensionMismatch(format!("data have dimension {dd}, prior expects {d}")));
            }
        }
        if let Some(x) = data.x.iter().find(|x| x.iter().map(|v| v * v).sum::<f64>() > (1.0 + 1e-9f64).powi(2)) {
            return Err(Error::InvalidArgument(format!("covariate {x:?} lies outside the unit ball")));
        }
        if cfg.latent_mode == LatentMode::Collapsed && !setting.kind.is_regression() {
            return Err(Error::Config("the collapsed sampler needs a Gaussian regression likelihood".into()));
        }
        let spec = cfg.anchors.clone().unwrap_or(if setting.kind.is_regression() {
            AnchorSpec::Design
        } else {
            AnchorSpec::Qmc { count: DEFAULT_DENSITY_ANCHORS }
        });
        let (anchors, anchored) = match spec {
            AnchorSpec::Design => {
                if !setting.kind.is_regression() {
                    return Err(Error::Config("design anchors need a regression setting".into()));
                }
                (data.x.clone(), true)
            }
            AnchorSpec::Qmc { count } => (ball_points(d, count, &mut stream_rng(cfg.seed, 0xa11c)), false),
        };
        let n = data.len();
        let use_lik = cfg.likelihood && n > 0;
        let y = data.y.as_ref().map(|y| DVector::from_column_slice(y));
        let yty = y.as_ref().map(|y| y.norm_squared()).unwrap_or(0.0);
        let (norm_mat, log_vol) = if setting.kind == SettingKind::Density && use_lik {
            if cfg.n_norm < crate::model::MIN_QMC_POINTS {
                return Err(Error::Config(format!(
                    "n_norm must be at least {}",
                    crate::model::MIN_QMC_POINTS
                )));
            }
            let pts = ball_points(d, cfg.n_norm, &mut stream_rng(cfg.seed, 0x2011));
            (Some(rows_to_matrix(&pts, d)), crate::metrics::ball_volume(d).ln())
        } else {
            (None, 0.0)
        };
        Ok(Problem {
            setting,
            prior,
            cfg,
            d,
            anchor_mat: rows_to_matrix(&anchors, d),
            anchors: Arc::new(anchors),
            anchored,
            x: rows_to_matrix(&data.x, d),
            n,
            y,
            yty,
            norm_mat,
            log_vol,
            use_lik,
        })
    }

    fn m(&self) -> usize {
        self.anchors.len()
    }

    fn features(&self, pattern: &SparsityPattern) -> Result<Features> {
        let m = self.m();
        if m == 0 {
            return Ok(Features {
                pattern: pattern.clone(),
                l: DMatrix::zeros(0, 0),
                k_data: None,
                k_norm: None,
                marginal: None,
            });
        }
        let l = gram(&pattern.project_all(&self.anchors), &SEKernel::unit(), DEFAULT_JITTER)?.lower();
        let mut feat = Features { pattern: pattern.clone(), l, k_data: None, k_norm: None, marginal: None };
        if !self.use_lik {
            return Ok(feat);
        }
        let pa = project_rows(&self.anchor_mat, pattern);
        if !self.anchored {
            feat.k_data = Some(cross_kernel(&project_rows(&self.x, pattern), &pa));
        }
        if let Some(nm) = &self.norm_mat {
            feat.k_norm = Some(cross_kernel(&project_rows(nm, pattern), &pa));
        }
        if self.cfg.latent_mode == LatentMode::Collapsed {
            feat.marginal = Some(self.marginal(&feat)?);
        }
        Ok(feat)
    }

    /// `log p(y | a, b, q)` with the latent integrated out (Woodbury form).
    fn marginal(&self, feat: &Features) -> Result<Marginal> {
        let y = self.y.as_ref().expect("regression data");
        let s2 = self.setting.noise_sd * self.setting.noise_sd;
        let (ptp, pty) = match &feat.k_data {
            None => (feat.l.tr_mul(&feat.l), feat.l.tr_mul(y)),
            Some(k) => {
                let g = k.tr_mul(k);
                let solve = |m: &DMatrix<f64>| {
                    feat.l
                        .solve_lower_triangular(m)
                        .ok_or_else(|| Error::NumericalDegeneracy("triangular solve failed".into()))
                };
                let x = solve(&g)?;
                let ptp = solve(&x.transpose())?;
                let kty = k.tr_mul(y);
                let pty = feat
                    .l
                    .solve_lower_triangular(&kty)
                    .ok_or_else(|| Error::NumericalDegeneracy("triangular solve failed".into()))?;
                (ptp, pty)
            }
        };
        let m = self.m();
        let mut mm = ptp / s2;
        for i in 0..m {
            mm[(i, i)] += 1.0;
        }
        // Symmetrise against round-off in the triangular solves.
        let mm = (&mm + mm.transpose()) * 0.5;
        let chol_m = Cholesky::new(mm)
            .ok_or_else(|| Error::NumericalDegeneracy("marginal precision not positive definite".into()))?;
        let u = pty / s2;
        let logdet: f64 = 2.0 * chol_m.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let minv_u = chol_m.solve(&u);
        let n = self.n as f64;
        let loglik = -0.5 * (n * LN_2PI + n * s2.ln() + logdet + self.yty / s2 - u.dot(&minv_u));
        Ok(Marginal { chol_m, u, loglik })
    }

    /// Function values at the data and normaliser points for coordinates `z`.
    fn evaluate(&self, feat: &Features, z: &DVector<f64>) -> Result<(DVector<f64>, Option<DVector<f64>>)> {
        if !self.use_lik || self.m() == 0 {
            return Ok((DVector::zeros(self.n), None));
        }
        if self.anchored {
            return Ok((&feat.l * z, None));
        }
        let alpha = feat
            .l
            .tr_solve_lower_triangular(z)
            .ok_or_else(|| Error::NumericalDegeneracy("triangular solve failed".into()))?;
        let f_data = feat.k_data.as_ref().expect("features") * &alpha;
        let f_norm = feat.k_norm.as_ref().map(|k| k * &alpha);
        Ok((f_data, f_norm))
    }

    fn explicit_loglik(&self, f_data: &DVector<f64>, f_norm: Option<&DVector<f64>>) -> Result<f64> {
        if !self.use_lik {
            return Ok(0.0);
        }
        match self.setting.kind {
            SettingKind::Density => {
                let fnorm = f_norm.expect("normaliser values");
                let (log_z, _) = log_normalizer(fnorm.as_slice(), self.log_vol.exp())?;
                Ok(f_data.sum() - self.n as f64 * log_z)
            }
            _ => {
                let y = self.y.as_ref().expect("regression data");
                let s = self.setting.noise_sd;
                let rss = (y - f_data).norm_squared();
                Ok(-0.5 * self.n as f64 * LN_2PI - self.n as f64 * s.ln() - rss / (2.0 * s * s))
            }
        }
    }

    fn collapsed(&self) -> bool {
        self.cfg.latent_mode == LatentMode::Collapsed
    }

    fn state(&self, feat: Features, z: DVector<f64>) -> Result<State> {
        if self.collapsed() {
            let loglik = feat.marginal.as_ref().map(|m| m.loglik).unwrap_or(0.0);
            return Ok(State { feat, z, f_data: DVector::zeros(0), f_norm: None, loglik });
        }
        let (f_data, f_norm) = self.evaluate(&feat, &z)?;
        let loglik = self.explicit_loglik(&f_data, f_norm.as_ref())?;
        Ok(State { feat, z, f_data, f_norm, loglik })
    }

    fn log_hyper_prior(&self, b: usize, a: f64) -> f64 {
        self.prior.log_dim_prior(b) + self.prior.log_rescale_density(b, a)
    }

    /// Unnormalised log-posterior of the full state (Haar density omitted).
    fn log_post(&self, s: &State) -> Result<f64> {
        let p = &s.feat.pattern;
        let base = self.log_hyper_prior(p.intrinsic_dim(), p.scale()) + log_std_normal(&s.z);
        if self.collapsed() {
            let (f_data, f_norm) = self.evaluate(&s.feat, &s.z)?;
            Ok(base + self.explicit_loglik(&f_data, f_norm.as_ref())?)
        } else {
            Ok(base + s.loglik)
        }
    }

    fn initial(&self, rng: &mut ChaCha8Rng) -> Result<State> {
        let mut last_err = None;
        for _ in 0..MAX_REINIT {
            let attempt = (|| -> Result<State> {
                let (b, a, q) = match &self.cfg.init {
                    Some(init) => {
                        let q = match &init.q {
                            Some(rows) => Orthogonal::from_row_major(self.d, rows)?,
                            None => haar_sample(self.d, rng)?,
                        };
                        (init.b, init.a, q)
                    }
                    None => self.prior.sample(rng)?,
                };
                if b > self.prior.max_dim() {
                    return Err(Error::Config(format!("initial b = {b} exceeds the prior support")));
                }
                let pattern = SparsityPattern::new(q, b, a)?;
                let z = match self.cfg.init.as_ref().and_then(|i| i.whitened.clone()) {
                    Some(w) if w.len() == self.m() => DVector::from_vec(w),
                    Some(w) => {
                        return Err(Error::DimensionMismatch(format!(
                            "{} initial whitened values for {} anchors",
                            w.len(),
                            self.m()
                        )))
                    }
                    None => std_normal_vec(self.m(), rng),
                };
                let feat = self.features(&pattern)?;
                let s = self.state(feat, z)?;
                let lp = self.log_hyper_prior(b, a) + s.loglik;
                if !lp.is_finite() {
                    return Err(Error::NonFinite(format!("initial log-posterior {lp}")));
                }
                Ok(s)
            })();
            match attempt {
                Ok(s) => return Ok(s),
                Err(e) if e.is_config() => return Err(e),
                Err(e) => {
                    log::debug!("re-initialising chain: {e}");
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.unwrap_or_else(|| Error::NonFinite("initialisation failed".into())))
    }
}

fn std_normal_vec(m: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Probability that the reflecting ±1 walk on {1..dmax} proposes `to` from `from`.
fn dim_proposal_prob(from: usize, to: usize, dmax: usize) -> f64 {
    if dmax < 2 || from.abs_diff(to) != 1 {
        return 0.0;
    }
    if from == 1 || from == dmax {
        1.0
    } else {
        0.5
    }
}

fn propose_dim(b: usize, dmax: usize, rng: &mut ChaCha8Rng) -> usize {
    if b == 1 {
        2
    } else if b == dmax {
        dmax - 1
    } else if rng.random::<bool>() {
        b + 1
    } else {
        b - 1
    }
}

/// Random skew-symmetric direction `(G − Gᵀ)/√2`.
fn skew<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g - g.transpose()) / std::f64::consts::SQRT_2
}

struct Adapter {
    log_step: f64,
    count: usize,
}

impl Adapter {
    fn new(step: f64) -> Self {
        Adapter { log_step: step.ln(), count: 0 }
    }

    fn step(&self) -> f64 {
        self.log_step.exp()
    }

    fn update(&mut self, accepted: bool, target: f64) {
        self.count += 1;
        let gain = 1.0 / (self.count as f64).powf(0.6);
        let acc = if accepted { 1.0 } else { 0.0 };
        self.log_step = (self.log_step + gain * (acc - target)).clamp(-12.0, 3.0);
    }
}

struct Runner<'p, 'a> {
    pb: &'p Problem<'a>,
    rng: ChaCha8Rng,
    state: State,
    counts: MoveCounts,
    step_a: Adapter,
    step_q: Adapter,
    q_moves: usize,
}

impl Runner<'_, '_> {
    fn accept(&mut self, log_ratio: f64) -> bool {
        if log_ratio >= 0.0 {
            return true;
        }
        let u: f64 = self.rng.random();
        u.ln() < log_ratio
    }

    /// Elliptical slice update of `z`.
    fn latent_move(&mut self) -> Result<()> {
        let pb = self.pb;
        let m = pb.m();
        self.counts.latent.1 += 1;
        if m == 0 {
            self.counts.latent.0 += 1;
            return Ok(());
        }
        let nu = std_normal_vec(m, &mut self.rng);
        if !pb.use_lik {
            // Flat likelihood: the first proposal is always accepted.
            let theta = self.rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            self.state.z = &self.state.z * theta.cos() + &nu * theta.sin();
            self.counts.latent.0 += 1;
            return Ok(());
        }
        let (nu_data, nu_norm) = pb.evaluate(&self.state.feat, &nu)?;
        let threshold = self.state.loglik + self.rng.random::<f64>().ln();
        let mut theta = self.rng.random::<f64>() * 2.0 * std::f64::consts::PI;
        let (mut lo, mut hi) = (theta - 2.0 * std::f64::consts::PI, theta);
        loop {
            let (c, s) = (theta.cos(), theta.sin());
            let f_data = &self.state.f_data * c + &nu_data * s;
            let f_norm = match (&self.state.f_norm, &nu_norm) {
                (Some(f), Some(v)) => Some(f * c + v * s),
                _ => None,
            };
            let ll = pb.explicit_loglik(&f_data, f_norm.as_ref())?;
            if ll > threshold {
                self.state.z = &self.state.z * c + &nu * s;
                self.state.f_data = f_data;
                self.state.f_norm = f_norm;
                self.state.loglik = ll;
                self.counts.latent.0 += 1;
                return Ok(());
            }
            if theta < 0.0 {
                lo = theta;
            } else {
                hi = theta;
            }
            if hi - lo < 1e-12 {
                // Bracket collapsed onto the current point.
                self.counts.latent.0 += 1;
                return Ok(());
            }
            theta = lo + self.rng.random::<f64>() * (hi - lo);
        }
    }

    fn try_pattern(&mut self, pattern: SparsityPattern, z: DVector<f64>) -> Result<Option<State>> {
        let pb = self.pb;
        match pb.features(&pattern).and_then(|f| pb.state(f, z)) {
            Ok(s) if s.loglik.is_finite() => Ok(Some(s)),
            Ok(_) | Err(Error::NumericalDegeneracy(_)) | Err(Error::NonFinite(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn scale_move(&mut self, adapt: bool) -> Result<()> {
        let p = self.state.feat.pattern.clone();
        let (b, a) = (p.intrinsic_dim(), p.scale());
        let a_new = a * (self.step_a.step() * self.rng.sample::<f64, _>(StandardNormal)).exp();
        self.counts.scale.1 += 1;
        let mut accepted = false;
        if a_new > 1.0 && a_new.is_finite() {
            if let Some(s) = self.try_pattern(p.with_scale(a_new), self.state.z.clone())? {
                let log_ratio = self.pb.log_hyper_prior(b, a_new) - self.pb.log_hyper_prior(b, a)
                    + s.loglik
                    - self.state.loglik
                    + (a_new / a).ln();
                if self.accept(log_ratio) {
                    self.state = s;
                    accepted = true;
                }
            }
        }
        if accepted {
            self.counts.scale.0 += 1;
        }
        if adapt {
            self.step_a.update(accepted, self.pb.cfg.target_accept);
        }
        Ok(())
    }

    fn orientation_move(&mut self, adapt: bool) -> Result<()> {
        let d = self.pb.d;
        self.counts.orientation.1 += 1;
        let mut accepted = false;
        if d > 1 {
            let p = self.state.feat.pattern.clone();
            let omega = skew(d, &mut self.rng) * self.step_q.step();
            let rot = omega.exp();
            let mut qm = p.orientation().matrix() * rot;
            if (self.q_moves + 1).is_multiple_of(RENORMALISE_EVERY) {
                qm = Orthogonal::from_qr(qm)?.matrix().clone();
            }
            let q_new = Orthogonal::from_matrix_unchecked(qm);
            debug_assert!(q_new.defect() < 1e-8, "orientation drift {}", q_new.defect());
            if let Some(s) = self.try_pattern(p.with_orientation(q_new), self.state.z.clone())? {
                if self.accept(s.loglik - self.state.loglik) {
                    self.state = s;
                    accepted = true;
                    self.q_moves += 1;
                }
            }
        } else {
            accepted = true;
        }
        if accepted {
            self.counts.orientation.0 += 1;
        }
        if adapt && d > 1 {
            self.step_q.update(accepted, self.pb.cfg.target_accept);
        }
        Ok(())
    }

    /// Redraw the rows `b+1..d` of `q` uniformly: `q ← diag(I_b, H) q` with
    /// `H` Haar on O(d − b). These rows do not enter the likelihood and Haar
    /// measure is left-invariant, so this is an exact Gibbs step.
    fn complement_move(&mut self) -> Result<()> {
        let d = self.pb.d;
        let p = &self.state.feat.pattern;
        let b = p.intrinsic_dim();
        if d - b < 2 {
            return Ok(());
        }
        let h = haar_sample(d - b, &mut self.rng)?;
        let mut qm = p.orientation().matrix().clone();
        let tail = h.matrix() * qm.rows(b, d - b);
        qm.rows_mut(b, d - b).copy_from(&tail);
        self.state.feat.pattern = p.with_orientation(Orthogonal::from_matrix_unchecked(qm));
        Ok(())
    }

    fn dimension_move(&mut self) -> Result<()> {
        let dmax = self.pb.prior.max_dim();
        if dmax < 2 {
            return Ok(());
        }
        let p = self.state.feat.pattern.clone();
        let (b, a) = (p.intrinsic_dim(), p.scale());
        let b_new = propose_dim(b, dmax, &mut self.rng);
        self.counts.dimension.1 += 1;
        let z_new = std_normal_vec(self.pb.m(), &mut self.rng);
        if let Some(s) = self.try_pattern(p.with_intrinsic_dim(b_new), z_new)? {
            let log_ratio = self.pb.log_hyper_prior(b_new, a) - self.pb.log_hyper_prior(b, a)
                + s.loglik
                - self.state.loglik
                + dim_proposal_prob(b_new, b, dmax).ln()
                - dim_proposal_prob(b, b_new, dmax).ln();
            if self.accept(log_ratio) {
                self.state = s;
                self.counts.dimension.0 += 1;
            }
        }
        Ok(())
    }

    /// Exact draw of `z` from its Gaussian conditional (collapsed mode).
    fn gibbs_latent(&mut self) {
        let m = self.pb.m();
        let xi = std_normal_vec(m, &mut self.rng);
        self.state.z = match &self.state.feat.marginal {
            Some(mg) => {
                let mean = mg.chol_m.solve(&mg.u);
                let noise = mg
                    .chol_m
                    .l_dirty()
                    .lower_triangle()
                    .tr_solve_lower_triangular(&xi)
                    .expect("nonsingular factor");
                mean + noise
            }
            None => xi,
        };
    }

    fn record(&mut self, chain: usize, iter: usize) -> Result<ChainRecord> {
        if self.pb.collapsed() {
            self.gibbs_latent();
        }
        let p = &self.state.feat.pattern;
        let latent = if self.pb.m() > 0 { (&self.state.feat.l * &self.state.z).as_slice().to_vec() } else { vec![] };
        Ok(ChainRecord {
            chain,
            iter,
            b: p.intrinsic_dim(),
            a: p.scale(),
            q: p.orientation().to_row_major(),
            latent,
            whitened: self.state.z.as_slice().to_vec(),
            log_post: self.pb.log_post(&self.state)?,
            acceptances: self.counts,
        })
    }
}

fn run_one(pb: &Problem, chain: usize) -> Result<Chain> {
    let cfg = pb.cfg;
    let mut rng = stream_rng(cfg.seed, 1 + chain as u64);
    let state = pb.initial(&mut rng)?;
    let mut r = Runner {
        pb,
        rng,
        state,
        counts: MoveCounts::default(),
        step_a: Adapter::new(cfg.step_a),
        step_q: Adapter::new(cfg.step_q),
        q_moves: 0,
    };
    let mut records = Vec::with_capacity(cfg.retained());
    for it in 0..cfg.n_iter {
        let adapt = cfg.adapt && it < cfg.burn_in;
        if cfg.moves.latent && !pb.collapsed() {
            r.latent_move()?;
        }
        if cfg.moves.scale {
            r.scale_move(adapt)?;
        }
        if cfg.moves.orientation {
            r.orientation_move(adapt)?;
        }
        if cfg.moves.orientation {
            r.complement_move()?;
        }
        if cfg.moves.dimension && (cfg.dim_move_prob >= 1.0 || r.rng.random::<f64>() < cfg.dim_move_prob) {
            r.dimension_move()?;
        }
        if cfg!(debug_assertions) && it % 1000 == 999 && !pb.collapsed() {
            let fresh = pb.state(pb.features(&r.state.feat.pattern)?, r.state.z.clone())?;
            debug_assert!(
                (fresh.loglik - r.state.loglik).abs() <= 1e-6 * (1.0 + fresh.loglik.abs()),
                "cached log-likelihood drifted: {} vs {}",
                r.state.loglik,
                fresh.loglik
            );
        }
        if it >= cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
            let rec = r.record(chain, it).map_err(|e| Error::AtDraw { index: it, source: Box::new(e) })?;
            records.push(rec);
        }
    }
    Ok(Chain {
        index: chain,
        anchors: pb.anchors.clone(),
        records,
        counts: r.counts,
        step_a: r.step_a.step(),
        step_q: r.step_q.step(),
    })
}

/// Run a single chain (index 0).
pub fn mcmc_run(data: &Dataset, setting: &Setting, prior: &HierarchicalPrior, cfg: &ChainConfig) -> Result<Chain> {
    let pb = Problem::new(data, setting, prior, cfg)?;
    run_one(&pb, 0)
}

/// Run `n_chains` independent chains on streams `1..=n_chains` of the seed.
pub fn run_chains(
    data: &Dataset,
    setting: &Setting,
    prior: &HierarchicalPrior,
    cfg: &ChainConfig,
    n_chains: usize,
    exec: Execution,
) -> Result<Vec<Chain>> {
    if n_chains == 0 {
        return Err(Error::Config("need at least one chain".into()));
    }
    let pb = Problem::new(data, setting, prior, cfg)?;
    par::map_indexed(exec, n_chains, |c| run_one(&pb, c)).into_iter().collect()
}

pub fn write_chains_jsonl<W: Write>(chains: &[Chain], w: W) -> Result<()> {
    let records: Vec<ChainRecord> = chains.iter().flat_map(|c| c.records.iter().cloned()).collect();
    crate::io::write_chain_jsonl(&records, w)
}

/// Posterior mean of the field at `query` given the anchor values of a draw.
pub fn field_at(pattern: &SparsityPattern, anchors: &[Vec<f64>], whitened: &[f64], query: &[Vec<f64>]) -> Result<Vec<f64>> {
    if anchors.is_empty() {
        return Ok(vec![0.0; query.len()]);
    }
    let fm = crate::gp::feature_map(pattern, anchors, query, false)?;
    Ok((fm.phi * DVector::from_column_slice(whitened)).as_slice().to_vec())
}

/// Summary of one retained draw.
#[derive(Clone, Debug, Serialize)]
pub struct DrawSummary {
    pub chain: usize,
    pub iter: usize,
    pub b: usize,
    pub a: f64,
    pub function_error: f64,
    pub function_se: Option<f64>,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PosteriorSummary {
    pub setting: SettingKind,
    pub function_metric: String,
    pub intrinsic_dim: usize,
    pub draws: Vec<DrawSummary>,
    pub median_function_error: f64,
    pub mean_function_error: f64,
    pub sd_function_error: f64,
    /// Posterior mass of `{Γ < d*}`.
    pub prob_dim_below: f64,
    /// Counts of `Γ = 1, 2, …, d`.
    pub dim_histogram: Vec<usize>,
    /// Medians of the subspace losses over draws with `Γ ≥ d*`.
    pub median_d1: Option<f64>,
    pub median_d2: Option<f64>,
    pub median_d3: Option<f64>,
    pub rhat_function: Option<f64>,
    pub rhat_a: Option<f64>,
    pub acceptance: AcceptanceRates,
}

impl PosteriorSummary {
    /// One row per draw for the function metric and each subspace loss.
    pub fn metric_rows(&self) -> Vec<MetricRow> {
        let mut rows = Vec::with_capacity(4 * self.draws.len());
        for (i, d) in self.draws.iter().enumerate() {
            rows.push(MetricRow {
                draw_index: i,
                metric_name: self.function_metric.clone(),
                value: d.function_error,
                mc_se: d.function_se,
            });
            for (name, v) in [("d1", d.d1), ("d2", d.d2), ("d3", d.d3)] {
                rows.push(MetricRow { draw_index: i, metric_name: name.into(), value: v, mc_se: None });
            }
        }
        rows
    }

    pub fn write_subspace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "draw_index,chain,iter,b,a,d1,d2,d3")?;
        for (i, d) in self.draws.iter().enumerate() {
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{}",
                d.chain,
                d.iter,
                d.b,
                fmt_f64(d.a),
                fmt_f64(d.d1),
                fmt_f64(d.d2),
                fmt_f64(d.d3)
            )?;
        }
        Ok(())
    }
}

fn median_opt(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| stats::median(xs))
}

fn finite_opt(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Function-space error and subspace losses of every retained draw.
///
/// The function metric is `‖·‖_n` on the design (fixed design), the
/// truncated `L²(G)` norm with uniform `G` (random design) or the Hellinger
/// distance (density); the last two integrate over `integrator`.
pub fn posterior_functionals(
    chains: &[Chain],
    data: &Dataset,
    truth: &GroundTruth,
    setting: &Setting,
    integrator: &BallIntegrator,
) -> Result<PosteriorSummary> {
    let n_draws: usize = chains.iter().map(|c| c.records.len()).sum();
    if n_draws == 0 {
        return Err(Error::EmptyData);
    }
    let d = truth.ambient_dim();
    let central = truth.central_subspace();
    let query: &[Vec<f64>] = match setting.kind {
        SettingKind::FixedDesign => &data.x,
        _ => integrator.points(),
    };
    let truth_vals = truth.eval_all(query);
    let truth_density: Option<Vec<f64>> = if setting.kind == SettingKind::Density {
        let (lz, _) = log_normalizer(&truth_vals, integrator.volume())?;
        Some(truth_vals.iter().map(|w| (w - lz).exp()).collect())
    } else {
        None
    };
    let design = vec![1.0 / integrator.volume(); integrator.len()];

    let eval_draw = |chain: &Chain, r: &ChainRecord| -> Result<DrawSummary> {
        let st = chain.record_state(r)?;
        let f = field_at(&st.pattern, &chain.anchors, &r.whitened, query)?;
        let (err, se) = match setting.kind {
            SettingKind::FixedDesign => (empirical_l2(&f, &truth_vals)?, None),
            SettingKind::RandomDesign => {
                let r = l2_design_values(&f, &truth_vals, setting.truncation, &design, setting.design_floor, integrator)?;
                (r.estimate.value, Some(r.estimate.std_error))
            }
            SettingKind::Density => {
                let (lz, _) = log_normalizer(&f, integrator.volume())?;
                let p: Vec<f64> = f.iter().map(|w| (w - lz).exp()).collect();
                let h = hellinger_values(&p, truth_density.as_ref().expect("density"), integrator)?;
                (h.value, Some(h.std_error))
            }
        };
        let frame = SubspaceFrame::pulled_back(st.pattern.orientation(), r.b)?;
        let dist = |loss| subspace_distance(loss, &central, &frame);
        Ok(DrawSummary {
            chain: chain.index,
            iter: r.iter,
            b: r.b,
            a: r.a,
            function_error: err,
            function_se: se,
            d1: dist(SubspaceLoss::D1)?,
            d2: dist(SubspaceLoss::D2)?,
            d3: dist(SubspaceLoss::D3)?,
        })
    };
    let mut draws = Vec::with_capacity(n_draws);
    let mut global = 0usize;
    for chain in chains {
        for r in &chain.records {
            draws.push(eval_draw(chain, r).map_err(|e| Error::AtDraw { index: global, source: Box::new(e) })?);
            global += 1;
        }
    }
    let errs: Vec<f64> = draws.iter().map(|s| s.function_error).collect();
    let dstar = truth.intrinsic_dim;
    let mut hist = vec![0usize; d];
    for s in &draws {
        hist[s.b - 1] += 1;
    }
    let below = draws.iter().filter(|s| s.b < dstar).count();
    let ge: Vec<&DrawSummary> = draws.iter().filter(|s| s.b >= dstar).collect();
    let pick = |f: fn(&DrawSummary) -> f64| -> Vec<f64> { ge.iter().map(|s| f(s)).collect() };
    let per_chain = |f: fn(&DrawSummary) -> f64| -> Vec<Vec<f64>> {
        chains
            .iter()
            .map(|c| draws.iter().filter(|s| s.chain == c.index).map(f).collect())
            .collect()
    };
    let counts = chains.iter().fold(MoveCounts::default(), |acc, c| add_counts(acc, c.counts));
    Ok(PosteriorSummary {
        setting: setting.kind,
        function_metric: setting.kind.function_metric().into(),
        intrinsic_dim: dstar,
        median_function_error: stats::median(&errs),
        mean_function_error: stats::mean(&errs),
        sd_function_error: if errs.len() > 1 { stats::variance(&errs).sqrt() } else { 0.0 },
        prob_dim_below: below as f64 / draws.len() as f64,
        dim_histogram: hist,
        median_d1: median_opt(&pick(|s| s.d1)),
        median_d2: median_opt(&pick(|s| s.d2)),
        median_d3: median_opt(&pick(|s| s.d3)),
        rhat_function: finite_opt(stats::split_rhat(&per_chain(|s| s.function_error))),
        rhat_a: finite_opt(stats::split_rhat(&per_chain(|s| s.a))),
        acceptance: AcceptanceRates::from_counts(&counts),
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DimPrior;

    #[test]
    fn dimension_proposal_is_a_reflecting_walk() {
        assert_eq!(dim_proposal_prob(1, 2, 3), 1.0);
        assert_eq!(dim_proposal_prob(2, 1, 3), 0.5);
        assert_eq!(dim_proposal_prob(3, 2, 3), 1.0);
        assert_eq!(dim_proposal_prob(1, 3, 3), 0.0);
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let b = propose_dim(2, 3, &mut rng);
            assert!(b == 1 || b == 3);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = ChainConfig { n_iter: 10, burn_in: 10, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ChainConfig { n_iter: 20, burn_in: 10, thin: 3, ..Default::default() };
        assert_eq!(cfg.retained(), 4);
    }

    #[test]
    fn prior_chain_stays_in_support() {
        let prior = HierarchicalPrior::with_max_dim(3, 3, 1.0, DimPrior::Uniform).unwrap();
        let data = Dataset::new(SettingKind::FixedDesign, vec![], Some(vec![])).unwrap();
        let setting = Setting::fixed_design(1.0).unwrap();
        let cfg = ChainConfig { n_iter: 300, burn_in: 100, seed: 3, ..Default::default() };
        let chain = mcmc_run(&data, &setting, &prior, &cfg).unwrap();
        assert_eq!(chain.records.len(), 200);
        for r in &chain.records {
            assert!((1..=3).contains(&r.b));
            assert!(r.a > 1.0);
            let q = Orthogonal::from_row_major(3, &r.q).unwrap();
            assert!(q.defect() < 1e-8);
        }
        // Flat likelihood: every orientation proposal is accepted.
        assert_eq!(chain.counts.orientation.0, chain.counts.orientation.1);
    }
}
