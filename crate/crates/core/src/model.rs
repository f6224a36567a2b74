//! Statistical settings, the hierarchical prior on `(Γ, A, Θ)` and synthetic
//! ground truths.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lingeom::{haar_sample, random_unit_vector, Orthogonal, SubspaceFrame};
use crate::metrics::BallIntegrator;
use crate::theory::{growth, growth_derivative, growth_root};

/// Which observation model the data come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingKind {
    Density,
    FixedDesign,
    RandomDesign,
}

impl SettingKind {
    pub fn is_regression(self) -> bool {
        !matches!(self, SettingKind::Density)
    }

    pub fn function_metric(self) -> &'static str {
        match self {
            SettingKind::Density => "hellinger",
            SettingKind::FixedDesign => "empirical_l2",
            SettingKind::RandomDesign => "l2_design",
        }
    }
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SettingKind::Density => "density",
            SettingKind::FixedDesign => "fixed_design",
            SettingKind::RandomDesign => "random_design",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub kind: SettingKind,
    /// Noise standard deviation (regression only).
    pub noise_sd: f64,
    /// Truncation level `Q` (random design).
    pub truncation: f64,
    /// Lower bound on the design density (random design).
    pub design_floor: f64,
    /// Allow `σ` outside [1, 2].
    pub relax_sigma: bool,
}

impl Setting {
    pub fn density() -> Self {
        Setting {
            kind: SettingKind::Density,
            noise_sd: 1.0,
            truncation: f64::INFINITY,
            design_floor: 0.0,
            relax_sigma: false,
        }
    }

    pub fn fixed_design(noise_sd: f64) -> Result<Self> {
        Setting {
            kind: SettingKind::FixedDesign,
            noise_sd,
            truncation: f64::INFINITY,
            design_floor: 0.0,
            relax_sigma: false,
        }
        .validated()
    }

    /// Random design with uniform covariates on the unit ball of ℝ^d.
    pub fn random_design(noise_sd: f64, truncation: f64, d: usize) -> Result<Self> {
        Setting {
            kind: SettingKind::RandomDesign,
            noise_sd,
            truncation,
            design_floor: 1.0 / crate::metrics::ball_volume(d),
            relax_sigma: false,
        }
        .validated()
    }

    pub fn with_relaxed_sigma(mut self) -> Self {
        self.relax_sigma = true;
        self
    }

    pub fn validated(self) -> Result<Self> {
        if self.kind.is_regression() {
            if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
                return Err(Error::Config(format!("noise sd must be positive, got {}", self.noise_sd)));
            }
            if !(1.0..=2.0).contains(&self.noise_sd) {
                if self.relax_sigma {
                    log::warn!("noise sd {} outside [1, 2]; proceeding (relax_sigma)", self.noise_sd);
                } else {
                    return Err(Error::Config(format!(
                        "noise sd {} outside [1, 2]; set relax_sigma to allow it",
                        self.noise_sd
                    )));
                }
            }
        }
        if self.kind == SettingKind::RandomDesign {
            if self.truncation <= 0.0 || self.truncation.is_nan() {
                return Err(Error::Config(format!("truncation must be positive, got {}", self.truncation)));
            }
            if self.design_floor <= 0.0 {
                return Err(Error::Config("design density floor must be positive".into()));
            }
        }
        Ok(self)
    }
}

/// Prior on the intrinsic dimension Γ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DimPrior {
    Uniform,
    TruncatedPoisson { mean: f64 },
}

/// `(π_Γ, λ, d)`: the law of Γ on {1..d̄}, the rate of the exponential
/// construction of `A | Γ`, and the ambient dimension. Θ is Haar on O(d).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchicalPrior {
    /// `dim_pmf[b - 1] = π_Γ(b)`.
    pub dim_pmf: Vec<f64>,
    pub rescale_rate: f64,
    pub ambient_dim: usize,
}

/// `d̄ = ⌈c_int √(log n)⌉`, at least 1.
pub fn max_intrinsic_dim(n: usize, c_int: f64) -> usize {
    let v = (c_int * (n.max(1) as f64).ln().max(0.0).sqrt()).ceil();
    (v as usize).max(1)
}

impl HierarchicalPrior {
    pub fn new(dim_pmf: Vec<f64>, rescale_rate: f64, ambient_dim: usize) -> Result<Self> {
        if dim_pmf.is_empty() || dim_pmf.len() > ambient_dim {
            return Err(Error::Config(format!(
                "dimension prior support 1..={} must fit in ambient dim {ambient_dim}",
                dim_pmf.len()
            )));
        }
        if dim_pmf.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("dimension probabilities must be nonnegative".into()));
        }
        let total: f64 = dim_pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("dimension probabilities sum to {total}")));
        }
        if !(rescale_rate > 0.0 && rescale_rate.is_finite()) {
            return Err(Error::Config(format!("rescale rate must be positive, got {rescale_rate}")));
        }
        Ok(HierarchicalPrior { dim_pmf, rescale_rate, ambient_dim })
    }

    /// Prior with support {1..d̄}, `d̄ = min(d, ⌈c_int √(log n)⌉)`.
    pub fn for_sample_size(
        n: usize,
        ambient_dim: usize,
        c_int: f64,
        rescale_rate: f64,
        dim_prior: DimPrior,
    ) -> Result<Self> {
        let dmax = max_intrinsic_dim(n, c_int).min(ambient_dim);
        Self::with_max_dim(dmax, ambient_dim, rescale_rate, dim_prior)
    }

    pub fn with_max_dim(
        dmax: usize,
        ambient_dim: usize,
        rescale_rate: f64,
        dim_prior: DimPrior,
    ) -> Result<Self> {
        if dmax == 0 {
            return Err(Error::Config("maximal intrinsic dimension must be >= 1".into()));
        }
        let raw: Vec<f64> = match dim_prior {
            DimPrior::Uniform => vec![1.0; dmax],
            DimPrior::TruncatedPoisson { mean } => {
                if !(mean > 0.0) {
                    return Err(Error::Config("Poisson mean must be positive".into()));
                }
                (1..=dmax)
                    .map(|k| {
                        let lf: f64 = (1..=k).map(|i| (i as f64).ln()).sum();
                        (k as f64 * mean.ln() - mean - lf).exp()
                    })
                    .collect()
            }
        };
        let total: f64 = raw.iter().sum();
        let mut pmf: Vec<f64> = raw.iter().map(|p| p / total).collect();
        // Put the rounding residue on the first atom so the pmf sums to 1.
        let residue = 1.0 - pmf.iter().sum::<f64>();
        pmf[0] += residue;
        Self::new(pmf, rescale_rate, ambient_dim)
    }

    pub fn max_dim(&self) -> usize {
        self.dim_pmf.len()
    }

    pub fn log_dim_prior(&self, b: usize) -> f64 {
        if b == 0 || b > self.dim_pmf.len() {
            return f64::NEG_INFINITY;
        }
        self.dim_pmf[b - 1].ln()
    }

    /// `π_Γ(d*) ≥ 1/n`.
    pub fn covers_truth(&self, dstar: usize, n: usize) -> bool {
        self.log_dim_prior(dstar) >= -(n.max(1) as f64).ln()
    }

    pub fn sample_dim<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in self.dim_pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return i + 1;
            }
        }
        self.dim_pmf.len()
    }

    pub fn log_rescale_density(&self, b: usize, a: f64) -> f64 {
        rescale_log_density(b, self.rescale_rate, a)
    }

    /// Joint draw of `(Γ, A, Θ)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, f64, Orthogonal)> {
        let b = self.sample_dim(rng);
        let a = sample_rescale(b, self.rescale_rate, rng)?;
        let q = haar_sample(self.ambient_dim, rng)?;
        Ok((b, a, q))
    }

    /// CDF of the marginal law of `A` (mixture over Γ).
    pub fn rescale_marginal_cdf(&self, a: f64) -> f64 {
        self.dim_pmf
            .iter()
            .enumerate()
            .map(|(i, p)| p * rescale_cdf(i + 1, self.rescale_rate, a))
            .sum()
    }
}

/// Draw `A | Γ = b`: `E ~ Exp(λ)` mapped through the inverse of
/// `t ↦ t^b (log t)^{b+1}` on (1, ∞).
pub fn sample_rescale<R: Rng + ?Sized>(b: usize, rate: f64, rng: &mut R) -> Result<f64> {
    if b == 0 {
        return Err(Error::InvalidDimension("rescale prior needs b >= 1".into()));
    }
    let exp = Exp::new(rate).map_err(|e| Error::InvalidArgument(format!("rate {rate}: {e}")))?;
    let e: f64 = exp.sample(rng);
    Ok(growth_root(b, e.max(f64::MIN_POSITIVE)))
}

/// Log-density of `A | Γ = b` at `a` (−∞ for `a ≤ 1`).
pub fn rescale_log_density(b: usize, rate: f64, a: f64) -> f64 {
    if !(a > 1.0) || !a.is_finite() {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * growth(b, a) + growth_derivative(b, a).ln()
}

pub fn rescale_cdf(b: usize, rate: f64, a: f64) -> f64 {
    if a <= 1.0 {
        return 0.0;
    }
    -(-rate * growth(b, a)).exp_m1()
}

/// `(f ∨ −Q) ∧ Q` elementwise.
pub fn truncate(values: &[f64], q: f64) -> Vec<f64> {
    values.iter().map(|v| v.clamp(-q, q)).collect()
}

/// The density `exp(w)/∫_{U_d} exp(w)` with a QMC-estimated normaliser.
#[derive(Clone, Debug, Serialize)]
pub struct LogisticDensity {
    pub log_norm: f64,
    /// Relative standard error of the normaliser estimate.
    pub rel_se: f64,
}

impl LogisticDensity {
    pub fn density(&self, w_value: f64) -> f64 {
        (w_value - self.log_norm).exp()
    }

    pub fn log_density(&self, w_value: f64) -> f64 {
        w_value - self.log_norm
    }
}

pub const MIN_QMC_POINTS: usize = 1000;

/// Normalise `exp(w)` over the unit ball with the integrator's points.
pub fn logistic_density<F: Fn(&[f64]) -> f64>(w: F, integrator: &BallIntegrator) -> Result<LogisticDensity> {
    let values: Vec<f64> = integrator.points().iter().map(|x| w(x)).collect();
    logistic_density_from_values(&values, integrator)
}

/// As [`logistic_density`] from `w` evaluated at the integrator's points.
pub fn logistic_density_from_values(w_values: &[f64], integrator: &BallIntegrator) -> Result<LogisticDensity> {
    if integrator.len() < MIN_QMC_POINTS {
        return Err(Error::InvalidArgument(format!(
            "at least {MIN_QMC_POINTS} QMC points needed for the normaliser, got {}",
            integrator.len()
        )));
    }
    if w_values.len() != integrator.len() {
        return Err(Error::DimensionMismatch("w values must match the integrator points".into()));
    }
    let (log_norm, rel_se) = log_normalizer(w_values, integrator.volume())?;
    Ok(LogisticDensity { log_norm, rel_se })
}

/// `log(vol · mean(exp w))` computed stably, with the relative standard error.
pub fn log_normalizer(w_values: &[f64], volume: f64) -> Result<(f64, f64)> {
    let m = w_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::NonFinite("w is not finite on the QMC points".into()));
    }
    let n = w_values.len() as f64;
    let scaled: Vec<f64> = w_values.iter().map(|w| (w - m).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n;
    let var = scaled.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((m + mean.ln() + volume.ln(), (var / n).sqrt() / mean))
}

/// Observations: covariates in the unit ball and, for regression, responses.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: SettingKind,
    pub x: Vec<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(kind: SettingKind, x: Vec<Vec<f64>>, y: Option<Vec<f64>>) -> Result<Self> {
        if let Some(d) = x.first().map(|p| p.len()) {
            if x.iter().any(|p| p.len() != d) {
                return Err(Error::DimensionMismatch("ragged covariate rows".into()));
            }
        }
        match (&y, kind.is_regression()) {
            (Some(y), true) if y.len() != x.len() => {
                return Err(Error::DimensionMismatch(format!("{} responses for {} covariates", y.len(), x.len())))
            }
            (None, true) => return Err(Error::Config("regression data need responses".into())),
            (Some(_), false) => return Err(Error::Config("density data carry no responses".into())),
            _ => {}
        }
        Ok(Dataset { kind, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.x.first().map(|p| p.len())
    }
}

/// Gaussian log-likelihood of `y` given mean values `f`.
pub fn gaussian_loglik(y: &[f64], f: &[f64], sigma: f64) -> f64 {
    let n = y.len() as f64;
    let rss: f64 = y.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * n * (2.0 * std::f64::consts::PI).ln() - n * sigma.ln() - rss / (2.0 * sigma * sigma)
}

/// Log-likelihood of `data` under latent function `f`. The density setting
/// needs an integrator for the normaliser.
pub fn loglik<F: Fn(&[f64]) -> f64>(
    setting: &Setting,
    f: F,
    data: &Dataset,
    integrator: Option<&BallIntegrator>,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if data.kind != setting.kind {
        return Err(Error::Config(format!("data of kind {} for setting {}", data.kind, setting.kind)));
    }
    let fx: Vec<f64> = data.x.iter().map(|x| f(x)).collect();
    if fx.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent function returned a non-finite value".into()));
    }
    match setting.kind {
        SettingKind::Density => {
            let integ = integrator
                .ok_or_else(|| Error::Config("density likelihood needs a ball integrator".into()))?;
            let dens = logistic_density(&f, integ)?;
            Ok(fx.iter().map(|w| dens.log_density(*w)).sum())
        }
        _ => {
            let y = data.y.as_ref().expect("validated regression data");
            Ok(gaussian_loglik(y, &fx, setting.noise_sd))
        }
    }
}

type CoreFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type CoreGrad = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Built-in and custom core functions `g*` on the unit ball of ℝ^{d*}.
#[derive(Clone)]
pub enum Family {
    /// `g(t) = ⟨v, t⟩`.
    Linear { direction: Vec<f64> },
    /// `g(t) = Σ_k w_k sin(2 t_k)`.
    Sine { weights: Vec<f64> },
    /// `g(t) = Σ_k w_k t_k²`.
    Quadratic { weights: Vec<f64> },
    /// `g(t) = c`.
    Constant { value: f64 },
    Custom { name: String, value: CoreFn, gradient: Option<CoreGrad>, beta: f64 },
}

impl fmt::Debug for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Linear { direction } => write!(f, "Linear({direction:?})"),
            Family::Sine { weights } => write!(f, "Sine({weights:?})"),
            Family::Quadratic { weights } => write!(f, "Quadratic({weights:?})"),
            Family::Constant { value } => write!(f, "Constant({value})"),
            Family::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

/// Serializable family description used by configs and sidecars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Linear {
        #[serde(default)]
        direction: Option<Vec<f64>>,
    },
    Sine {
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    Quadratic {
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    Constant {
        #[serde(default)]
        value: f64,
    },
}

impl FamilySpec {
    /// Concrete family for intrinsic dimension `dstar`; sine weights default
    /// to one per direction.
    pub fn build(&self, dstar: usize) -> Result<Family> {
        let check = |v: &Vec<f64>| -> Result<()> {
            if v.len() != dstar {
                return Err(Error::Config(format!("family parameters have length {}, expected {dstar}", v.len())));
            }
            Ok(())
        };
        Ok(match self {
            FamilySpec::Linear { direction } => {
                let v = direction.clone().unwrap_or_else(|| {
                    let mut v = vec![0.0; dstar];
                    v[0] = 1.0;
                    v
                });
                check(&v)?;
                Family::Linear { direction: v }
            }
            FamilySpec::Sine { weights } => {
                let w = weights.clone().unwrap_or_else(|| vec![1.0; dstar]);
                check(&w)?;
                Family::Sine { weights: w }
            }
            FamilySpec::Quadratic { weights } => {
                let w = weights.clone().unwrap_or_else(|| vec![1.0; dstar]);
                check(&w)?;
                Family::Quadratic { weights: w }
            }
            FamilySpec::Constant { value } => Family::Constant { value: *value },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::Linear { .. } => "linear",
            FamilySpec::Sine { .. } => "sine",
            FamilySpec::Quadratic { .. } => "quadratic",
            FamilySpec::Constant { .. } => "constant",
        }
    }
}

impl Family {
    pub fn name(&self) -> &str {
        match self {
            Family::Linear { .. } => "linear",
            Family::Sine { .. } => "sine",
            Family::Quadratic { .. } => "quadratic",
            Family::Constant { .. } => "constant",
            Family::Custom { name, .. } => name,
        }
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        match self {
            Family::Linear { direction } => direction.iter().zip(t).map(|(v, x)| v * x).sum(),
            Family::Sine { weights } => weights.iter().zip(t).map(|(w, x)| w * (2.0 * x).sin()).sum(),
            Family::Quadratic { weights } => weights.iter().zip(t).map(|(w, x)| w * x * x).sum(),
            Family::Constant { value } => *value,
            Family::Custom { value, .. } => value(t),
        }
    }

    pub fn gradient(&self, t: &[f64]) -> Option<Vec<f64>> {
        match self {
            Family::Linear { direction } => Some(direction.clone()),
            Family::Sine { weights } => {
                Some(weights.iter().zip(t).map(|(w, x)| 2.0 * w * (2.0 * x).cos()).collect())
            }
            Family::Quadratic { weights } => Some(weights.iter().zip(t).map(|(w, x)| 2.0 * w * x).collect()),
            Family::Constant { .. } => Some(vec![0.0; t.len()]),
            Family::Custom { gradient, .. } => gradient.as_ref().map(|g| g(t)),
        }
    }

    pub fn has_gradient(&self) -> bool {
        !matches!(self, Family::Custom { gradient: None, .. })
    }

    fn default_beta(&self) -> f64 {
        match self {
            Family::Quadratic { .. } => 2.0,
            Family::Custom { beta, .. } => *beta,
            _ => 1.0,
        }
    }
}

/// `f*(x) = g*((q* x)_{1..d*})` with its recorded regularity constants.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub intrinsic_dim: usize,
    pub core: Family,
    pub orientation: Orthogonal,
    pub smoothness: f64,
    pub holder_bound: f64,
}

impl GroundTruth {
    pub fn ambient_dim(&self) -> usize {
        self.orientation.dim()
    }

    /// Intrinsic coordinates `(q* x)_{1..d*}`.
    pub fn intrinsic_coords(&self, x: &[f64]) -> Vec<f64> {
        let m = self.orientation.matrix();
        (0..self.intrinsic_dim)
            .map(|i| (0..x.len()).map(|j| m[(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.core.eval(&self.intrinsic_coords(x))
    }

    pub fn eval_all(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.eval(x)).collect()
    }

    /// Central subspace `(q*)⁻¹(E_{d*})`.
    pub fn central_subspace(&self) -> SubspaceFrame {
        SubspaceFrame::pulled_back(&self.orientation, self.intrinsic_dim).expect("valid d*")
    }
}

/// Numerical `max(sup|g|, sup‖∇g‖)` over the unit ball of ℝ^{d*}, on a dense
/// grid (d* ≤ 2) or a QMC point set.
pub fn holder_bound(core: &Family, dstar: usize) -> f64 {
    let pts: Vec<Vec<f64>> = match dstar {
        1 => crate::qmc::ball_grid(1, 20_001),
        2 => crate::qmc::ball_grid(2, 401),
        _ => {
            let mut rng = crate::par::stream_rng(0x5eed, 0);
            crate::qmc::ball_points(dstar, 100_000, &mut rng)
        }
    };
    let mut sup: f64 = 0.0;
    for t in &pts {
        sup = sup.max(core.eval(t).abs());
        if let Some(g) = core.gradient(t) {
            sup = sup.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    sup.max(1.0)
}

/// Ground truth of the given family with orientation `q*` (Haar-drawn when
/// not supplied).
pub fn make_truth<R: Rng + ?Sized>(
    core: Family,
    d: usize,
    dstar: usize,
    orientation: Option<Orthogonal>,
    rng: &mut R,
) -> Result<GroundTruth> {
    if dstar == 0 || dstar > d {
        return Err(Error::InvalidDimension(format!("need 1 <= d* <= d, got d*={dstar}, d={d}")));
    }
    let q = match orientation {
        Some(q) if q.dim() != d => {
            return Err(Error::DimensionMismatch(format!("orientation is {}x{0}, ambient dim {d}", q.dim())))
        }
        Some(q) => q,
        None => haar_sample(d, rng)?,
    };
    let smoothness = core.default_beta();
    let holder = holder_bound(&core, dstar);
    Ok(GroundTruth { intrinsic_dim: dstar, core, orientation: q, smoothness, holder_bound: holder })
}

/// Uniform point of the unit ball: Gaussian direction times `U^{1/d}`.
pub fn uniform_ball_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let dir = random_unit_vector(d, rng);
    let u: f64 = rng.random();
    let r = u.powf(1.0 / d as f64);
    (dir * r).iter().copied().collect()
}

const ENVELOPE_QMC_POINTS: usize = 1 << 14;
const ENVELOPE_MARGIN: f64 = 0.05;

/// Simulate `n` observations from `truth` under `setting`.
pub fn sample_dataset<R: Rng + ?Sized>(
    truth: &GroundTruth,
    setting: &Setting,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = truth.ambient_dim();
    match setting.kind {
        SettingKind::Density => {
            let grid = BallIntegrator::new(d, ENVELOPE_QMC_POINTS, rng.random())?;
            let sup = grid
                .points()
                .iter()
                .map(|x| truth.eval(x))
                .fold(f64::NEG_INFINITY, f64::max)
                + ENVELOPE_MARGIN;
            let mut xs = Vec::with_capacity(n);
            let mut proposals = 0usize;
            while xs.len() < n {
                let x = uniform_ball_point(d, rng);
                proposals += 1;
                let u: f64 = rng.random();
                if u.ln() < truth.eval(&x) - sup {
                    xs.push(x);
                }
                if proposals >= 10_000 && (xs.len() as f64) < 1e-4 * proposals as f64 {
                    return Err(Error::EnvelopeTooLoose(xs.len() as f64 / proposals as f64));
                }
            }
            Dataset::new(SettingKind::Density, xs, None)
        }
        kind => {
            let xs: Vec<Vec<f64>> = (0..n).map(|_| uniform_ball_point(d, rng)).collect();
            let ys = xs
                .iter()
                .map(|x| truth.eval(x) + setting.noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Dataset::new(kind, xs, Some(ys))
        }
    }
}

/// Point of the unit ball shifted by `v` (helper for fibre checks).
pub fn shifted(x: &[f64], v: &DVector<f64>) -> Vec<f64> {
    x.iter().zip(v.iter()).map(|(a, b)| a + b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::stream_rng;

    #[test]
    fn sigma_restriction() {
        assert!(Setting::fixed_design(0.5).is_err());
        assert!(Setting::fixed_design(1.5).is_ok());
        let relaxed = Setting { noise_sd: 0.5, ..Setting::fixed_design(1.0).unwrap() }
            .with_relaxed_sigma()
            .validated();
        assert!(relaxed.is_ok());
        assert!(Setting::random_design(1.0, 0.0, 3).is_err());
    }

    #[test]
    fn prior_pmf_sums_to_one() {
        for dp in [DimPrior::Uniform, DimPrior::TruncatedPoisson { mean: 1.3 }] {
            let p = HierarchicalPrior::for_sample_size(1000, 5, 1.0, 1.0, dp).unwrap();
            assert!((p.dim_pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(p.max_dim(), max_intrinsic_dim(1000, 1.0));
            let mut rng = stream_rng(1, 0);
            for _ in 0..100 {
                let b = p.sample_dim(&mut rng);
                assert!((1..=p.max_dim()).contains(&b));
            }
        }
        assert!(HierarchicalPrior::new(vec![0.5, 0.4], 1.0, 3).is_err());
    }

    #[test]
    fn prior_mass_on_truth() {
        let p = HierarchicalPrior::with_max_dim(3, 3, 1.0, DimPrior::Uniform).unwrap();
        assert!(p.covers_truth(2, 100));
        assert!(!p.covers_truth(4, 100));
    }

    #[test]
    fn rescale_near_zero_and_above_one() {
        assert!(growth_root(1, 1e-12) < 1.0 + 1e-2);
        let mut rng = stream_rng(2, 0);
        for b in 1..4 {
            for _ in 0..200 {
                assert!(sample_rescale(b, 1.0, &mut rng).unwrap() > 1.0);
            }
        }
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate(&[0.5, -0.2], 1.0), vec![0.5, -0.2]);
        assert_eq!(truncate(&[2.0, 2.0], 1.0), vec![1.0, 1.0]);
        assert_eq!(truncate(&[-5.0], 1.0), vec![-1.0]);
    }

    #[test]
    fn uniform_logistic_density_in_disk() {
        let integ = BallIntegrator::new(2, 100_000, 3).unwrap();
        let dens = logistic_density(|_| 0.0, &integ).unwrap();
        let p = dens.density(0.0);
        assert!((p - 1.0 / std::f64::consts::PI).abs() / (1.0 / std::f64::consts::PI) < 0.005);
        let shifted = logistic_density(|_| 3.7, &integ).unwrap();
        assert!((shifted.density(3.7) - p).abs() < 1e-10);
        let small = BallIntegrator::new(2, 500, 3).unwrap();
        assert!(logistic_density(|_| 0.0, &small).is_err());
    }

    #[test]
    fn loglik_errors() {
        let s = Setting::fixed_design(1.0).unwrap();
        let empty = Dataset { kind: SettingKind::FixedDesign, x: vec![], y: Some(vec![]) };
        assert!(matches!(loglik(&s, |_| 0.0, &empty, None), Err(Error::EmptyData)));
        let one = Dataset::new(SettingKind::FixedDesign, vec![vec![0.0]], Some(vec![0.0])).unwrap();
        assert!(matches!(loglik(&s, |_| f64::NAN, &one, None), Err(Error::NonFinite(_))));
    }

    #[test]
    fn truth_linear_unit_direction() {
        let mut rng = stream_rng(4, 0);
        let t = make_truth(Family::Linear { direction: vec![1.0] }, 3, 1, None, &mut rng).unwrap();
        let x: Vec<f64> = t.orientation.matrix().row(0).iter().copied().collect();
        assert!((t.eval(&x) - 1.0).abs() < 1e-12);
        assert!(make_truth(Family::Linear { direction: vec![1.0] }, 2, 3, None, &mut rng).is_err());
    }

    #[test]
    fn sine_holder_bound_matches_closed_form() {
        let k = holder_bound(&Family::Sine { weights: vec![1.0] }, 1);
        // sup|sin 2t| = 1 at t = π/4, sup|2 cos 2t| = 2 at t = 0.
        assert!((k - 2.0).abs() / 2.0 < 0.01);
        let k = holder_bound(&Family::Sine { weights: vec![0.3] }, 1);
        assert!((k - 1.0).abs() < 1e-12); // floored at 1
    }

    #[test]
    fn dataset_zero_rejected() {
        let mut rng = stream_rng(5, 0);
        let t = make_truth(Family::Constant { value: 0.0 }, 2, 1, None, &mut rng).unwrap();
        assert!(sample_dataset(&t, &Setting::fixed_design(1.0).unwrap(), 0, &mut rng).is_err());
    }

    #[test]
    fn regression_noise_is_centred() {
        let mut rng = stream_rng(6, 0);
        let t = make_truth(Family::Constant { value: 0.0 }, 3, 1, None, &mut rng).unwrap();
        let s = Setting::fixed_design(1.0).unwrap();
        let n = 4000;
        let data = sample_dataset(&t, &s, n, &mut rng).unwrap();
        let m = crate::stats::mean(data.y.as_ref().unwrap());
        assert!(m.abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn uniform_density_radial_law() {
        let mut rng = stream_rng(7, 0);
        let t = make_truth(Family::Constant { value: 0.0 }, 3, 1, None, &mut rng).unwrap();
        let n = 5000;
        let data = sample_dataset(&t, &Setting::density(), n, &mut rng).unwrap();
        // ‖X‖^d is uniform on [0, 1].
        let r: Vec<f64> = data
            .x
            .iter()
            .map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt().powi(3))
            .collect();
        let m = crate::stats::mean(&r);
        assert!((m - 0.5).abs() < 4.0 * (1.0 / 12.0f64).sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn family_spec_defaults() {
        let f = FamilySpec::Sine { weights: None }.build(2).unwrap();
        match f {
            Family::Sine { weights } => assert_eq!(weights, vec![1.0, 1.0]),
            _ => unreachable!(),
        }
        assert!(FamilySpec::Linear { direction: Some(vec![1.0]) }.build(2).is_err());
    }
}
