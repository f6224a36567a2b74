//! Subcommand configurations and their runners.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use subspace_gp::experiment::{run_experiment, ExperimentConfig};
use subspace_gp::gp::{sample_path, SparsityPattern};
use subspace_gp::inference::{run_chains, write_chains_jsonl, AcceptanceRates, ChainConfig};
use subspace_gp::io::{fmt_f64, load_dataset, load_json, read_chain_jsonl, save_dataset, save_json, DatasetMeta, MoveCounts};
use subspace_gp::lingeom::{
    haar_mass_check, haar_sample, sphere_net, stiefel_net, subspace_distance, Orthogonal, SubspaceFrame, SubspaceLoss,
};
use subspace_gp::metrics::ball_volume;
use subspace_gp::model::{make_truth, sample_dataset, DimPrior, FamilySpec, HierarchicalPrior, Setting, SettingKind};
use subspace_gp::par::{self, stream_rng, Execution};
use subspace_gp::qmc::{ball_grid, ball_points};
use subspace_gp::theory::{concentration, rates, RateInputs};
use subspace_gp::{stats, Error};

use crate::CliError;

/// What a finished subcommand reports back.
#[derive(Debug, Default)]
pub struct Outcome {
    /// Small JSON digest stored in `summary.json`.
    pub results: Value,
    /// Printed on standard output.
    pub stdout: Option<String>,
}

pub trait RunCommand: Serialize + DeserializeOwned {
    const NAME: &'static str;

    /// Fill derived defaults and validate; runs before the run directory exists.
    fn resolve(&mut self) -> Result<(), CliError>;

    /// Files copied into `inputs/`.
    fn inputs(&self) -> Vec<PathBuf> {
        Vec::new()
    }

    fn execute(&self, dir: &Path, exec: Execution) -> Result<Outcome, CliError>;
}

fn one() -> f64 {
    1.0
}
fn four() -> usize {
    4
}
fn uniform() -> DimPrior {
    DimPrior::Uniform
}
fn sine() -> FamilySpec {
    FamilySpec::Sine { weights: None }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn require_file(p: &Path, what: &str) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(config_err(format!("{what} {} does not exist", p.display())))
    }
}

fn writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(Error::from)?))
}

fn pretty(v: &impl Serialize) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(v).map_err(Error::from)?)
}

fn regression_setting(
    kind: SettingKind,
    noise_sd: f64,
    relax_sigma: bool,
    truncation: Option<f64>,
    d: usize,
) -> Result<Setting, CliError> {
    if kind == SettingKind::Density {
        return Ok(Setting::density());
    }
    Ok(Setting {
        kind,
        noise_sd,
        truncation: truncation.unwrap_or(f64::INFINITY),
        design_floor: if kind == SettingKind::RandomDesign { 1.0 / ball_volume(d) } else { 0.0 },
        relax_sigma,
    }
    .validated()?)
}

fn prior_for(
    ambient_dim: usize,
    n: Option<usize>,
    max_dim: Option<usize>,
    c_int: f64,
    rescale_rate: f64,
    dim_prior: DimPrior,
) -> subspace_gp::Result<HierarchicalPrior> {
    match (max_dim, n) {
        (Some(m), _) => HierarchicalPrior::with_max_dim(m, ambient_dim, rescale_rate, dim_prior),
        (None, Some(n)) => HierarchicalPrior::for_sample_size(n, ambient_dim, c_int, rescale_rate, dim_prior),
        (None, None) => HierarchicalPrior::with_max_dim(ambient_dim, ambient_dim, rescale_rate, dim_prior),
    }
}

fn quantiles(xs: &[f64]) -> Value {
    if xs.is_empty() {
        return Value::Null;
    }
    json!({
        "q05": stats::quantile(xs, 0.05),
        "median": stats::median(xs),
        "q95": stats::quantile(xs, 0.95),
        "mean": stats::mean(xs),
    })
}

// ---------------------------------------------------------------- prior-sample

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSampleConfig {
    pub ambient_dim: usize,
    /// Sample size fixing the support `1..=d̄` of Γ; `max_dim` takes precedence.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub max_dim: Option<usize>,
    #[serde(default = "one")]
    pub c_int: f64,
    #[serde(default = "one")]
    pub rescale_rate: f64,
    #[serde(default = "uniform")]
    pub dim_prior: DimPrior,
    #[serde(default = "default_count")]
    pub count: usize,
    /// QMC ball points at which each draw's field is sampled; 0 skips the field.
    #[serde(default)]
    pub field_points: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_count() -> usize {
    1000
}

#[derive(Serialize)]
struct PriorDraw {
    index: usize,
    b: usize,
    a: f64,
    q: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<Vec<f64>>,
}

impl RunCommand for PriorSampleConfig {
    const NAME: &'static str = "prior-sample";

    fn resolve(&mut self) -> Result<(), CliError> {
        if self.count == 0 {
            return Err(config_err("count must be positive"));
        }
        prior_for(self.ambient_dim, self.n, self.max_dim, self.c_int, self.rescale_rate, self.dim_prior)?;
        Ok(())
    }

    fn execute(&self, dir: &Path, exec: Execution) -> Result<Outcome, CliError> {
        let prior = prior_for(self.ambient_dim, self.n, self.max_dim, self.c_int, self.rescale_rate, self.dim_prior)?;
        let points = Arc::new(if self.field_points > 0 {
            ball_points(self.ambient_dim, self.field_points, &mut stream_rng(self.seed, u64::MAX))
        } else {
            Vec::new()
        });
        let draws: Vec<PriorDraw> = par::map_indexed(exec, self.count, |i| -> subspace_gp::Result<PriorDraw> {
            let mut rng = stream_rng(self.seed, i as u64);
            let (b, a, q) = prior.sample(&mut rng)?;
            let field = if points.is_empty() {
                None
            } else {
                let pattern = SparsityPattern::new(q.clone(), b, a)?;
                Some(sample_path(&pattern, points.clone(), &mut rng)?.values.as_slice().to_vec())
            };
            Ok(PriorDraw { index: i, b, a, q: q.to_row_major(), field })
        })
        .into_iter()
        .collect::<subspace_gp::Result<_>>()?;

        let mut w = writer(&dir.join("prior_samples.jsonl"))?;
        for d in &draws {
            serde_json::to_writer(&mut w, d).map_err(Error::from)?;
            writeln!(w).map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
        if !points.is_empty() {
            let mut w = writer(&dir.join("field_points.csv"))?;
            let header: Vec<String> = (1..=self.ambient_dim).map(|i| format!("x{i}")).collect();
            writeln!(w, "{}", header.join(",")).map_err(Error::from)?;
            for p in points.iter() {
                let row: Vec<String> = p.iter().map(|v| fmt_f64(*v)).collect();
                writeln!(w, "{}", row.join(",")).map_err(Error::from)?;
            }
            w.flush().map_err(Error::from)?;
        }
        let mut hist = vec![0usize; prior.max_dim()];
        for d in &draws {
            hist[d.b - 1] += 1;
        }
        let a: Vec<f64> = draws.iter().map(|d| d.a).collect();
        Ok(Outcome {
            results: json!({ "count": self.count, "dim_pmf": prior.dim_pmf, "dim_histogram": hist, "a": quantiles(&a) }),
            stdout: None,
        })
    }
}

// -------------------------------------------------------------------- simulate

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub setting: SettingKind,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub relax_sigma: bool,
    /// Random design only; defaults to three times the truth's bound.
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default = "sine")]
    pub truth: FamilySpec,
    /// Row-major `q*`; Haar-drawn from the seed when absent.
    #[serde(default)]
    pub orientation: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
}

impl SimulateConfig {
    fn truth(&self) -> Result<subspace_gp::model::GroundTruth, CliError> {
        let core = self.truth.build(self.intrinsic_dim)?;
        let q = match &self.orientation {
            Some(rows) => Some(Orthogonal::from_row_major(self.ambient_dim, rows)?),
            None => None,
        };
        Ok(make_truth(core, self.ambient_dim, self.intrinsic_dim, q, &mut stream_rng(self.seed, 0x7a07))?)
    }
}

impl RunCommand for SimulateConfig {
    const NAME: &'static str = "simulate";

    fn resolve(&mut self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(config_err("n must be positive"));
        }
        let truth = self.truth()?;
        if self.setting == SettingKind::RandomDesign && self.truncation.is_none() {
            self.truncation = Some(3.0 * truth.holder_bound);
        }
        if self.orientation.is_none() {
            self.orientation = Some(truth.orientation.to_row_major());
        }
        regression_setting(self.setting, self.noise_sd, self.relax_sigma, self.truncation, self.ambient_dim)?;
        Ok(())
    }

    fn execute(&self, dir: &Path, _exec: Execution) -> Result<Outcome, CliError> {
        let truth = self.truth()?;
        let setting = regression_setting(self.setting, self.noise_sd, self.relax_sigma, self.truncation, self.ambient_dim)?;
        let data = sample_dataset(&truth, &setting, self.n, &mut stream_rng(self.seed, 0xda7a))?;
        save_dataset(&data, &dir.join("data.csv"))?;
        let meta = DatasetMeta {
            kind: setting.kind,
            noise_sd: setting.kind.is_regression().then_some(setting.noise_sd),
            truncation: (setting.kind == SettingKind::RandomDesign).then_some(setting.truncation),
            seed: self.seed,
            truth_family: truth.core.name().to_string(),
            ambient_dim: self.ambient_dim,
            intrinsic_dim: self.intrinsic_dim,
            n: self.n,
            orientation: truth.orientation.to_row_major(),
        };
        save_json(&meta, &dir.join("data.json"))?;
        Ok(Outcome {
            results: json!({ "n": self.n, "truth_family": meta.truth_family, "holder_bound": truth.holder_bound }),
            stdout: None,
        })
    }
}

// ------------------------------------------------------------------------- fit

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Dataset CSV.
    pub data: PathBuf,
    pub setting: SettingKind,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub relax_sigma: bool,
    /// Random design only; no truncation when absent.
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default = "four")]
    pub chains: usize,
    /// `chain.seed` is replaced by `seed`.
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default = "one")]
    pub c_int: f64,
    #[serde(default = "one")]
    pub rescale_rate: f64,
    #[serde(default = "uniform")]
    pub dim_prior: DimPrior,
    /// Overrides `d̄ = ⌈c_int √(log n)⌉`.
    #[serde(default)]
    pub max_dim: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl RunCommand for FitConfig {
    const NAME: &'static str = "fit";

    fn resolve(&mut self) -> Result<(), CliError> {
        require_file(&self.data, "data file")?;
        self.chain.seed = self.seed;
        self.chain.validate()?;
        if self.chains == 0 {
            return Err(config_err("chains must be at least 1"));
        }
        let data = load_dataset(&self.data, self.setting)?;
        let d = data.dim().ok_or_else(|| config_err("data file holds no observations"))?;
        regression_setting(self.setting, self.noise_sd, self.relax_sigma, self.truncation, d)?;
        prior_for(d, Some(data.len()), self.max_dim, self.c_int, self.rescale_rate, self.dim_prior)?;
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        vec![self.data.clone()]
    }

    fn execute(&self, dir: &Path, exec: Execution) -> Result<Outcome, CliError> {
        let data = load_dataset(&self.data, self.setting)?;
        let d = data.dim().expect("checked in resolve");
        let setting = regression_setting(self.setting, self.noise_sd, self.relax_sigma, self.truncation, d)?;
        let prior = prior_for(d, Some(data.len()), self.max_dim, self.c_int, self.rescale_rate, self.dim_prior)?;
        let chains = run_chains(&data, &setting, &prior, &self.chain, self.chains, exec)?;
        let mut w = writer(&dir.join("chains.jsonl"))?;
        write_chains_jsonl(&chains, &mut w)?;
        w.flush().map_err(Error::from)?;

        let mut hist = vec![0usize; d];
        let mut a = Vec::new();
        let mut per_chain_a = Vec::new();
        let mut counts = MoveCounts::default();
        for c in &chains {
            per_chain_a.push(c.records.iter().map(|r| r.a).collect::<Vec<_>>());
            for r in &c.records {
                hist[r.b - 1] += 1;
                a.push(r.a);
            }
            let add = |x: (u64, u64), y: (u64, u64)| (x.0 + y.0, x.1 + y.1);
            counts = MoveCounts {
                latent: add(counts.latent, c.counts.latent),
                scale: add(counts.scale, c.counts.scale),
                orientation: add(counts.orientation, c.counts.orientation),
                dimension: add(counts.dimension, c.counts.dimension),
            };
        }
        let rhat = stats::split_rhat(&per_chain_a);
        let summary = json!({
            "n": data.len(),
            "ambient_dim": d,
            "dim_pmf": prior.dim_pmf,
            "retained": a.len(),
            "dim_histogram": hist,
            "a": quantiles(&a),
            "rhat_a": rhat.is_finite().then_some(rhat),
            "acceptance": AcceptanceRates::from_counts(&counts),
            "final_steps": chains.iter().map(|c| json!({ "step_a": c.step_a, "step_q": c.step_q })).collect::<Vec<_>>(),
        });
        save_json(&summary, &dir.join("fit_summary.json"))?;
        Ok(Outcome { results: summary, stdout: None })
    }
}

// -------------------------------------------------------------------- subspace

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceConfig {
    /// Chain JSON-lines file.
    pub chains: PathBuf,
    /// Dataset sidecar supplying `orientation` and `intrinsic_dim` when they
    /// are not given directly.
    #[serde(default)]
    pub truth: Option<PathBuf>,
    /// Row-major `q*`.
    #[serde(default)]
    pub orientation: Option<Vec<f64>>,
    #[serde(default)]
    pub intrinsic_dim: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl SubspaceConfig {
    fn central(&self) -> Result<SubspaceFrame, CliError> {
        let (Some(rows), Some(dstar)) = (&self.orientation, self.intrinsic_dim) else {
            return Err(config_err("the true subspace needs orientation and intrinsic_dim (or a truth sidecar)"));
        };
        let d = (rows.len() as f64).sqrt().round() as usize;
        let q = Orthogonal::from_row_major(d, rows)?;
        if dstar == 0 || dstar > d {
            return Err(config_err(format!("need 1 <= intrinsic_dim <= {d}, got {dstar}")));
        }
        Ok(SubspaceFrame::pulled_back(&q, dstar)?)
    }
}

impl RunCommand for SubspaceConfig {
    const NAME: &'static str = "subspace";

    fn resolve(&mut self) -> Result<(), CliError> {
        require_file(&self.chains, "chain file")?;
        if let Some(p) = &self.truth {
            require_file(p, "truth sidecar")?;
            let meta: DatasetMeta = load_json(p).map_err(|e| config_err(format!("{}: {e}", p.display())))?;
            self.orientation.get_or_insert(meta.orientation);
            self.intrinsic_dim.get_or_insert(meta.intrinsic_dim);
        }
        self.central()?;
        Ok(())
    }

    fn inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![self.chains.clone()];
        v.extend(self.truth.clone());
        v
    }

    fn execute(&self, dir: &Path, _exec: Execution) -> Result<Outcome, CliError> {
        let central = self.central()?;
        let dstar = central.sub_dim();
        let d = central.ambient_dim();
        let file = File::open(&self.chains).map_err(Error::from)?;
        let records = read_chain_jsonl(BufReader::new(file))?;
        if records.is_empty() {
            return Err(config_err("chain file holds no draws"));
        }
        let mut w = writer(&dir.join("subspace.csv"))?;
        writeln!(w, "draw_index,chain,iter,b,a,d1,d2,d3").map_err(Error::from)?;
        let mut hist = vec![0usize; d];
        let mut losses: [Vec<f64>; 3] = Default::default();
        for (i, r) in records.iter().enumerate() {
            if r.q.len() != d * d || r.b == 0 || r.b > d {
                return Err(config_err(format!("draw {i} does not match ambient dimension {d}")));
            }
            let frame = SubspaceFrame::pulled_back(&Orthogonal::from_row_major(d, &r.q)?, r.b)?;
            let mut ds = [0.0; 3];
            for (k, loss) in [SubspaceLoss::D1, SubspaceLoss::D2, SubspaceLoss::D3].into_iter().enumerate() {
                ds[k] = subspace_distance(loss, &central, &frame)?;
                if r.b >= dstar {
                    losses[k].push(ds[k]);
                }
            }
            hist[r.b - 1] += 1;
            writeln!(
                w,
                "{i},{},{},{},{},{},{},{}",
                r.chain,
                r.iter,
                r.b,
                fmt_f64(r.a),
                fmt_f64(ds[0]),
                fmt_f64(ds[1]),
                fmt_f64(ds[2])
            )
            .map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
        let med = |xs: &Vec<f64>| (!xs.is_empty()).then(|| stats::median(xs));
        let below = records.iter().filter(|r| r.b < dstar).count();
        let summary = json!({
            "draws": records.len(),
            "intrinsic_dim": dstar,
            "prob_dim_below": below as f64 / records.len() as f64,
            "dim_histogram": hist,
            "median_d1": med(&losses[0]),
            "median_d2": med(&losses[1]),
            "median_d3": med(&losses[2]),
        });
        save_json(&summary, &dir.join("subspace_summary.json"))?;
        Ok(Outcome { results: summary, stdout: None })
    }
}

// ----------------------------------------------------------------------- rates

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub n: u64,
    pub beta: f64,
    pub dstar: usize,
    /// Defaults to `dstar`.
    #[serde(default)]
    pub ambient_dim: Option<usize>,
    #[serde(default = "one")]
    pub holder_bound: f64,
    #[serde(default = "one")]
    pub c_eps: f64,
    #[serde(default = "one")]
    pub c_int: f64,
    #[serde(default = "one")]
    pub c_growth: f64,
    #[serde(default = "one")]
    pub c_r: f64,
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default = "default_detect")]
    pub detect: f64,
    #[serde(default)]
    pub design_min: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_window() -> f64 {
    0.5
}
fn default_detect() -> f64 {
    1.0 / 24.0
}

impl RatesConfig {
    fn inputs_struct(&self) -> RateInputs {
        RateInputs {
            n: self.n,
            beta: self.beta,
            dstar: self.dstar,
            holder_bound: self.holder_bound,
            c_eps: self.c_eps,
            c_int: self.c_int,
            c_growth: self.c_growth,
            c_r: self.c_r,
            window: self.window,
            detect: self.detect,
            ambient_dim: self.ambient_dim.unwrap_or(self.dstar),
            design_min: self.design_min,
        }
    }
}

impl RunCommand for RatesConfig {
    const NAME: &'static str = "rates";

    fn resolve(&mut self) -> Result<(), CliError> {
        self.ambient_dim.get_or_insert(self.dstar);
        rates(&self.inputs_struct())?;
        Ok(())
    }

    fn execute(&self, dir: &Path, _exec: Execution) -> Result<Outcome, CliError> {
        let spec = rates(&self.inputs_struct())?;
        save_json(&spec, &dir.join("rates.json"))?;
        Ok(Outcome {
            results: json!({ "kappa": spec.kappa, "eps_n": spec.eps_n, "subspace_recovery_applicable": spec.subspace_recovery_applicable }),
            stdout: Some(pretty(&spec)?),
        })
    }
}

// ------------------------------------------------------------------ geom-check

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeomCheckConfig {
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub eps: f64,
    #[serde(default = "default_n_mc")]
    pub n_mc: usize,
    /// Also build an ε-net of orthonormal `intrinsic_dim`-tuples and measure
    /// its coverage (small dimensions only).
    #[serde(default)]
    pub net: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_n_mc() -> usize {
    100_000
}

impl RunCommand for GeomCheckConfig {
    const NAME: &'static str = "geom-check";

    fn resolve(&mut self) -> Result<(), CliError> {
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.ambient_dim {
            return Err(config_err(format!(
                "need 1 <= intrinsic_dim <= ambient_dim, got {} and {}",
                self.intrinsic_dim, self.ambient_dim
            )));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(config_err(format!("eps must be positive, got {}", self.eps)));
        }
        if self.n_mc == 0 {
            return Err(config_err("n_mc must be positive"));
        }
        Ok(())
    }

    fn execute(&self, dir: &Path, exec: Execution) -> Result<Outcome, CliError> {
        let qstar = haar_sample(self.ambient_dim, &mut stream_rng(self.seed, 0))?;
        let haar = haar_mass_check(&qstar, self.intrinsic_dim, self.eps, self.n_mc, self.seed, exec)?;
        let net = if self.net {
            let mut rng = stream_rng(self.seed, 1);
            let spec = if self.intrinsic_dim == 1 {
                sphere_net(self.ambient_dim, self.eps, &mut rng)?
            } else {
                stiefel_net(self.ambient_dim, self.intrinsic_dim, self.eps, &mut rng)?
            };
            spec.write_csv(writer(&dir.join("net.csv"))?)?;
            Some(json!({
                "size": spec.len(),
                "cardinality_bound": spec.cardinality_bound,
                "respects_bound": spec.respects_bound(),
                "coverage": spec.coverage(self.n_mc, self.seed.wrapping_add(1), exec),
            }))
        } else {
            None
        };
        let report = json!({ "orientation": qstar.to_row_major(), "haar_mass": haar, "net": net });
        save_json(&report, &dir.join("geom_check.json"))?;
        Ok(Outcome {
            results: json!({ "meets_bound": haar.meets_bound, "conclusive": haar.conclusive }),
            stdout: Some(pretty(&report)?),
        })
    }
}

// --------------------------------------------------------------- concentration

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    /// Intrinsic dimension `b` (1 or 2).
    pub intrinsic_dim: usize,
    /// Rescaling `a`.
    pub a: f64,
    pub eps: f64,
    /// Target function on the unit ball of ℝ^b.
    #[serde(default = "sine")]
    pub truth: FamilySpec,
    /// Nodes per axis of the evaluation grid.
    #[serde(default = "default_grid")]
    pub grid_per_dim: usize,
    #[serde(default = "default_conc_mc")]
    pub n_mc: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_grid() -> usize {
    24
}
fn default_conc_mc() -> usize {
    20_000
}

impl RunCommand for ConcentrationConfig {
    const NAME: &'static str = "concentration";

    fn resolve(&mut self) -> Result<(), CliError> {
        if !(1..=2).contains(&self.intrinsic_dim) {
            return Err(config_err(format!("intrinsic_dim must be 1 or 2, got {}", self.intrinsic_dim)));
        }
        if self.grid_per_dim < 2 {
            return Err(config_err("grid_per_dim must be at least 2"));
        }
        if self.n_mc == 0 {
            return Err(config_err("n_mc must be positive"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(config_err(format!("eps must be positive, got {}", self.eps)));
        }
        SparsityPattern::new(Orthogonal::identity(self.intrinsic_dim), self.intrinsic_dim, self.a)?;
        self.truth.build(self.intrinsic_dim)?;
        Ok(())
    }

    fn execute(&self, dir: &Path, exec: Execution) -> Result<Outcome, CliError> {
        let b = self.intrinsic_dim;
        let pattern = SparsityPattern::new(Orthogonal::identity(b), b, self.a)?;
        let family = self.truth.build(b)?;
        let grid = ball_grid(b, self.grid_per_dim);
        let target: Vec<f64> = grid.iter().map(|t| family.eval(t)).collect();
        let c = concentration(&target, &grid, &pattern, self.eps, self.n_mc, self.seed, exec)?;
        let report = json!({ "grid_points": grid.len(), "concentration": c });
        save_json(&report, &dir.join("concentration.json"))?;
        Ok(Outcome { results: json!({ "total": c.total }), stdout: Some(pretty(&report)?) })
    }
}

// ------------------------------------------------------------------ experiment

impl RunCommand for ExperimentConfig {
    const NAME: &'static str = "experiment";

    fn resolve(&mut self) -> Result<(), CliError> {
        self.validate()?;
        self.truth()?;
        Ok(())
    }

    fn execute(&self, dir: &Path, exec: Execution) -> Result<Outcome, CliError> {
        let report = run_experiment(self, dir, exec)?;
        save_json(&report, &dir.join("report.json"))?;
        let points: Vec<Value> = report
            .points
            .iter()
            .map(|p| {
                json!({
                    "n": p.n,
                    "median_function_error": p.summary.median_function_error,
                    "prob_dim_below": p.summary.prob_dim_below,
                    "median_d2": p.summary.median_d2,
                })
            })
            .collect();
        Ok(Outcome {
            results: json!({ "slope": report.slope(), "reference_slope": report.reference_slope, "points": points }),
            stdout: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_default_ambient_dim_to_dstar() {
        let mut c = RatesConfig {
            n: 1024,
            beta: 1.0,
            dstar: 2,
            ambient_dim: None,
            holder_bound: 1.0,
            c_eps: 1.0,
            c_int: 1.0,
            c_growth: 1.0,
            c_r: 1.0,
            window: 0.5,
            detect: 1.0 / 24.0,
            design_min: None,
            seed: 0,
        };
        c.resolve().unwrap();
        assert_eq!(c.ambient_dim, Some(2));
        assert_eq!(c.inputs_struct(), RateInputs { ambient_dim: 2, ..RateInputs::new(1024, 1.0, 2, 2) });
    }

    #[test]
    fn geom_check_rejects_bad_dimensions() {
        let mut c = GeomCheckConfig { ambient_dim: 2, intrinsic_dim: 3, eps: 1.0, n_mc: 10, net: false, seed: 0 };
        assert!(matches!(c.resolve(), Err(CliError::Config(_))));
        c.intrinsic_dim = 1;
        c.eps = 0.0;
        assert!(c.resolve().is_err());
    }
}
