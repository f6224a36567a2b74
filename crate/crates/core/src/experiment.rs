//! Contraction experiments over a grid of sample sizes.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{posterior_functionals, run_chains, write_chains_jsonl, ChainConfig, PosteriorSummary};
use crate::io::{fmt_f64, save_dataset, save_json, DatasetMeta};
use crate::lingeom::Orthogonal;
use crate::metrics::{write_metrics_csv, BallIntegrator};
use crate::model::{
    make_truth, sample_dataset, DimPrior, FamilySpec, GroundTruth, HierarchicalPrior, Setting, SettingKind,
};
use crate::par::{stream_rng, Execution};
use crate::svg::{LinePlot, Series};

fn default_sigma() -> f64 {
    1.0
}
fn default_chains() -> usize {
    4
}
fn default_one() -> f64 {
    1.0
}
fn default_metric_points() -> usize {
    4096
}
fn default_truth() -> FamilySpec {
    FamilySpec::Sine { weights: None }
}
fn default_dim_prior() -> DimPrior {
    DimPrior::Uniform
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: SettingKind,
    #[serde(default = "default_sigma")]
    pub noise_sd: f64,
    #[serde(default)]
    pub relax_sigma: bool,
    /// Truncation level (random design); defaults to three times the
    /// truth's bound `K_n`.
    #[serde(default)]
    pub truncation: Option<f64>,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    #[serde(default = "default_truth")]
    pub truth: FamilySpec,
    /// Row-major `q*`; Haar-drawn from the seed when absent.
    #[serde(default)]
    pub orientation: Option<Vec<f64>>,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default = "default_one")]
    pub c_int: f64,
    #[serde(default = "default_one")]
    pub rescale_rate: f64,
    #[serde(default = "default_dim_prior")]
    pub dim_prior: DimPrior,
    /// Integration points for the L²(G) and Hellinger metrics.
    #[serde(default = "default_metric_points")]
    pub metric_points: usize,
    #[serde(default = "default_true")]
    pub write_chains: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() || self.n_grid.contains(&0) {
            return Err(Error::Config("n_grid must be a nonempty list of positive sizes".into()));
        }
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.ambient_dim {
            return Err(Error::Config(format!(
                "need 1 <= intrinsic_dim <= ambient_dim, got {} and {}",
                self.intrinsic_dim, self.ambient_dim
            )));
        }
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.metric_points < 2 {
            return Err(Error::Config("metric_points must be at least 2".into()));
        }
        self.chain.validate()?;
        self.setting()?;
        Ok(())
    }

    fn setting(&self) -> Result<Setting> {
        let s = Setting {
            kind: self.setting,
            noise_sd: self.noise_sd,
            truncation: self.truncation.unwrap_or(f64::INFINITY),
            design_floor: 1.0 / crate::metrics::ball_volume(self.ambient_dim),
            relax_sigma: self.relax_sigma,
        };
        if self.setting == SettingKind::Density {
            return Ok(Setting::density());
        }
        s.validated()
    }

    pub fn truth(&self) -> Result<GroundTruth> {
        let core = self.truth.build(self.intrinsic_dim)?;
        let q = match &self.orientation {
            Some(rows) => Some(Orthogonal::from_row_major(self.ambient_dim, rows)?),
            None => None,
        };
        make_truth(core, self.ambient_dim, self.intrinsic_dim, q, &mut stream_rng(self.seed, 0x7a07))
    }
}

/// Aggregates for one sample size.
#[derive(Clone, Debug, Serialize)]
pub struct GridPoint {
    pub n: usize,
    pub max_intrinsic_dim: usize,
    pub prior_covers_truth: bool,
    pub summary: PosteriorSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub truth_family: String,
    pub smoothness: f64,
    pub holder_bound: f64,
    pub reference_slope: f64,
    pub points: Vec<GridPoint>,
}

impl ExperimentReport {
    /// Log-log slope of the median function error between the first and
    /// last grid points.
    pub fn slope(&self) -> Option<f64> {
        let (a, b) = (self.points.first()?, self.points.last()?);
        if a.n == b.n {
            return None;
        }
        Some(
            (b.summary.median_function_error.ln() - a.summary.median_function_error.ln())
                / ((b.n as f64).ln() - (a.n as f64).ln()),
        )
    }
}

pub const CONTRACTION_HEADER: &str =
    "n,median_function_error,mean_function_error,prob_dim_below,median_d1,median_d2,median_d3,reference";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_contraction_csv(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{CONTRACTION_HEADER}")?;
    let first = report.points.first();
    for p in &report.points {
        // Reference curve n^{slope}, anchored at the first median error.
        let reference = first.map(|f| {
            f.summary.median_function_error * (p.n as f64 / f.n as f64).powf(report.reference_slope)
        });
        let s = &p.summary;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.n,
            fmt_f64(s.median_function_error),
            fmt_f64(s.mean_function_error),
            fmt_f64(s.prob_dim_below),
            opt(s.median_d1),
            opt(s.median_d2),
            opt(s.median_d3),
            opt(reference)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Rebuild the figures of a run from its `contraction.csv`.
pub fn plots_from_contraction(csv: &Path) -> Result<Vec<(String, String)>> {
    let r = BufReader::new(File::open(csv)?);
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != CONTRACTION_HEADER {
                return Err(Error::Parse(format!("unexpected header in {}", csv.display())));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        rows.push(line.split(',').map(|c| c.trim().parse::<f64>().ok()).collect());
    }
    let col = |k: usize| -> Vec<(f64, f64)> {
        rows.iter()
            .filter_map(|r| Some((r.first().copied().flatten()?, r.get(k).copied().flatten()?)))
            .collect()
    };
    let plot = |title: &str, y: &str, log_y: bool, series: Vec<Series>| LinePlot {
        title: title.into(),
        x_label: "n".into(),
        y_label: y.into(),
        log_x: true,
        log_y,
        series,
    };
    let s = |name: &str, points, dashed| Series { name: name.into(), points, dashed };
    Ok(vec![
        (
            "function_error.svg".into(),
            plot(
                "Median posterior function error",
                "error",
                true,
                vec![s("median error", col(1), false), s("reference rate", col(7), true)],
            )
            .render(),
        ),
        (
            "prob_dim_below.svg".into(),
            plot("Posterior P(Γ < d*)", "probability", false, vec![s("P(Γ < d*)", col(3), false)]).render(),
        ),
        (
            "median_d2.svg".into(),
            plot("Median d2 over draws with Γ ≥ d*", "d2", false, vec![s("median d2", col(5), false)]).render(),
        ),
    ])
}

/// Run the experiment, writing one subdirectory per sample size plus
/// `contraction.csv` and the figures under `out`. On a chain failure the
/// finished grid points are still written before the error is returned.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, exec: Execution) -> Result<ExperimentReport> {
    cfg.validate()?;
    let setting = cfg.setting()?;
    let truth = cfg.truth()?;
    let mut setting = setting;
    if setting.kind == SettingKind::RandomDesign && cfg.truncation.is_none() {
        setting.truncation = 3.0 * truth.holder_bound;
    }
    let beta = truth.smoothness;
    let mut report = ExperimentReport {
        truth_family: truth.core.name().to_string(),
        smoothness: beta,
        holder_bound: truth.holder_bound,
        reference_slope: -beta / (2.0 * beta + truth.intrinsic_dim as f64),
        points: Vec::new(),
    };
    fs::create_dir_all(out)?;
    let integrator = BallIntegrator::new(cfg.ambient_dim, cfg.metric_points, cfg.seed ^ 0x1e7)?;
    let mut failure = None;
    for (k, &n) in cfg.n_grid.iter().enumerate() {
        match run_grid_point(cfg, &setting, &truth, &integrator, k, n, out, exec) {
            Ok(p) => report.points.push(p),
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    write_contraction_csv(&report, &out.join("contraction.csv"))?;
    for (name, svg) in plots_from_contraction(&out.join("contraction.csv"))? {
        fs::write(out.join(name), svg)?;
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

pub fn grid_dir(out: &Path, n: usize) -> PathBuf {
    out.join(format!("n_{n}"))
}

#[allow(clippy::too_many_arguments)]
fn run_grid_point(
    cfg: &ExperimentConfig,
    setting: &Setting,
    truth: &GroundTruth,
    integrator: &BallIntegrator,
    k: usize,
    n: usize,
    out: &Path,
    exec: Execution,
) -> Result<GridPoint> {
    let dir = grid_dir(out, n);
    fs::create_dir_all(&dir)?;
    let data_seed = cfg.seed.wrapping_add(1000 + k as u64);
    let data = sample_dataset(truth, setting, n, &mut stream_rng(data_seed, 0xda7a))?;
    save_dataset(&data, &dir.join("data.csv"))?;
    save_json(
        &DatasetMeta {
            kind: setting.kind,
            noise_sd: setting.kind.is_regression().then_some(setting.noise_sd),
            truncation: (setting.kind == SettingKind::RandomDesign).then_some(setting.truncation),
            seed: data_seed,
            truth_family: truth.core.name().to_string(),
            ambient_dim: cfg.ambient_dim,
            intrinsic_dim: cfg.intrinsic_dim,
            n,
            orientation: truth.orientation.to_row_major(),
        },
        &dir.join("data.json"),
    )?;
    let prior = HierarchicalPrior::for_sample_size(n, cfg.ambient_dim, cfg.c_int, cfg.rescale_rate, cfg.dim_prior)?;
    let covers = prior.covers_truth(cfg.intrinsic_dim, n);
    if !covers {
        log::warn!("prior mass of d* = {} is below 1/n at n = {n}", cfg.intrinsic_dim);
    }
    let chain_cfg = ChainConfig { seed: cfg.chain.seed.wrapping_add(k as u64), ..cfg.chain.clone() };
    let chains = run_chains(&data, setting, &prior, &chain_cfg, cfg.chains, exec)?;
    if cfg.write_chains {
        let mut w = BufWriter::new(File::create(dir.join("chains.jsonl"))?);
        write_chains_jsonl(&chains, &mut w)?;
        w.flush()?;
    }
    let summary = posterior_functionals(&chains, &data, truth, setting, integrator)?;
    let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
    write_metrics_csv(&summary.metric_rows(), &mut w)?;
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("subspace.csv"))?);
    summary.write_subspace_csv(&mut w)?;
    w.flush()?;
    Ok(GridPoint { n, max_intrinsic_dim: prior.max_dim(), prior_covers_truth: covers, summary })
}
