//! Command-line front end for `subspace-gp`.
//!
//! Every subcommand resolves its configuration (config file, then flags,
//! then `--set key=value`), writes `config.json` into a fresh run directory,
//! copies its input files, runs, and finishes with `summary.json`.
//! Exit codes: 0 on success, 2 on configuration errors (no run directory is
//! created), 3 on numerical or runtime failure.

pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;
use subspace_gp::experiment::ExperimentConfig;
use subspace_gp::model::SettingKind;
use subspace_gp::par::{self, Execution};

use commands::*;
use config::Overrides;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] subspace_gp::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Core(e) if e.is_config() => EXIT_CONFIG,
            CliError::Core(_) => EXIT_NUMERICAL,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "subspace-gp", version, about = "Projected Gaussian-process priors with random subspace selection")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file (a previous run's config.json is accepted too).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Run directory [default: runs/<subcommand>].
    #[arg(long, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override any configuration key, e.g. `--set chain.n_iter=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Draw (Γ, A, Θ), and optionally the field, from the hierarchical prior.
    PriorSample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        field_points: Option<usize>,
    },
    /// Simulate a dataset from a single-index or multi-index truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_setting)]
        setting: Option<SettingKind>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        dstar: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run posterior chains on a dataset.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, value_parser = parse_setting)]
        setting: Option<SettingKind>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        n_iter: Option<usize>,
        #[arg(long)]
        burn_in: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
    },
    /// Subspace losses of every draw in a chain file against a true subspace.
    Subspace {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        chains: Option<PathBuf>,
        /// Dataset sidecar (data.json) with the true orientation.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Contraction rates and the quantities derived from them.
    Rates {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        dstar: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
    },
    /// Haar mass of orientation neighbourhoods and ε-net coverage.
    GeomCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        dstar: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n_mc: Option<usize>,
        #[arg(long)]
        net: bool,
    },
    /// Concentration function of the rescaled intrinsic process.
    Concentration {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dstar: Option<usize>,
        #[arg(long)]
        a: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        n_mc: Option<usize>,
    },
    /// Contraction experiment over a grid of sample sizes.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_setting)]
        setting: Option<SettingKind>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        dstar: Option<usize>,
        /// Comma-separated sample sizes.
        #[arg(long, value_delimiter = ',')]
        n_grid: Option<Vec<usize>>,
        #[arg(long)]
        chains: Option<usize>,
    },
}

fn parse_setting(s: &str) -> Result<SettingKind, String> {
    serde_json::from_value(Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown setting {s:?} (density, fixed_design, random_design)"))
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    match cli.command {
        Cmd::PriorSample { common, d, n, count, field_points } => drive::<PriorSampleConfig>(&common, |o| {
            o.put("ambient_dim", d)?;
            o.put("n", n)?;
            o.put("count", count)?;
            o.put("field_points", field_points)
        }),
        Cmd::Simulate { common, setting, d, dstar, n } => drive::<SimulateConfig>(&common, |o| {
            o.put("setting", setting)?;
            o.put("ambient_dim", d)?;
            o.put("intrinsic_dim", dstar)?;
            o.put("n", n)
        }),
        Cmd::Fit { common, data, setting, chains, n_iter, burn_in, thin } => drive::<FitConfig>(&common, |o| {
            o.put("data", data)?;
            o.put("setting", setting)?;
            o.put("chains", chains)?;
            o.put("chain.n_iter", n_iter)?;
            o.put("chain.burn_in", burn_in)?;
            o.put("chain.thin", thin)
        }),
        Cmd::Subspace { common, chains, truth } => drive::<SubspaceConfig>(&common, |o| {
            o.put("chains", chains)?;
            o.put("truth", truth)
        }),
        Cmd::Rates { common, n, beta, dstar, d } => drive::<RatesConfig>(&common, |o| {
            o.put("n", n)?;
            o.put("beta", beta)?;
            o.put("dstar", dstar)?;
            o.put("ambient_dim", d)
        }),
        Cmd::GeomCheck { common, d, dstar, eps, n_mc, net } => drive::<GeomCheckConfig>(&common, |o| {
            o.put("ambient_dim", d)?;
            o.put("intrinsic_dim", dstar)?;
            o.put("eps", eps)?;
            o.put("n_mc", n_mc)?;
            o.put("net", net.then_some(true))
        }),
        Cmd::Concentration { common, dstar, a, eps, n_mc } => drive::<ConcentrationConfig>(&common, |o| {
            o.put("intrinsic_dim", dstar)?;
            o.put("a", a)?;
            o.put("eps", eps)?;
            o.put("n_mc", n_mc)
        }),
        Cmd::Experiment { common, setting, d, dstar, n_grid, chains } => drive::<ExperimentConfig>(&common, |o| {
            o.put("setting", setting)?;
            o.put("ambient_dim", d)?;
            o.put("intrinsic_dim", dstar)?;
            o.put("n_grid", n_grid)?;
            o.put("chains", chains)
        }),
    }
}

/// Resolve the typed configuration and the run directory without touching
/// the file system beyond reading inputs.
fn prepare<C: RunCommand>(
    common: &Common,
    fill: impl FnOnce(&mut Overrides) -> Result<(), CliError>,
) -> Result<(C, PathBuf), CliError> {
    let mut table = config::load_table(common.config.as_deref())?;
    if let Some(v) = table.remove("subcommand") {
        if v.as_str() != Some(C::NAME) {
            return Err(CliError::Config(format!("config is for subcommand {v}, not {}", C::NAME)));
        }
    }
    let mut o = Overrides::default();
    fill(&mut o)?;
    o.put("seed", common.seed)?;
    for s in &common.set {
        o.0.push(config::parse_assignment(s)?);
    }
    for (k, v) in o.0 {
        config::set_path(&mut table, &k, v)?;
    }
    let table_dir = match table.remove("output_dir") {
        None => None,
        Some(toml::Value::String(s)) => Some(PathBuf::from(s)),
        Some(v) => return Err(CliError::Config(format!("output_dir must be a string, got {v}"))),
    };
    let dir = common
        .output_dir
        .clone()
        .or(table_dir)
        .unwrap_or_else(|| Path::new("runs").join(C::NAME));
    let mut cfg: C = config::typed(table)?;
    cfg.resolve()?;
    Ok((cfg, dir))
}

#[derive(Serialize)]
struct Versions {
    subspace_gp: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    subcommand: &'static str,
    status: &'a str,
    exit_code: i32,
    error: Option<String>,
    wall_clock_seconds: f64,
    threads: usize,
    parallel: bool,
    versions: Versions,
    outputs: Vec<String>,
    results: Value,
}

fn drive<C: RunCommand>(common: &Common, fill: impl FnOnce(&mut Overrides) -> Result<(), CliError>) -> i32 {
    let start = Instant::now();
    let (cfg, dir) = match prepare::<C>(common, fill) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = setup_run_dir::<C>(&cfg, &dir, common.config.as_deref()) {
        eprintln!("error: cannot prepare run directory {}: {e}", dir.display());
        return EXIT_CONFIG;
    }
    let threads = par::init_threads_from_env();
    let exec = Execution::Parallel;
    let result = cfg.execute(&dir, exec);
    let (status, code, error, outcome) = match result {
        Ok(o) => ("ok", EXIT_OK, None, o),
        Err(e) => {
            eprintln!("error: {e}");
            ("failed", e.exit_code().max(EXIT_NUMERICAL), Some(e.to_string()), Outcome::default())
        }
    };
    let summary = RunSummary {
        subcommand: C::NAME,
        status,
        exit_code: code,
        error,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        threads,
        parallel: exec.is_parallel(),
        versions: Versions { subspace_gp: subspace_gp::VERSION, cli: env!("CARGO_PKG_VERSION") },
        outputs: list_outputs(&dir),
        results: outcome.results,
    };
    if let Err(e) = subspace_gp::io::save_json(&summary, &dir.join("summary.json")) {
        eprintln!("error: cannot write summary.json: {e}");
        return EXIT_NUMERICAL;
    }
    if let Some(s) = outcome.stdout {
        println!("{s}");
    } else if code == EXIT_OK {
        println!("{}", dir.display());
    }
    code
}

fn setup_run_dir<C: RunCommand>(cfg: &C, dir: &Path, config_file: Option<&Path>) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Core(e.into());
    fs::create_dir_all(dir).map_err(io)?;
    let mut resolved = serde_json::to_value(cfg).map_err(|e| CliError::Core(e.into()))?;
    if let Value::Object(map) = &mut resolved {
        map.insert("subcommand".into(), Value::String(C::NAME.into()));
        map.insert("output_dir".into(), Value::String(dir.display().to_string()));
    }
    subspace_gp::io::save_json(&resolved, &dir.join("config.json"))?;
    let inputs: Vec<PathBuf> = config_file.map(Path::to_path_buf).into_iter().chain(cfg.inputs()).collect();
    if !inputs.is_empty() {
        let target = dir.join("inputs");
        fs::create_dir_all(&target).map_err(io)?;
        for p in inputs {
            let name = p.file_name().ok_or_else(|| CliError::Config(format!("{} is not a file", p.display())))?;
            fs::copy(&p, target.join(name)).map_err(io)?;
        }
    }
    Ok(())
}

/// Files under the run directory other than the config, summary and inputs.
fn list_outputs(dir: &Path) -> Vec<String> {
    fn walk(root: &Path, cur: &Path, out: &mut Vec<String>) {
        let Ok(entries) = fs::read_dir(cur) else { return };
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                if cur == root && e.file_name() == "inputs" {
                    continue;
                }
                walk(root, &p, out);
            } else if let Ok(rel) = p.strip_prefix(root) {
                let rel = rel.to_string_lossy().replace('\\', "/");
                if rel != "config.json" && rel != "summary.json" {
                    out.push(rel);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
