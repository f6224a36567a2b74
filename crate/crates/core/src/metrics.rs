//! Hellinger and L² distances over the unit ball, with Monte-Carlo errors.

use std::io::Write;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::par::stream_rng;
use crate::qmc::ball_points;

/// Default number of integration points for `d ≤ 3`. For larger `d` the
/// rejection step keeps only a fraction `vol(U_d)/2^d` of the cube points,
/// so the point budget should grow roughly like `2^d`.
pub const DEFAULT_QMC_POINTS: usize = 1 << 14;

/// `π^{d/2} / Γ(d/2 + 1)`.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::PI.powf(h) / gamma(h + 1.0)
}

/// A value with its Monte-Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// A fixed randomised-Halton point set in the unit ball, shared by every
/// integral of a run.
#[derive(Clone, Debug)]
pub struct BallIntegrator {
    dim: usize,
    points: Vec<Vec<f64>>,
    volume: f64,
}

impl BallIntegrator {
    pub fn new(dim: usize, n_qmc: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("ball integrator needs d >= 1".into()));
        }
        if n_qmc < 2 {
            return Err(Error::InvalidArgument("need at least two integration points".into()));
        }
        let mut rng = stream_rng(seed, 0x9e37);
        Ok(BallIntegrator { dim, points: ball_points(dim, n_qmc, &mut rng), volume: ball_volume(dim) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// `∫ h` from values of `h` at the points.
    pub fn integrate_values(&self, values: &[f64]) -> Estimate {
        let n = values.len() as f64;
        let m = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        Estimate { value: self.volume * m, std_error: self.volume * (var / n).sqrt() }
    }

    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, h: F) -> Estimate {
        let values: Vec<f64> = self.points.iter().map(|x| h(x)).collect();
        self.integrate_values(&values)
    }
}

fn check_density(values: &[f64], which: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| **v < -1e-12 || v.is_nan()) {
        return Err(Error::InvalidArgument(format!("{which} density takes the value {v}")));
    }
    Ok(())
}

/// Hellinger distance from density values at the integrator's points.
pub fn hellinger_values(p: &[f64], p2: &[f64], integrator: &BallIntegrator) -> Result<Estimate> {
    if p.len() != integrator.len() || p2.len() != integrator.len() {
        return Err(Error::DimensionMismatch("density values must match the integration points".into()));
    }
    check_density(p, "first")?;
    check_density(p2, "second")?;
    let sq: Vec<f64> = p
        .iter()
        .zip(p2)
        .map(|(a, b)| (a.max(0.0).sqrt() - b.max(0.0).sqrt()).powi(2))
        .collect();
    let h2 = integrator.integrate_values(&sq);
    let value = h2.value.max(0.0).sqrt().min(std::f64::consts::SQRT_2);
    let std_error = if value > 0.0 { h2.std_error / (2.0 * value) } else { h2.std_error.sqrt() };
    Ok(Estimate { value, std_error })
}

/// `h(p, p′) = ‖√p − √p′‖₂` over the unit ball.
pub fn hellinger<F, G>(p: F, p2: G, integrator: &BallIntegrator) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
{
    let a: Vec<f64> = integrator.points().iter().map(|x| p(x)).collect();
    let b: Vec<f64> = integrator.points().iter().map(|x| p2(x)).collect();
    hellinger_values(&a, &b, integrator)
}

/// `sqrt(n⁻¹ Σ (f_i − g_i)²)`.
pub fn empirical_l2(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", f.len(), g.len())));
    }
    if f.is_empty() {
        return Err(Error::EmptyData);
    }
    let ss: f64 = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / f.len() as f64).sqrt())
}

/// Result of [`l2_design`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DesignL2 {
    pub estimate: Estimate,
    /// Smallest design density seen on the integration points.
    pub min_density: f64,
    pub below_floor: bool,
}

/// `‖f^Q − g^Q‖_{2,G}` from values at the integrator's points.
pub fn l2_design_values(
    f: &[f64],
    g: &[f64],
    truncation: f64,
    design: &[f64],
    floor: f64,
    integrator: &BallIntegrator,
) -> Result<DesignL2> {
    if !(truncation > 0.0) {
        return Err(Error::InvalidArgument(format!("truncation must be positive, got {truncation}")));
    }
    let n = integrator.len();
    if f.len() != n || g.len() != n || design.len() != n {
        return Err(Error::DimensionMismatch("values must match the integration points".into()));
    }
    let min_density = design.iter().copied().fold(f64::INFINITY, f64::min);
    let below_floor = min_density < floor;
    if below_floor {
        log::warn!("design density drops to {min_density} below the floor {floor}");
    }
    let sq: Vec<f64> = (0..n)
        .map(|i| {
            let diff = f[i].clamp(-truncation, truncation) - g[i].clamp(-truncation, truncation);
            diff * diff * design[i]
        })
        .collect();
    let i2 = integrator.integrate_values(&sq);
    let value = i2.value.max(0.0).sqrt();
    let std_error = if value > 0.0 { i2.std_error / (2.0 * value) } else { i2.std_error.sqrt() };
    Ok(DesignL2 { estimate: Estimate { value, std_error }, min_density, below_floor })
}

/// `‖f^Q − g^Q‖_{2,G}` with design density `G`; `f`, `g` and `G` are only
/// evaluated inside the unit ball.
pub fn l2_design<F, G, H>(
    f: F,
    g: G,
    truncation: f64,
    design: H,
    floor: f64,
    integrator: &BallIntegrator,
) -> Result<DesignL2>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> f64,
    H: Fn(&[f64]) -> f64,
{
    let pts = integrator.points();
    let fv: Vec<f64> = pts.iter().map(|x| f(x)).collect();
    let gv: Vec<f64> = pts.iter().map(|x| g(x)).collect();
    let dv: Vec<f64> = pts.iter().map(|x| design(x)).collect();
    l2_design_values(&fv, &gv, truncation, &dv, floor, integrator)
}

/// One row of a metrics table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub draw_index: usize,
    pub metric_name: String,
    pub value: f64,
    /// Monte-Carlo standard error, when the metric has one.
    pub mc_se: Option<f64>,
}

pub const METRICS_HEADER: &str = "draw_index,metric_name,value,mc_se";

pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], mut w: W) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in rows {
        let se = r.mc_se.map(fmt_f64).unwrap_or_default();
        writeln!(w, "{},{},{},{}", r.draw_index, r.metric_name, fmt_f64(r.value), se)?;
    }
    Ok(())
}
