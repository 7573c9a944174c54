//! Sweep and convex-suite configuration files (JSON).

use std::path::{Path, PathBuf};

use modelopt::{ProblemKind, ReferenceSample};
use serde::{Deserialize, Serialize};

use crate::error::BenchError;
use crate::method::Method;

/// Lower and upper end of the default `θ` grid.
pub const THETA_MIN: f64 = 1e-2;
pub const THETA_MAX: f64 = 1e1;
pub const DEFAULT_GRID_POINTS: usize = 25;
pub const DEFAULT_EPOCHS: u64 = 400;
pub const DEFAULT_ALPHA: f64 = 1.0;
/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "MODELOPT_WORKERS";

/// `points` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

pub fn default_theta_grid() -> Vec<f64> {
    log_grid(THETA_MIN, THETA_MAX, DEFAULT_GRID_POINTS)
}

/// Default grid followed by decades `1e2 … 1e8`.
pub fn extended_theta_grid() -> Vec<f64> {
    let mut g = default_theta_grid();
    g.extend((2..=8).map(|e| 10f64.powi(e)));
    g
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub model: ProblemKind,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    pub cond_kappa: f64,
    pub p_fail: f64,
}

fn default_m() -> usize {
    modelopt::problems::DEFAULT_M
}
fn default_n() -> usize {
    modelopt::problems::DEFAULT_N
}
fn default_epochs() -> u64 {
    DEFAULT_EPOCHS
}
fn default_alpha() -> f64 {
    DEFAULT_ALPHA
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    #[default]
    Default,
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub problems: Vec<ProblemSpec>,
    pub methods: Vec<Method>,
    /// Explicit grid; when absent the `grid` preset is used.
    #[serde(default)]
    pub theta_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub grid: GridKind,
    pub seeds: Vec<u64>,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 means the environment default.
    #[serde(default)]
    pub workers: usize,
    /// Reference-policy sample: independent draw (default) or the update sample.
    #[serde(default)]
    pub reference_sample: ReferenceSample,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let cfg: SweepConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn thetas(&self) -> Vec<f64> {
        match &self.theta_grid {
            Some(g) => g.clone(),
            None => match self.grid {
                GridKind::Default => default_theta_grid(),
                GridKind::Extended => extended_theta_grid(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.problems.is_empty() {
            return bad("at least one problem is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be > 0, got {}", self.alpha));
        }
        let grid = self.thetas();
        if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("theta grid must be nonempty and strictly positive".into());
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("theta grid must be sorted in increasing order".into());
        }
        for p in &self.problems {
            if p.m == 0 || p.n == 0 || !(p.cond_kappa >= 1.0) || !(0.0..1.0).contains(&p.p_fail) {
                return bad(format!("invalid problem {p:?}"));
            }
            if self.methods.contains(&Method::Md) && !matches!(p.model, ProblemKind::R1 | ProblemKind::R2) {
                return bad(format!("MD is only available for r1 and r2, not {}", p.model));
            }
            if p.model == ProblemKind::LsConvex && self.methods.iter().any(|m| m.is_prox_linear()) {
                return bad("prox-linear methods need an absolute-value loss".into());
            }
        }
        Ok(())
    }
}

/// Worker count: explicit value, else the environment variable, else 0 (all cores).
pub fn resolve_workers(explicit: usize) -> usize {
    if explicit > 0 {
        return explicit;
    }
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}

fn default_horizons() -> Vec<u64> {
    vec![100, 1_000, 10_000]
}
fn default_convex_alpha() -> f64 {
    crate::convex::DEFAULT_CONVEX_ALPHA
}
fn default_convex_m() -> usize {
    50
}
fn default_convex_n() -> usize {
    10
}
fn default_convex_p_fail() -> f64 {
    0.2
}
fn default_convex_kappa() -> f64 {
    10.0
}
fn default_policies() -> Vec<modelopt::PolicyKind> {
    modelopt::PolicyKind::ALL.to_vec()
}
fn default_convex_output() -> PathBuf {
    PathBuf::from("results/convex_report.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvexConfig {
    #[serde(default = "default_convex_m")]
    pub m: usize,
    #[serde(default = "default_convex_n")]
    pub n: usize,
    /// Column-scaling range; a spread spectrum keeps the problem far from
    /// strongly convex at desk scale.
    #[serde(default = "default_convex_kappa")]
    pub cond_kappa: f64,
    #[serde(default = "default_convex_p_fail")]
    pub p_fail: f64,
    /// Iteration budgets `K`; each must be a multiple of `m`.
    #[serde(default = "default_horizons")]
    pub horizons: Vec<u64>,
    #[serde(default = "default_policies")]
    pub policies: Vec<modelopt::PolicyKind>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_convex_alpha")]
    pub alpha: f64,
    /// Start every run at the minimizer (zero-gap sanity mode).
    #[serde(default)]
    pub start_at_solution: bool,
    #[serde(default = "default_convex_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub workers: usize,
}

impl ConvexConfig {
    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let cfg: ConvexConfig =
            serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.m == 0 || self.n == 0 || self.seeds.is_empty() || self.policies.is_empty() {
            return bad("convex suite needs m, n >= 1 and nonempty seeds and policies".into());
        }
        if self.horizons.is_empty() || self.horizons.iter().any(|k| *k == 0 || k % self.m as u64 != 0) {
            return bad(format!("every horizon must be a positive multiple of m = {}", self.m));
        }
        if !(self.alpha > 0.0) || !(self.cond_kappa >= 1.0) || !(0.0..1.0).contains(&self.p_fail) {
            return bad("invalid alpha, cond_kappa or p_fail".into());
        }
        Ok(())
    }
}
