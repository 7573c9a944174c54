//! Convex-mode rate suite: min-gap of the constant-γ method against the horizon.

use std::path::PathBuf;

use modelopt::solver::{convex_gap_trace, SolverConfig, STOP_TOLERANCE};
use modelopt::{par, ModelKind, PolicyKind, ProblemInstance, ProblemKind, StepsizeParams};
use serde::{Deserialize, Serialize};

use crate::config::{resolve_workers, ConvexConfig};
use crate::error::BenchError;

/// Scale `α` in `γ = α√K`.
pub const DEFAULT_CONVEX_ALPHA: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexRun {
    pub policy: PolicyKind,
    pub horizon: u64,
    pub seed: u64,
    pub min_gap: f64,
    pub converged: bool,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonStats {
    pub horizon: u64,
    pub mean_min_gap: f64,
    pub stderr_min_gap: f64,
    pub runs: usize,
    pub converged_runs: usize,
    pub diverged_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub policy: PolicyKind,
    pub horizons: Vec<HorizonStats>,
    /// Least-squares slope of `ln(mean min-gap)` on `ln K`; `null` when some
    /// mean is zero or not finite, or fewer than two horizons are given.
    pub slope: Option<f64>,
    pub all_converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexReport {
    pub artifact: String,
    pub version: String,
    pub config: ConvexConfig,
    pub policies: Vec<PolicyReport>,
    pub runs: Vec<ConvexRun>,
}

/// Least-squares slope of `y` on `x`; `None` with fewer than two distinct `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Log–log slope of `means` against `horizons`, undefined for non-positive means.
pub fn log_log_slope(horizons: &[u64], means: &[f64]) -> Option<f64> {
    if means.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return None;
    }
    let x: Vec<f64> = horizons.iter().map(|&k| (k as f64).ln()).collect();
    let y: Vec<f64> = means.iter().map(|v| v.ln()).collect();
    fit_slope(&x, &y).filter(|s| s.is_finite())
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn run_one(cfg: &ConvexConfig, problem: &ProblemInstance, policy: PolicyKind, horizon: u64, seed: u64) -> Result<ConvexRun, BenchError> {
    let x_star = problem.x_star.clone().ok_or_else(|| BenchError::Config("convex instance lacks a minimizer".into()))?;
    let epochs = horizon / problem.m as u64;
    let mut sc = SolverConfig::new(problem, ModelKind::SUBGRADIENT, policy, StepsizeParams::convex(cfg.alpha, 0), epochs, seed);
    sc.early_stop = false;
    if cfg.start_at_solution {
        sc.initial = Some(x_star.clone());
    }
    let trace = convex_gap_trace(problem, &sc, Some(&x_star))?;
    let diverged = trace.len() < epochs as usize + 1;
    let min_gap = if diverged { f64::INFINITY } else { *trace.last().expect("trace includes x¹") };
    let f_star = problem.objective(&x_star)?;
    let threshold = (1.2 * problem.f_at_xhat).max(problem.f_at_xhat + STOP_TOLERANCE);
    let converged = !diverged && f_star + min_gap <= threshold;
    Ok(ConvexRun { policy, horizon, seed, min_gap, converged, diverged })
}

pub fn convex_suite(cfg: &ConvexConfig) -> Result<ConvexReport, BenchError> {
    cfg.validate()?;
    par::with_workers(resolve_workers(cfg.workers), || {
        let instances = par::map(&cfg.seeds, |&s| {
            ProblemInstance::generate(cfg.m, cfg.n, cfg.cond_kappa, cfg.p_fail, ProblemKind::LsConvex, s)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let mut jobs = Vec::new();
        for &policy in &cfg.policies {
            for &k in &cfg.horizons {
                for si in 0..cfg.seeds.len() {
                    jobs.push((policy, k, si));
                }
            }
        }
        let runs = par::map(&jobs, |&(policy, k, si)| run_one(cfg, &instances[si], policy, k, cfg.seeds[si]))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;

        let policies = cfg
            .policies
            .iter()
            .map(|&policy| {
                let horizons: Vec<HorizonStats> = cfg
                    .horizons
                    .iter()
                    .map(|&k| {
                        let sel: Vec<&ConvexRun> = runs.iter().filter(|r| r.policy == policy && r.horizon == k).collect();
                        let gaps: Vec<f64> = sel.iter().map(|r| r.min_gap).collect();
                        let (mean, se) = mean_stderr(&gaps);
                        HorizonStats {
                            horizon: k,
                            mean_min_gap: mean,
                            stderr_min_gap: se,
                            runs: sel.len(),
                            converged_runs: sel.iter().filter(|r| r.converged).count(),
                            diverged_runs: sel.iter().filter(|r| r.diverged).count(),
                        }
                    })
                    .collect();
                let means: Vec<f64> = horizons.iter().map(|h| h.mean_min_gap).collect();
                PolicyReport {
                    policy,
                    slope: log_log_slope(&cfg.horizons, &means),
                    all_converged: horizons.iter().all(|h| h.converged_runs == h.runs),
                    horizons,
                }
            })
            .collect();
        Ok(ConvexReport {
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.clone(),
            policies,
            runs,
        })
    })
}

/// Runs the suite and writes the JSON report to `cfg.output`.
pub fn write_convex_report(cfg: &ConvexConfig) -> Result<PathBuf, BenchError> {
    let report = convex_suite(cfg)?;
    let path = cfg.output.clone();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    std::fs::write(&path, text).map_err(|e| BenchError::io(&path, e))?;
    Ok(path)
}
