//! Stochastic mirror descent with radial polynomial kernels
//! `u(x) = ‖x‖^q / q + ‖x‖² / 2`.
//!
//! The mirror map `∇u(x) = (‖x‖^{q−2} + 1) x` is radial, so its inverse reduces
//! to the scalar equation `r (r^{q−2} + 1) = ‖z‖`, which is strictly increasing
//! in `r ≥ 0` and solved by safeguarded Newton iteration.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::linalg::{axpy, norm};
use crate::model::{model_eval, ModelKind};
use crate::problems::{initial_point, ProblemInstance, ProblemKind};
use crate::solver::{RunRecord, DEFAULT_STOP_FACTOR, STOP_TOLERANCE};
use crate::error::DIVERGENCE_CAP;
use crate::rng::{SampleStream, UPDATE_STREAM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub q: u32,
}

impl KernelSpec {
    pub fn new(q: u32) -> Result<Self> {
        if q < 2 {
            return config(format!("kernel degree must be >= 2, got {q}"));
        }
        Ok(KernelSpec { q })
    }

    /// Degree 4 for `r1`, 10 for `r2`.
    pub fn default_for(kind: ProblemKind) -> Result<Self> {
        match kind {
            ProblemKind::R1 => Ok(KernelSpec { q: 4 }),
            ProblemKind::R2 => Ok(KernelSpec { q: 10 }),
            other => config(format!("no mirror kernel for {other}")),
        }
    }

    /// `φ(r) = r (r^{q−2} + 1)`
    pub fn radial(&self, r: f64) -> f64 {
        r * (r.powi(self.q as i32 - 2) + 1.0)
    }

    fn radial_derivative(&self, r: f64) -> f64 {
        (self.q as f64 - 1.0) * r.powi(self.q as i32 - 2) + 1.0
    }
}

pub fn kernel_grad(kernel: &KernelSpec, x: &[f64]) -> Vec<f64> {
    let s = norm(x).powi(kernel.q as i32 - 2) + 1.0;
    x.iter().map(|v| s * v).collect()
}

/// Root of `φ(r) = target`, `target ≥ 0`.
pub fn radial_root(kernel: &KernelSpec, target: f64) -> f64 {
    if target <= 0.0 {
        return 0.0;
    }
    // φ(r) ≥ r and φ(r) ≥ r^{q−1} bracket the root
    let mut lo = 0.0;
    let mut hi = target.min(target.powf(1.0 / (kernel.q as f64 - 1.0)));
    if kernel.radial(hi) < target {
        hi = target;
    }
    let tol = 1e-12 * (1.0 + target);
    let mut r = hi;
    for _ in 0..200 {
        let f = kernel.radial(r) - target;
        if f.abs() <= tol {
            break;
        }
        if f > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let newton = r - f / kernel.radial_derivative(r);
        r = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    r
}

/// `y` with `kernel_grad(y) = z`.
pub fn kernel_grad_inverse(kernel: &KernelSpec, z: &[f64]) -> Vec<f64> {
    let nz = norm(z);
    if nz == 0.0 {
        return vec![0.0; z.len()];
    }
    let r = radial_root(kernel, nz);
    z.iter().map(|v| v * (r / nz)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorConfig {
    pub kernel: KernelSpec,
    /// `θ`; the step is `η = 1/(θ√K)`.
    pub step_scale: f64,
    pub epochs: u64,
    pub seed: u64,
    pub stop_factor: f64,
    pub early_stop: bool,
    pub record_stride: u64,
    pub divergence_cap: f64,
    pub record_iterates: bool,
    pub initial: Option<Vec<f64>>,
    /// Accept any instance kind (used for the `q = 2` equivalence checks).
    pub allow_any_model: bool,
}

impl MirrorConfig {
    pub fn new(problem: &ProblemInstance, kernel: KernelSpec, step_scale: f64, epochs: u64, seed: u64) -> Self {
        MirrorConfig {
            kernel,
            step_scale,
            epochs,
            seed,
            stop_factor: DEFAULT_STOP_FACTOR,
            early_stop: true,
            record_stride: problem.m as u64,
            divergence_cap: DIVERGENCE_CAP,
            record_iterates: false,
            initial: None,
            allow_any_model: false,
        }
    }
}

/// Mirror descent `x⁺ = (∇u)⁻¹(∇u(x) − η g)` with stochastic subgradients,
/// sharing the sampling stream, stopping rule and record layout of
/// [`crate::solver::run`]. `gamma_series` holds `1/η`.
pub fn run_md(problem: &ProblemInstance, cfg: &MirrorConfig) -> Result<RunRecord> {
    if !cfg.allow_any_model && !matches!(problem.kind, ProblemKind::R1 | ProblemKind::R2) {
        return config(format!("mirror descent kernels exist for r1 and r2 only, got {}", problem.kind));
    }
    if !(cfg.step_scale > 0.0 && cfg.step_scale.is_finite()) {
        return config("step scale must be positive");
    }
    if cfg.epochs == 0 || cfg.record_stride == 0 || !(cfg.stop_factor > 1.0) {
        return config("invalid mirror descent run configuration");
    }
    if let Some(x) = &cfg.initial {
        if x.len() != problem.n {
            return config("initial point has the wrong dimension");
        }
    }
    let horizon = cfg.epochs * problem.m as u64;
    let eta = 1.0 / (cfg.step_scale * (horizon as f64).sqrt());
    let m = problem.m as u64;
    let threshold = (cfg.stop_factor * problem.f_at_xhat).max(problem.f_at_xhat + STOP_TOLERANCE);
    let mut stream = SampleStream::new(cfg.seed, UPDATE_STREAM, problem.m);
    let mut x = cfg.initial.clone().unwrap_or_else(|| initial_point(problem.kind, problem.n, cfg.seed));

    let mut rec = RunRecord {
        iterations_run: 0,
        converged: false,
        diverged: false,
        iters_to_converge: None,
        objective_per_epoch: Vec::new(),
        max_iterate_norm: norm(&x),
        gamma_series: Vec::new(),
        iterate_norm_series: Vec::new(),
        iterates: Vec::new(),
        final_x: Vec::new(),
        final_objective: f64::NAN,
        step_bound_violations: 0,
        max_step_ratio: 0.0,
        reference_draws: 0,
        divergence_reason: None,
    };
    let mut failure = None;
    let objective = |x: &[f64]| -> std::result::Result<f64, String> {
        match problem.objective(x) {
            Ok(f) if f <= cfg.divergence_cap => Ok(f),
            Ok(f) => Err(format!("objective {f} beyond cap")),
            Err(e) => Err(e.to_string()),
        }
    };
    match objective(&x) {
        Ok(f) => {
            rec.objective_per_epoch.push(f);
            if cfg.early_stop && f <= threshold {
                rec.converged = true;
                rec.iters_to_converge = Some(0);
            }
        }
        Err(e) => failure = Some(e),
    }
    let mut k = 0;
    while failure.is_none() && !rec.converged && k < horizon {
        k += 1;
        if (k - 1) % cfg.record_stride == 0 {
            rec.iterate_norm_series.push(norm(&x));
            rec.gamma_series.push(1.0 / eta);
            if cfg.record_iterates {
                rec.iterates.push(x.clone());
            }
        }
        let (i, _) = stream.next();
        let e = match model_eval(ModelKind::SUBGRADIENT, problem.kind, &x, problem.sample(i)) {
            Ok(e) => e,
            Err(Error::Diverged(r)) => {
                failure = Some(r);
                break;
            }
            Err(e) => return Err(e),
        };
        // a zero subgradient is an exact fixed point; skip the map roundtrip
        if e.g.iter().any(|&v| v != 0.0) {
            let mut z = kernel_grad(&cfg.kernel, &x);
            axpy(-eta, &e.g, &mut z);
            x = kernel_grad_inverse(&cfg.kernel, &z);
        }
        let nx = norm(&x);
        if !nx.is_finite() || nx > cfg.divergence_cap {
            failure = Some(format!("iterate norm {nx} at k = {k}"));
            break;
        }
        rec.max_iterate_norm = rec.max_iterate_norm.max(nx);
        if k % m == 0 {
            match objective(&x) {
                Ok(f) => {
                    rec.objective_per_epoch.push(f);
                    if cfg.early_stop && f <= threshold {
                        rec.converged = true;
                        rec.iters_to_converge = Some(k);
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
    }
    rec.iterations_run = k;
    rec.final_x = x;
    if let Some(reason) = failure {
        rec.diverged = true;
        rec.max_iterate_norm = f64::INFINITY;
        rec.final_objective = f64::INFINITY;
        rec.divergence_reason = Some(reason);
    } else {
        rec.final_objective = *rec.objective_per_epoch.last().expect("objective at x¹ recorded");
    }
    Ok(rec)
}
