//! The stochastic model-based iteration
//!
//! ```text
//! x^{k+1} = argmin_x { f_{x^k}(x, ξ^k) + ω(x) + γ_k/2 ‖x − x^k‖² }
//! ```
//!
//! with `ξ^k` drawn uniformly with replacement from the instance and `γ_k`
//! chosen by one of the [`PolicyKind`] rules. For the reference policy a second
//! sample `ξ'` is drawn from a separate keystream at every step, so `γ_k` never
//! depends on `ξ^k`.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result, DIVERGENCE_CAP};
use crate::linalg::{dist, norm};
use crate::model::{model_eval, prox_step, ModelKind, RegularizerSpec};
use crate::problems::{growth_function, initial_point, ProblemInstance};
use crate::rng::{SampleStream, REFERENCE_STREAM, UPDATE_STREAM};
use crate::stepsize::{gamma, PolicyKind, StepsizeParams};

pub const DEFAULT_STOP_FACTOR: f64 = 1.2;
/// Additive slack of the stopping rule; decides ties when `f(x̂) = 0`.
pub const STOP_TOLERANCE: f64 = 1e-12;
/// Slack of the per-step movement bound `‖x⁺ − x‖ ≤ 2(Lip + L_ω)/γ`.
pub const STEP_BOUND_SLACK: f64 = 1e-10;

/// Where the reference policy reads `Lip(x, ξ')` from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSample {
    /// A fresh draw from a dedicated stream, independent of the update sample.
    #[default]
    Independent,
    /// The update sample itself (`ξ' = ξ`), i.e. plain gradient clipping.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub model: ModelKind,
    pub policy: PolicyKind,
    pub params: StepsizeParams,
    pub regularizer: RegularizerSpec,
    pub epochs: u64,
    pub stop_factor: f64,
    /// Stop at the first epoch meeting the stopping rule.
    pub early_stop: bool,
    pub seed: u64,
    pub record_stride: u64,
    pub divergence_cap: f64,
    /// Keep the thinned iterates themselves (needed for envelope traces).
    pub record_iterates: bool,
    /// Starting point; defaults to [`initial_point`] for the instance.
    pub initial: Option<Vec<f64>>,
    #[serde(default)]
    pub reference_sample: ReferenceSample,
    /// Iteration budget overriding `epochs·m` (need not be a whole number of epochs).
    #[serde(default)]
    pub iterations: Option<u64>,
}

impl SolverConfig {
    /// Defaults: one-epoch recording stride, early stopping at 1.2·f(x̂),
    /// `K = epochs·m` written into `params.horizon`.
    pub fn new(problem: &ProblemInstance, model: ModelKind, policy: PolicyKind, mut params: StepsizeParams, epochs: u64, seed: u64) -> Self {
        params.horizon = epochs * problem.m as u64;
        SolverConfig {
            model,
            policy,
            params,
            regularizer: RegularizerSpec::ZERO,
            epochs,
            stop_factor: DEFAULT_STOP_FACTOR,
            early_stop: true,
            seed,
            record_stride: problem.m as u64,
            divergence_cap: DIVERGENCE_CAP,
            record_iterates: false,
            initial: None,
            reference_sample: ReferenceSample::Independent,
            iterations: None,
        }
    }

    /// Like [`SolverConfig::new`] with an explicit budget of `k` iterations.
    pub fn with_iterations(problem: &ProblemInstance, model: ModelKind, policy: PolicyKind, params: StepsizeParams, k: u64, seed: u64) -> Self {
        let epochs = k.div_ceil(problem.m as u64).max(1);
        SolverConfig { iterations: Some(k), ..Self::new(problem, model, policy, params, epochs, seed) }.with_horizon(k)
    }

    fn with_horizon(mut self, k: u64) -> Self {
        self.params.horizon = k;
        self
    }

    pub fn horizon(&self, problem: &ProblemInstance) -> u64 {
        self.iterations.unwrap_or(self.epochs * problem.m as u64)
    }

    pub fn validate(&self, problem: &ProblemInstance) -> Result<()> {
        self.params.validate()?;
        if self.epochs == 0 || self.iterations == Some(0) {
            return config("epochs and iterations must be positive");
        }
        if self.params.horizon != self.horizon(problem) {
            return config(format!(
                "horizon K = {} does not match the iteration budget {}",
                self.params.horizon,
                self.horizon(problem)
            ));
        }
        if !(self.stop_factor > 1.0) {
            return config(format!("stop factor must exceed 1, got {}", self.stop_factor));
        }
        if self.record_stride == 0 {
            return config("record stride must be positive");
        }
        if !(self.divergence_cap > 0.0) {
            return config("divergence cap must be positive");
        }
        if let Some(x) = &self.initial {
            if x.len() != problem.n {
                return config(format!("initial point has {} entries, expected {}", x.len(), problem.n));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub iterations_run: u64,
    pub converged: bool,
    pub diverged: bool,
    pub iters_to_converge: Option<u64>,
    /// Full objective at x¹ followed by one value per completed epoch.
    pub objective_per_epoch: Vec<f64>,
    pub max_iterate_norm: f64,
    /// `γ_k` at `k ≡ 1 (mod stride)`.
    pub gamma_series: Vec<f64>,
    /// `‖x^k‖` at `k ≡ 1 (mod stride)`.
    pub iterate_norm_series: Vec<f64>,
    /// `x^k` at `k ≡ 1 (mod stride)` when requested.
    pub iterates: Vec<Vec<f64>>,
    pub final_x: Vec<f64>,
    pub final_objective: f64,
    /// Steps whose movement exceeded `2(Lip + L_ω)/γ_k` (plus slack).
    pub step_bound_violations: u64,
    /// Largest observed `‖x⁺ − x‖ / (2(Lip + L_ω)/γ_k)`.
    pub max_step_ratio: f64,
    pub reference_draws: u64,
    pub divergence_reason: Option<String>,
}

/// What happened in one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub k: u64,
    pub gamma: f64,
    pub lip: f64,
    pub step_norm: f64,
    pub iterate_norm: f64,
}

/// The iteration as an explicit state machine; [`run`] drives it with epoch
/// bookkeeping, other callers (convex traces, tests) drive it directly.
pub struct Stepper<'a> {
    problem: &'a ProblemInstance,
    cfg: &'a SolverConfig,
    x: Vec<f64>,
    k: u64,
    updates: SampleStream,
    references: SampleStream,
}

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a ProblemInstance, cfg: &'a SolverConfig) -> Result<Self> {
        cfg.validate(problem)?;
        let x = cfg.initial.clone().unwrap_or_else(|| initial_point(problem.kind, problem.n, cfg.seed));
        let updates = SampleStream::new(cfg.seed, UPDATE_STREAM, problem.m);
        let references = SampleStream::new(cfg.seed, REFERENCE_STREAM, problem.m);
        assert_ne!(updates.stream_id(), references.stream_id());
        Ok(Stepper { problem, cfg, x, k: 0, updates, references })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Number of completed iterations.
    pub fn iterations(&self) -> u64 {
        self.k
    }

    pub fn reference_draws(&self) -> u64 {
        self.references.draws()
    }

    /// `γ_k` at the current iterate, consuming a reference sample if needed.
    fn weight(&mut self, k: u64, update_index: usize) -> Result<f64> {
        let p = self.problem;
        let growth = match self.cfg.policy {
            PolicyKind::Growth => growth_function(p.kind, norm(&self.x)),
            _ => 0.0,
        };
        let lip_ref = match self.cfg.policy {
            PolicyKind::Reference => {
                let j = match self.cfg.reference_sample {
                    ReferenceSample::Independent => self.references.next().0,
                    ReferenceSample::Shared => update_index,
                };
                model_eval(self.cfg.model, p.kind, &self.x, p.sample(j))?.lip
            }
            _ => 0.0,
        };
        gamma(self.cfg.policy, &self.cfg.params, k, growth, lip_ref)
    }

    /// Performs iteration `k + 1`.
    pub fn step(&mut self) -> Result<StepInfo> {
        let k = self.k + 1;
        let p = self.problem;
        let (i, _) = self.updates.next();
        let eval = model_eval(self.cfg.model, p.kind, &self.x, p.sample(i))?;
        let g = self.weight(k, i)?;
        let next = prox_step(self.cfg.model, &self.x, &eval, g, &self.cfg.regularizer)?;
        let step_norm = dist(&next, &self.x);
        let iterate_norm = norm(&next);
        self.x = next;
        self.k = k;
        if !iterate_norm.is_finite() || iterate_norm > self.cfg.divergence_cap {
            return Err(Error::Diverged(format!("iterate norm {iterate_norm} at k = {k}")));
        }
        Ok(StepInfo { k, gamma: g, lip: eval.lip, step_norm, iterate_norm })
    }
}

/// `(1/m) Σᵢ f(x, ξᵢ)`
pub fn full_objective(problem: &ProblemInstance, x: &[f64]) -> Result<f64> {
    problem.objective(x)
}

/// Runs until convergence, divergence or the horizon `K` (`epochs·m` unless
/// an explicit iteration budget is set).
///
/// Divergence (overflow, non-finite values, iterate norm or objective beyond
/// the cap) is recorded in the result; only configuration errors are returned
/// as `Err`.
pub fn run(problem: &ProblemInstance, cfg: &SolverConfig) -> Result<RunRecord> {
    let mut st = Stepper::new(problem, cfg)?;
    let horizon = cfg.horizon(problem);
    let m = problem.m as u64;
    let threshold = (cfg.stop_factor * problem.f_at_xhat).max(problem.f_at_xhat + STOP_TOLERANCE);
    let lip_omega = cfg.regularizer.lip_omega;

    let mut rec = RunRecord {
        iterations_run: 0,
        converged: false,
        diverged: false,
        iters_to_converge: None,
        objective_per_epoch: Vec::with_capacity(cfg.epochs as usize + 1),
        max_iterate_norm: norm(st.x()),
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

    let check = |f: Result<f64>| -> std::result::Result<f64, String> {
        match f {
            Ok(v) if v <= cfg.divergence_cap => Ok(v),
            Ok(v) => Err(format!("objective {v} beyond cap")),
            Err(e) => Err(e.to_string()),
        }
    };

    let mut failure: Option<String> = None;
    match check(problem.objective(st.x())) {
        Ok(f0) => {
            rec.objective_per_epoch.push(f0);
            if cfg.early_stop && f0 <= threshold {
                rec.converged = true;
                rec.iters_to_converge = Some(0);
            }
        }
        Err(reason) => failure = Some(reason),
    }

    while failure.is_none() && !rec.converged && st.iterations() < horizon {
        let k = st.iterations() + 1;
        let record_now = (k - 1) % cfg.record_stride == 0;
        if record_now {
            rec.iterate_norm_series.push(norm(st.x()));
            if cfg.record_iterates {
                rec.iterates.push(st.x().to_vec());
            }
        }
        let info = match st.step() {
            Ok(info) => info,
            Err(Error::Diverged(reason)) => {
                failure = Some(reason);
                break;
            }
            Err(e) => return Err(e),
        };
        if record_now {
            rec.gamma_series.push(info.gamma);
        }
        rec.max_iterate_norm = rec.max_iterate_norm.max(info.iterate_norm);
        let bound = 2.0 * (info.lip + lip_omega) / info.gamma;
        if info.step_norm > bound + STEP_BOUND_SLACK {
            rec.step_bound_violations += 1;
        }
        if bound > 0.0 {
            rec.max_step_ratio = rec.max_step_ratio.max(info.step_norm / bound);
        }
        if k % m == 0 {
            match check(problem.objective(st.x())) {
                Ok(f) => {
                    rec.objective_per_epoch.push(f);
                    if cfg.early_stop && f <= threshold {
                        rec.converged = true;
                        rec.iters_to_converge = Some(k);
                    }
                }
                Err(reason) => failure = Some(reason),
            }
        }
    }

    rec.iterations_run = st.iterations();
    rec.reference_draws = st.reference_draws();
    rec.final_x = st.x().to_vec();
    // a budget that is not a whole number of epochs ends between checks
    let mut tail = None;
    if failure.is_none() && rec.iterations_run % m != 0 {
        match check(problem.objective(st.x())) {
            Ok(f) => tail = Some(f),
            Err(reason) => failure = Some(reason),
        }
    }
    if let Some(reason) = failure {
        rec.diverged = true;
        rec.converged = false;
        rec.iters_to_converge = None;
        rec.max_iterate_norm = f64::INFINITY;
        rec.final_objective = f64::INFINITY;
        rec.divergence_reason = Some(reason);
    } else {
        rec.final_objective = tail.unwrap_or_else(|| *rec.objective_per_epoch.last().expect("objective at x¹ recorded"));
    }
    Ok(rec)
}

/// Per-epoch running minimum of `ψ(x^k) − ψ(x*)` on a convex instance.
///
/// The objective is evaluated at every iterate; entry `e` is the minimum over
/// `x¹ … x^{e·m+1}`. The run never stops early. A divergent run yields the
/// entries computed before divergence.
pub fn convex_gap_trace(problem: &ProblemInstance, cfg: &SolverConfig, x_star: Option<&[f64]>) -> Result<Vec<f64>> {
    if !problem.kind.is_convex() {
        return config(format!("convex gap trace needs a convex instance, got {}", problem.kind));
    }
    let x_star = match x_star {
        Some(x) if x.len() == problem.n => x,
        Some(_) => return config("x_star has the wrong dimension"),
        None => return config("convex gap trace needs a minimizer x_star"),
    };
    let f_star = problem.objective(x_star)?;
    let mut st = Stepper::new(problem, cfg)?;
    let m = problem.m as u64;
    let horizon = cfg.horizon(problem);
    let mut best = (problem.objective(st.x())? - f_star).max(0.0);
    let mut trace = vec![best];
    while st.iterations() < horizon {
        match st.step().and_then(|info| problem.objective(st.x()).map(|f| (info, f))) {
            Ok((info, f)) => {
                best = best.min((f - f_star).max(0.0));
                if info.k % m == 0 {
                    trace.push(best);
                }
            }
            Err(Error::Diverged(_)) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}
