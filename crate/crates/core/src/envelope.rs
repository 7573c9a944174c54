//! Moreau-envelope stationarity diagnostics.
//!
//! For `ρ` above the weak-convexity modulus of `ψ`,
//!
//! ```text
//! x̂ = argmin_z ψ(z) + ρ/2 ‖z − x‖²,   ψ_{1/ρ}(x) = ψ(x̂) + ρ/2 ‖x̂ − x‖²,
//! ‖∇ψ_{1/ρ}(x)‖ = ρ ‖x − x̂‖.
//! ```
//!
//! The inner problem is solved on the full-batch objective. For the
//! absolute-value losses the default solver is a deterministic prox-linear
//! method with backtracking, whose subproblems are solved exactly (up to a
//! duality-gap tolerance) by dual coordinate ascent; piecewise-linear
//! objectives are solved in one outer step. The least-squares instance is
//! handled by a direct linear solve. A plain proximal subgradient solver with
//! the `2/(ρ(t+2))` schedule is kept as an alternative.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{config, guard, Error, Result};
use crate::linalg::{axpy, dist, dot, norm_sq, sign};
use crate::model::{Loss, ModelKind};
use crate::problems::ProblemInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    ProxLinear,
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeOptions {
    pub rho: f64,
    /// Outer iterations of the inner solver.
    pub inner_iters: usize,
    /// Stop once an outer step moves less than this.
    pub inner_tol: f64,
    pub solver: InnerSolver,
}

impl EnvelopeOptions {
    pub fn new(rho: f64) -> Self {
        EnvelopeOptions { rho, inner_iters: 500, inner_tol: 1e-9, solver: InnerSolver::ProxLinear }
    }

    /// `ρ = 2·(weak-convexity estimate) + 1`.
    pub fn for_problem(problem: &ProblemInstance) -> Self {
        Self::new(default_rho(problem))
    }
}

pub fn default_rho(problem: &ProblemInstance) -> f64 {
    2.0 * problem.weak_convexity_estimate() + 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub prox_point: Vec<f64>,
    pub envelope_value: f64,
    pub grad_norm: f64,
    pub inner_iters_used: usize,
    pub inner_residual: f64,
}

/// `z ↦ ψ(z) + ρ/2 ‖z − x‖²`
pub fn inner_objective(problem: &ProblemInstance, x: &[f64], rho: f64, z: &[f64]) -> Result<f64> {
    Ok(problem.objective(z)? + 0.5 * rho * norm_sq_diff(z, x))
}

fn norm_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

pub fn prox_point(problem: &ProblemInstance, x: &[f64], opts: &EnvelopeOptions) -> Result<EnvelopeReport> {
    if !(opts.rho > 0.0 && opts.rho.is_finite()) {
        return config(format!("rho must be positive, got {}", opts.rho));
    }
    if x.len() != problem.n {
        return config(format!("dimension mismatch: expected {}, got {}", problem.n, x.len()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged("non-finite envelope anchor".into()));
    }
    let (z, iters, residual) = match (problem.kind.loss(), opts.solver) {
        (Loss::Squared, _) => (least_squares_prox(problem, x, opts.rho)?, 1, 0.0),
        (Loss::Absolute, InnerSolver::ProxLinear) => prox_linear_inner(problem, x, opts)?,
        (Loss::Absolute, InnerSolver::Subgradient) => subgradient_inner(problem, x, opts)?,
    };
    let envelope_value = guard(inner_objective(problem, x, opts.rho, &z)?, "envelope value")?;
    let grad_norm = opts.rho * dist(x, &z);
    Ok(EnvelopeReport { prox_point: z, envelope_value, grad_norm, inner_iters_used: iters, inner_residual: residual })
}

/// `‖∇ψ_{1/ρ}(x)‖²` at each iterate.
pub fn envelope_trace(problem: &ProblemInstance, iterates: &[Vec<f64>], opts: &EnvelopeOptions) -> Result<Vec<f64>> {
    crate::par::map(iterates, |x| prox_point(problem, x, opts).map(|r| r.grad_norm * r.grad_norm))
        .into_iter()
        .collect()
}

fn least_squares_prox(problem: &ProblemInstance, x: &[f64], rho: f64) -> Result<Vec<f64>> {
    let (m, n) = (problem.m, problem.n);
    let a = DMatrix::from_row_slice(m, n, &problem.a);
    let scale = 2.0 / m as f64;
    let lhs = a.transpose() * &a * scale + DMatrix::identity(n, n) * rho;
    let rhs = a.transpose() * DVector::from_column_slice(&problem.b) * scale + DVector::from_column_slice(x) * rho;
    let z = lhs
        .cholesky()
        .ok_or_else(|| Error::Diverged("envelope linear system is not positive definite".into()))?
        .solve(&rhs);
    Ok(z.iter().copied().collect())
}

/// Linearization `cᵢ(z) = r(z, aᵢ) − bᵢ`, `gᵢ = ∇cᵢ(z)` (row-major).
fn linearize(problem: &ProblemInstance, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.n;
    let mut c = Vec::with_capacity(problem.m);
    let mut g = Vec::with_capacity(problem.m * n);
    for i in 0..problem.m {
        let row = problem.row(i);
        let (r, dr) = problem.kind.response(dot(row, z))?;
        c.push(guard(r - problem.b[i], "residual")?);
        g.extend(row.iter().map(|v| dr * v));
    }
    Ok((c, g))
}

/// Solves `min_y (1/m) Σ |lᵢ + gᵢᵀ y| + σ/2 ‖y − w‖²` by coordinate ascent on
/// the box-constrained dual `u ∈ [−1, 1]^m`, with `y = w − Gᵀu/(mσ)`.
/// `u` is warm-started and updated in place.
struct DualBoxSolver {
    max_sweeps: usize,
    gap_tol: f64,
}

impl DualBoxSolver {
    fn solve(&self, l: &[f64], g: &[f64], gsq: &[f64], n: usize, sigma: f64, w: &[f64], u: &mut [f64]) -> Vec<f64> {
        let m = l.len();
        let mf = m as f64;
        let mut y = w.to_vec();
        for (i, gi) in g.chunks_exact(n).enumerate() {
            if u[i] != 0.0 {
                axpy(-u[i] / (mf * sigma), gi, &mut y);
            }
        }
        for _ in 0..self.max_sweeps {
            for (i, gi) in g.chunks_exact(n).enumerate() {
                if gsq[i] == 0.0 {
                    u[i] = sign(l[i]);
                    continue;
                }
                let s = l[i] + dot(gi, &y);
                let next = (u[i] + mf * sigma * s / gsq[i]).clamp(-1.0, 1.0);
                let delta = next - u[i];
                if delta != 0.0 {
                    axpy(-delta / (mf * sigma), gi, &mut y);
                    u[i] = next;
                }
            }
            // duality gap (1/m) Σ (|sᵢ| − uᵢ sᵢ)
            let mut gap = 0.0;
            let mut primal = 0.0;
            for (i, gi) in g.chunks_exact(n).enumerate() {
                let s = l[i] + dot(gi, &y);
                gap += s.abs() - u[i] * s;
                primal += s.abs();
            }
            gap /= mf;
            primal = primal / mf + 0.5 * sigma * norm_sq_diff(&y, w);
            if gap <= self.gap_tol * (1.0 + primal) {
                break;
            }
        }
        y
    }
}

fn prox_linear_inner(problem: &ProblemInstance, x: &[f64], opts: &EnvelopeOptions) -> Result<(Vec<f64>, usize, f64)> {
    let (m, n) = (problem.m, problem.n);
    let rho = opts.rho;
    let dual = DualBoxSolver { max_sweeps: 2000, gap_tol: 1e-15 };
    let beta_floor = 1e-12 * rho;
    let mut beta = beta_floor;
    let mut z = x.to_vec();
    let mut phi_z = inner_objective(problem, x, rho, &z)?;
    let mut u = vec![0.0; m];
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    while iters < opts.inner_iters {
        iters += 1;
        let (c, g) = linearize(problem, &z)?;
        let gsq: Vec<f64> = g.chunks_exact(n).map(norm_sq).collect();
        let l: Vec<f64> = c.iter().zip(g.chunks_exact(n)).map(|(ci, gi)| ci - dot(gi, &z)).collect();
        let mut accepted = None;
        for _ in 0..200 {
            let sigma = rho + beta;
            let w: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| (rho * xi + beta * zi) / sigma).collect();
            let mut u_try = u.clone();
            let y = dual.solve(&l, &g, &gsq, n, sigma, &w, &mut u_try);
            let lin: f64 = l.iter().zip(g.chunks_exact(n)).map(|(li, gi)| (li + dot(gi, &y)).abs()).sum::<f64>() / m as f64;
            let model = lin + 0.5 * rho * norm_sq_diff(&y, x) + 0.5 * beta * norm_sq_diff(&y, &z);
            match inner_objective(problem, x, rho, &y) {
                Ok(phi_y) if phi_y <= model + 1e-12 * (1.0 + model.abs()) && phi_y <= phi_z + 1e-12 * (1.0 + phi_z.abs()) => {
                    accepted = Some((y, phi_y, u_try));
                    break;
                }
                Ok(_) | Err(Error::Diverged(_)) => beta = (2.0 * beta).max(1e-8 * rho),
                Err(e) => return Err(e),
            }
        }
        let Some((y, phi_y, u_next)) = accepted else {
            // no step reduced the objective: z is numerically stationary
            residual = 0.0;
            break;
        };
        residual = dist(&y, &z);
        z = y;
        phi_z = phi_y;
        u = u_next;
        beta = (beta * 0.5).max(beta_floor);
        if residual <= opts.inner_tol {
            break;
        }
    }
    Ok((z, iters, residual))
}

fn subgradient_inner(problem: &ProblemInstance, x: &[f64], opts: &EnvelopeOptions) -> Result<(Vec<f64>, usize, f64)> {
    let rho = opts.rho;
    let mut z = x.to_vec();
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    let mut g = vec![0.0; problem.n];
    for t in 0..opts.inner_iters {
        iters = t + 1;
        g.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..problem.m {
            let e = crate::model::model_eval(ModelKind::SUBGRADIENT, problem.kind, &z, problem.sample(i))?;
            axpy(1.0 / problem.m as f64, &e.g, &mut g);
        }
        let eta = 2.0 / (rho * (t as f64 + 2.0));
        let next: Vec<f64> = z
            .iter()
            .zip(x)
            .zip(&g)
            .map(|((zi, xi), gi)| (zi / eta - gi + rho * xi) / (1.0 / eta + rho))
            .collect();
        residual = dist(&next, &z);
        z = next;
        if residual <= opts.inner_tol {
            break;
        }
    }
    Ok((z, iters, residual))
}
