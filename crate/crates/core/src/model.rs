//! Stochastic model oracles for the robust regression loss
//! `f(x, ξ) = |r(x, a) − b|` and their regularized subproblems.
//!
//! Three models are supported at an anchor `x`:
//!
//! - subgradient: `f(x,ξ) + ⟨f'(x,ξ), y − x⟩`
//! - prox-linear: `|c(x,ξ) + ⟨∇c(x,ξ), y − x⟩|` with `c = r − b`
//! - truncated: `max{f(x,ξ) + ⟨f'(x,ξ), y − x⟩, ℓ}`
//!
//! Every model is convex in `y`, so each regularized subproblem has a unique
//! minimizer, and all three have closed forms (see [`prox_step`]).

use serde::{Deserialize, Serialize};

use crate::error::{config, guard, Result};
use crate::linalg::{axpy, dot, norm, norm_sq, sign, soft_threshold};

/// Regression response `r(x, a)`, written as a scalar function of `t = ⟨a, x⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `t²` (robust phase retrieval)
    R1,
    /// `t⁵ + t³ + 1`
    R2,
    /// `eᵗ + 10`
    R3,
    /// `t` with absolute loss (least absolute deviations)
    Lad,
    /// `t` with squared loss; convex, used for the convex-rate checks
    LsConvex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    Absolute,
    Squared,
}

impl ProblemKind {
    pub const ALL: [ProblemKind; 5] = [
        ProblemKind::R1,
        ProblemKind::R2,
        ProblemKind::R3,
        ProblemKind::Lad,
        ProblemKind::LsConvex,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProblemKind::R1 => "r1",
            ProblemKind::R2 => "r2",
            ProblemKind::R3 => "r3",
            ProblemKind::Lad => "lad",
            ProblemKind::LsConvex => "ls_convex",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub fn loss(self) -> Loss {
        match self {
            ProblemKind::LsConvex => Loss::Squared,
            _ => Loss::Absolute,
        }
    }

    pub fn is_convex(self) -> bool {
        matches!(self, ProblemKind::Lad | ProblemKind::LsConvex)
    }

    /// `(r(t), r'(t))`, guarded against overflow.
    pub fn response(self, t: f64) -> Result<(f64, f64)> {
        let (r, dr) = match self {
            ProblemKind::R1 => (t * t, 2.0 * t),
            ProblemKind::R2 => {
                let t2 = t * t;
                let t3 = t2 * t;
                (t3 * t2 + t3 + 1.0, 5.0 * t2 * t2 + 3.0 * t2)
            }
            ProblemKind::R3 => {
                let e = t.exp();
                (e + 10.0, e)
            }
            ProblemKind::Lad | ProblemKind::LsConvex => (t, 1.0),
        };
        Ok((guard(r, "response")?, guard(dr, "response derivative")?))
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One measurement `ξ = (a, b)`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub a: &'a [f64],
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelTag {
    Subgradient,
    ProxLinear,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelKind {
    pub tag: ModelTag,
    /// Known lower bound `ℓ` of the model; only read by the truncated model.
    pub lower_bound: f64,
}

impl ModelKind {
    pub const SUBGRADIENT: ModelKind = ModelKind { tag: ModelTag::Subgradient, lower_bound: 0.0 };
    pub const PROX_LINEAR: ModelKind = ModelKind { tag: ModelTag::ProxLinear, lower_bound: 0.0 };
    pub const TRUNCATED: ModelKind = ModelKind { tag: ModelTag::Truncated, lower_bound: 0.0 };

    pub fn truncated(lower_bound: f64) -> Self {
        ModelKind { tag: ModelTag::Truncated, lower_bound }
    }
}

/// A stochastic model at an anchor.
///
/// For the subgradient and truncated kinds `c` is the loss value and `g` a
/// subgradient of the loss; for the prox-linear kind `c = r − b` and
/// `g = ∇ₓ r`. `lip` is the Lipschitz constant of the model in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEval {
    pub value: f64,
    pub c: f64,
    pub g: Vec<f64>,
    pub lip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    Zero,
    L1,
}

/// The regularizer `ω`. Both kinds are convex, so `κ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub mu: f64,
    pub lip_omega: f64,
}

impl RegularizerSpec {
    pub const ZERO: RegularizerSpec =
        RegularizerSpec { kind: RegularizerKind::Zero, mu: 0.0, lip_omega: 0.0 };

    /// `μ‖x‖₁` in dimension `n`; Lipschitz constant `μ√n`.
    pub fn l1(mu: f64, n: usize) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return config(format!("l1 weight must be finite and >= 0, got {mu}"));
        }
        Ok(RegularizerSpec { kind: RegularizerKind::L1, mu, lip_omega: mu * (n as f64).sqrt() })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self.kind {
            RegularizerKind::Zero => 0.0,
            RegularizerKind::L1 => self.mu * x.iter().map(|v| v.abs()).sum::<f64>(),
        }
    }
}

impl Default for RegularizerSpec {
    fn default() -> Self {
        Self::ZERO
    }
}

/// Per-sample loss: `|r(x, a) − b|`, or `(r − b)²` for [`ProblemKind::LsConvex`].
pub fn evaluate_loss(kind: ProblemKind, x: &[f64], s: Sample<'_>) -> Result<f64> {
    debug_assert_eq!(x.len(), s.a.len());
    let (r, _) = kind.response(dot(s.a, x))?;
    let res = r - s.b;
    let v = match kind.loss() {
        Loss::Absolute => res.abs(),
        Loss::Squared => res * res,
    };
    guard(v, "loss")
}

/// Builds the stochastic model of `f(·, s)` at anchor `x`.
pub fn model_eval(model: ModelKind, kind: ProblemKind, x: &[f64], s: Sample<'_>) -> Result<ModelEval> {
    if x.len() != s.a.len() {
        return config(format!("dimension mismatch: x has {} entries, a has {}", x.len(), s.a.len()));
    }
    let (r, dr) = kind.response(dot(s.a, x))?;
    let res = r - s.b;
    let (value, c, scale) = match (kind.loss(), model.tag) {
        (Loss::Absolute, ModelTag::ProxLinear) => (res.abs(), res, dr),
        (Loss::Absolute, _) => (res.abs(), res.abs(), sign(res) * dr),
        (Loss::Squared, ModelTag::ProxLinear) => {
            return config("prox-linear model requires an absolute-value loss");
        }
        (Loss::Squared, _) => (res * res, res * res, 2.0 * res * dr),
    };
    let value = guard(value, "loss")?;
    let scale = guard(scale, "subgradient scale")?;
    let g: Vec<f64> = s.a.iter().map(|ai| scale * ai).collect();
    let lip = guard(norm(&g), "model Lipschitz constant")?;
    Ok(ModelEval { value, c, g, lip })
}

/// Value of the model built at `x` (with `eval = model_eval(.., x, ..)`) at `y`.
pub fn model_value(model: ModelKind, x: &[f64], eval: &ModelEval, y: &[f64]) -> f64 {
    let lin: f64 = eval.g.iter().zip(y.iter().zip(x)).map(|(g, (yi, xi))| g * (yi - xi)).sum();
    match model.tag {
        ModelTag::Subgradient => eval.value + lin,
        ModelTag::ProxLinear => (eval.c + lin).abs(),
        ModelTag::Truncated => (eval.value + lin).max(model.lower_bound),
    }
}

/// Objective of the regularized subproblem at `y`.
pub fn subproblem_objective(
    model: ModelKind,
    x: &[f64],
    eval: &ModelEval,
    gamma: f64,
    reg: &RegularizerSpec,
    y: &[f64],
) -> f64 {
    let d2: f64 = y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    model_value(model, x, eval, y) + reg.value(y) + 0.5 * gamma * d2
}

/// Exact minimizer of `f_x(y, ξ) + ω(y) + (γ/2)‖y − x‖²`.
pub fn prox_step(
    model: ModelKind,
    x: &[f64],
    eval: &ModelEval,
    gamma: f64,
    reg: &RegularizerSpec,
) -> Result<Vec<f64>> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return config(format!("regularizer weight must be positive and finite, got {gamma}"));
    }
    if reg.kind == RegularizerKind::L1 && model.tag != ModelTag::Subgradient {
        return config("l1 regularizer is only supported with the subgradient model");
    }
    let mut y = x.to_vec();
    match model.tag {
        ModelTag::Subgradient => {
            axpy(-1.0 / gamma, &eval.g, &mut y);
            if reg.kind == RegularizerKind::L1 {
                let t = reg.mu / gamma;
                y.iter_mut().for_each(|v| *v = soft_threshold(*v, t));
            }
        }
        ModelTag::ProxLinear => {
            let gg = norm_sq(&eval.g);
            if gg > 0.0 {
                let s = eval.c.abs().min(gg / gamma) * sign(eval.c) / gg;
                axpy(-s, &eval.g, &mut y);
            }
        }
        ModelTag::Truncated => {
            let gg = norm_sq(&eval.g);
            let gap = eval.value - model.lower_bound;
            if gg > 0.0 && gap > 0.0 {
                let lambda = (gamma * gap / gg).clamp(0.0, 1.0);
                axpy(-lambda / gamma, &eval.g, &mut y);
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s<'a>(a: &'a [f64], b: f64) -> Sample<'a> {
        Sample { a, b }
    }

    #[test]
    fn loss_hand_values() {
        assert_eq!(evaluate_loss(ProblemKind::R1, &[2.0, 0.0], s(&[1.0, 0.0], 1.0)).unwrap(), 3.0);
        assert_eq!(evaluate_loss(ProblemKind::R2, &[1.0], s(&[1.0], 0.0)).unwrap(), 3.0);
        assert_eq!(evaluate_loss(ProblemKind::R3, &[5.0, 5.0], s(&[0.0, 0.0], 11.0)).unwrap(), 0.0);
    }

    #[test]
    fn overflow_is_divergence() {
        let e = evaluate_loss(ProblemKind::R3, &[1e4], s(&[1.0], 0.0)).unwrap_err();
        assert!(matches!(e, crate::Error::Diverged(_)));
        let e = model_eval(ModelKind::SUBGRADIENT, ProblemKind::R2, &[1e40], s(&[1.0], 0.0)).unwrap_err();
        assert!(matches!(e, crate::Error::Diverged(_)));
    }

    #[test]
    fn subgradient_hand_values() {
        let ev = model_eval(ModelKind::SUBGRADIENT, ProblemKind::R1, &[2.0, 0.0], s(&[1.0, 0.0], 1.0)).unwrap();
        assert_eq!(ev.g, vec![4.0, 0.0]);
        assert_eq!(ev.lip, 4.0);
        assert_eq!(ev.value, 3.0);
        let ev = model_eval(ModelKind::SUBGRADIENT, ProblemKind::R2, &[1.0], s(&[1.0], 0.0)).unwrap();
        assert_eq!(ev.g, vec![8.0]);
    }

    #[test]
    fn exact_fit_gives_zero_subgradient() {
        for kind in [ProblemKind::R1, ProblemKind::R2, ProblemKind::R3, ProblemKind::Lad] {
            let a = [0.3, -0.7];
            let x = [1.1, 0.4];
            let (r, _) = kind.response(dot(&a, &x)).unwrap();
            for m in [ModelKind::SUBGRADIENT, ModelKind::TRUNCATED] {
                let ev = model_eval(m, kind, &x, s(&a, r)).unwrap();
                assert!(ev.g.iter().all(|&v| v == 0.0), "{kind} {m:?}");
                assert_eq!(ev.lip, 0.0);
            }
        }
    }

    #[test]
    fn prox_linear_reports_inner_residual() {
        let ev = model_eval(ModelKind::PROX_LINEAR, ProblemKind::R1, &[2.0, 0.0], s(&[1.0, 0.0], 1.0)).unwrap();
        assert_eq!(ev.c, 3.0);
        assert_eq!(ev.g, vec![4.0, 0.0]);
        let ev = model_eval(ModelKind::PROX_LINEAR, ProblemKind::R1, &[2.0, 0.0], s(&[1.0, 0.0], 9.0)).unwrap();
        assert_eq!(ev.c, -5.0);
        assert_eq!(ev.value, 5.0);
    }

    #[test]
    fn prox_linear_rejects_squared_loss() {
        let e = model_eval(ModelKind::PROX_LINEAR, ProblemKind::LsConvex, &[1.0], s(&[1.0], 0.0));
        assert!(matches!(e, Err(crate::Error::Config(_))));
    }

    fn ev(c: f64, g: Vec<f64>) -> ModelEval {
        let lip = norm(&g);
        ModelEval { value: c.abs(), c, g, lip }
    }

    #[test]
    fn prox_step_closed_forms() {
        let x = [2.0, 0.0];
        let e = ev(3.0, vec![4.0, 0.0]);
        let z = RegularizerSpec::ZERO;
        assert_eq!(prox_step(ModelKind::SUBGRADIENT, &x, &e, 2.0, &z).unwrap(), vec![0.0, 0.0]);
        let y = prox_step(ModelKind::PROX_LINEAR, &x, &e, 2.0, &z).unwrap();
        assert_abs_diff_eq!(y[0], 1.25, epsilon = 1e-15);
        assert_abs_diff_eq!(model_value(ModelKind::PROX_LINEAR, &x, &e, &y), 0.0, epsilon = 1e-15);
        let y = prox_step(ModelKind::TRUNCATED, &x, &e, 2.0, &z).unwrap();
        assert_abs_diff_eq!(y[0], 1.25, epsilon = 1e-15);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn prox_linear_zero_jacobian_is_stationary() {
        let x = [1.0, -2.0];
        let e = ev(5.0, vec![0.0, 0.0]);
        let y = prox_step(ModelKind::PROX_LINEAR, &x, &e, 3.0, &RegularizerSpec::ZERO).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn truncated_below_floor_does_not_move() {
        let x = [1.0];
        let e = ModelEval { value: 0.5, c: 0.5, g: vec![2.0], lip: 2.0 };
        let y = prox_step(ModelKind::truncated(0.5), &x, &e, 1.0, &RegularizerSpec::ZERO).unwrap();
        assert_eq!(y, x.to_vec());
    }

    #[test]
    fn unsupported_regularizer_combination() {
        let l1 = RegularizerSpec::l1(0.1, 2).unwrap();
        let e = ev(1.0, vec![1.0, 1.0]);
        for m in [ModelKind::PROX_LINEAR, ModelKind::TRUNCATED] {
            assert!(matches!(prox_step(m, &[0.0, 0.0], &e, 1.0, &l1), Err(crate::Error::Config(_))));
        }
        assert!(prox_step(ModelKind::SUBGRADIENT, &[0.0, 0.0], &e, 0.0, &RegularizerSpec::ZERO).is_err());
    }

    #[test]
    fn l1_subgradient_step_soft_thresholds() {
        let l1 = RegularizerSpec::l1(1.0, 3).unwrap();
        assert_abs_diff_eq!(l1.lip_omega, 3f64.sqrt());
        let e = ev(1.0, vec![2.0, -2.0, 0.0]);
        let y = prox_step(ModelKind::SUBGRADIENT, &[1.0, 0.0, 0.2], &e, 2.0, &l1).unwrap();
        // x − g/γ = (0, 1, 0.2), threshold 0.5
        assert_eq!(y, vec![0.0, 0.5, 0.0]);
    }

    /// Coordinate-wise check of the l1 subproblem: each coordinate is a 1-D
    /// problem `g_j y + μ|y| + γ/2 (y − x_j)²`.
    #[test]
    fn l1_step_is_coordinatewise_optimal() {
        let l1 = RegularizerSpec::l1(0.7, 4).unwrap();
        let x = [0.3, -1.2, 2.0, 0.05];
        let e = ev(1.0, vec![0.4, -0.9, 3.1, 0.0]);
        let gamma = 1.7;
        let y = prox_step(ModelKind::SUBGRADIENT, &x, &e, gamma, &l1).unwrap();
        for j in 0..4 {
            let f = |v: f64| e.g[j] * v + l1.mu * v.abs() + 0.5 * gamma * (v - x[j]).powi(2);
            let best = (0..=40_000)
                .map(|i| -5.0 + 10.0 * i as f64 / 40_000.0)
                .map(f)
                .fold(f64::INFINITY, f64::min);
            assert!(f(y[j]) <= best + 1e-9);
        }
    }

    fn kinds() -> impl Strategy<Value = ProblemKind> {
        prop_oneof![Just(ProblemKind::R1), Just(ProblemKind::R2), Just(ProblemKind::R3), Just(ProblemKind::Lad)]
    }

    fn models() -> impl Strategy<Value = ModelKind> {
        prop_oneof![Just(ModelKind::SUBGRADIENT), Just(ModelKind::PROX_LINEAR), Just(ModelKind::TRUNCATED)]
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.5f64..1.5, 3)
    }

    proptest! {
        #[test]
        fn model_is_tangent_at_anchor(kind in kinds(), m in models(), a in vec3(), x in vec3(), b in -3.0f64..3.0) {
            let e = model_eval(m, kind, &x, s(&a, b)).unwrap();
            let f = evaluate_loss(kind, &x, s(&a, b)).unwrap();
            prop_assert!((model_value(m, &x, &e, &x) - f).abs() <= 1e-12 * (1.0 + f));
        }

        #[test]
        fn model_is_convex_along_segments(
            kind in kinds(), m in models(), a in vec3(), x in vec3(), y in vec3(), z in vec3(),
            b in -3.0f64..3.0, lam in 0.0f64..1.0,
        ) {
            let e = model_eval(m, kind, &x, s(&a, b)).unwrap();
            let mix: Vec<f64> = y.iter().zip(&z).map(|(p, q)| lam * p + (1.0 - lam) * q).collect();
            let lhs = model_value(m, &x, &e, &mix);
            let rhs = lam * model_value(m, &x, &e, &y) + (1.0 - lam) * model_value(m, &x, &e, &z);
            prop_assert!(lhs <= rhs + 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn lip_bounds_model_variation(kind in kinds(), m in models(), a in vec3(), x in vec3(), y in vec3(), z in vec3(), b in -3.0f64..3.0) {
            let e = model_eval(m, kind, &x, s(&a, b)).unwrap();
            let dv = (model_value(m, &x, &e, &y) - model_value(m, &x, &e, &z)).abs();
            let bound = e.lip * crate::linalg::dist(&y, &z);
            prop_assert!(dv <= bound + 1e-12 * (1.0 + bound));
        }

        #[test]
        fn truncated_dominates_floor_and_linearization(kind in kinds(), a in vec3(), x in vec3(), y in vec3(), b in -3.0f64..3.0) {
            let t = ModelKind::TRUNCATED;
            let e = model_eval(t, kind, &x, s(&a, b)).unwrap();
            let v = model_value(t, &x, &e, &y);
            prop_assert!(v >= t.lower_bound);
            prop_assert!(v >= model_value(ModelKind::SUBGRADIENT, &x, &e, &y));
        }

        #[test]
        fn subgradient_matches_finite_differences(kind in kinds(), a in vec3(), x in vec3(), b in -3.0f64..3.0) {
            let f = evaluate_loss(kind, &x, s(&a, b)).unwrap();
            prop_assume!(f > 1e-3);
            let e = model_eval(ModelKind::SUBGRADIENT, kind, &x, s(&a, b)).unwrap();
            let h = 1e-6;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (evaluate_loss(kind, &xp, s(&a, b)).unwrap() - evaluate_loss(kind, &xm, s(&a, b)).unwrap()) / (2.0 * h);
                let scale = e.lip.max(1.0);
                prop_assert!((fd - e.g[j]).abs() <= 1e-5 * scale, "j={} fd={} g={}", j, fd, e.g[j]);
            }
        }
    }
}
