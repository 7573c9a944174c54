//! Regularization-weight (inverse stepsize) policies.
//!
//! `γ_k` is the weight of the quadratic term in the model subproblem, so a
//! larger `γ_k` means a shorter step. Three policies are provided:
//!
//! | policy    | scale factor                  |
//! |-----------|-------------------------------|
//! | constant  | `α`                           |
//! | growth    | `α (G(‖xᵏ‖) + 1)`             |
//! | reference | `max{Lip(xᵏ, ξ'), α}`         |
//!
//! and each scale is multiplied by `√K` (finite horizon) or `k^ζ`
//! (asymptotic), plus the `ρ + κ (+ τ)` offset in the theory modes. The
//! experiment mode uses `θ√K`, `θ G(‖xᵏ‖) √K` and `θ max{Lip, α} √K`. The
//! convex mode drops all offsets.
//!
//! Policies are pure: the caller supplies `G(‖xᵏ‖)` and the reference
//! Lipschitz estimate, and is responsible for drawing the latter from a sample
//! independent of the one used in the update.

use serde::{Deserialize, Serialize};

use crate::error::{config, guard, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Constant,
    Growth,
    Reference,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::Constant, PolicyKind::Growth, PolicyKind::Reference];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Constant => "constant",
            PolicyKind::Growth => "growth",
            PolicyKind::Reference => "reference",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepsizeMode {
    /// `ρ + κ (+ τ) + scale·√K`
    TheorySqrtK,
    /// `ρ + κ (+ τ) + scale·k^ζ`
    TheoryKZeta,
    /// `θ·scale·√K` with no offsets
    Experiment,
    /// `scale·√K` with no offsets (convex problems, `κ = τ = 0`)
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepsizeParams {
    pub rho: f64,
    pub kappa: f64,
    pub tau: f64,
    pub alpha: f64,
    pub theta: f64,
    pub zeta: f64,
    pub horizon: u64,
    pub mode: StepsizeMode,
}

impl Default for StepsizeParams {
    fn default() -> Self {
        StepsizeParams {
            rho: 1.0,
            kappa: 0.0,
            tau: 0.0,
            alpha: 1.0,
            theta: 1.0,
            zeta: 0.75,
            horizon: 1,
            mode: StepsizeMode::TheorySqrtK,
        }
    }
}

impl StepsizeParams {
    pub fn experiment(theta: f64, alpha: f64, horizon: u64) -> Self {
        StepsizeParams { theta, alpha, horizon, mode: StepsizeMode::Experiment, ..Default::default() }
    }

    pub fn convex(alpha: f64, horizon: u64) -> Self {
        StepsizeParams { alpha, horizon, mode: StepsizeMode::Convex, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.rho, self.kappa, self.tau, self.alpha, self.theta, self.zeta];
        if finite.iter().any(|v| !v.is_finite()) {
            return config("stepsize parameters must be finite");
        }
        if self.alpha <= 0.0 {
            return config(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.horizon == 0 {
            return config("horizon K must be positive");
        }
        match self.mode {
            StepsizeMode::TheorySqrtK | StepsizeMode::TheoryKZeta => {
                if self.kappa < 0.0 || self.tau < 0.0 {
                    return config("kappa and tau must be >= 0");
                }
                if self.rho <= self.kappa + self.tau {
                    return config(format!(
                        "rho ({}) must exceed kappa + tau ({})",
                        self.rho,
                        self.kappa + self.tau
                    ));
                }
                if self.mode == StepsizeMode::TheoryKZeta && !(self.zeta > 0.5 && self.zeta < 1.0) {
                    return config(format!("zeta must lie in (1/2, 1), got {}", self.zeta));
                }
            }
            StepsizeMode::Experiment => {
                if self.theta <= 0.0 {
                    return config(format!("theta must be > 0, got {}", self.theta));
                }
            }
            StepsizeMode::Convex => {}
        }
        Ok(())
    }
}

/// `γ_k` for iteration `k ≥ 1`.
///
/// `growth_value` is `G(‖xᵏ‖)` (read by the growth policy) and `lip_ref` is
/// `Lip(xᵏ, ξ')` for an independent sample `ξ'` (read by the reference
/// policy). Unused inputs are ignored.
pub fn gamma(policy: PolicyKind, p: &StepsizeParams, k: u64, growth_value: f64, lip_ref: f64) -> Result<f64> {
    if k == 0 {
        return config("iteration counter starts at 1");
    }
    if p.mode == StepsizeMode::TheorySqrtK && k > p.horizon {
        return config(format!("iteration {k} beyond horizon {}", p.horizon));
    }
    let growth = match policy {
        PolicyKind::Growth => {
            let g = guard(growth_value, "growth value")?;
            if g < 0.0 {
                return config("growth value must be >= 0");
            }
            g
        }
        _ => 0.0,
    };
    let clipped = match policy {
        PolicyKind::Reference => {
            let l = guard(lip_ref, "reference Lipschitz estimate")?;
            if l < 0.0 {
                return config("reference Lipschitz estimate must be >= 0");
            }
            l.max(p.alpha)
        }
        _ => 0.0,
    };
    let sqrt_k = (p.horizon as f64).sqrt();
    let g = match p.mode {
        StepsizeMode::TheorySqrtK => match policy {
            PolicyKind::Constant => p.rho + p.kappa + p.alpha * sqrt_k,
            PolicyKind::Growth => p.rho + p.kappa + p.tau + p.alpha * (growth + 1.0) * sqrt_k,
            PolicyKind::Reference => p.rho + p.tau + p.kappa + clipped * sqrt_k,
        },
        StepsizeMode::TheoryKZeta => {
            let kz = (k as f64).powf(p.zeta);
            match policy {
                PolicyKind::Constant => p.rho + p.kappa + p.alpha * kz,
                PolicyKind::Growth => p.rho + p.kappa + (growth + 1.0) * kz,
                PolicyKind::Reference => p.rho + p.kappa + p.tau + clipped * kz,
            }
        }
        StepsizeMode::Experiment => match policy {
            PolicyKind::Constant => p.theta * sqrt_k,
            PolicyKind::Growth => p.theta * growth * sqrt_k,
            PolicyKind::Reference => p.theta * clipped * sqrt_k,
        },
        StepsizeMode::Convex => match policy {
            PolicyKind::Constant => p.alpha * sqrt_k,
            PolicyKind::Growth => p.alpha * (growth + 1.0) * sqrt_k,
            PolicyKind::Reference => clipped * sqrt_k,
        },
    };
    let g = guard(g, "gamma")?;
    if g <= 0.0 {
        return Err(Error::Diverged(format!("non-positive regularizer weight {g}")));
    }
    Ok(g)
}

/// Monte-Carlo estimates of the clipped ratio moments
/// `E[X²/max{Y², α²}]`, `E[X/max{Y², α²}]` and `E[X/max{Y, α}]`
/// for paired independent draws of nonnegative `X` and `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClippedMoments {
    pub m2: f64,
    pub m1a: f64,
    pub m1b: f64,
    /// Standard errors of the three estimates.
    pub se: [f64; 3],
    /// `√(mean |X − Y|²)`
    pub sigma_hat: f64,
}

impl ClippedMoments {
    /// The three upper bounds `((σ+α)/α)²`, `σ/α² + 1/α`, `σ/α + 1`.
    pub fn bounds(&self, alpha: f64) -> [f64; 3] {
        let s = self.sigma_hat;
        [((s + alpha) / alpha).powi(2), s / (alpha * alpha) + 1.0 / alpha, s / alpha + 1.0]
    }

    /// Whether each estimate lies below its bound within `z` standard errors.
    pub fn within(&self, alpha: f64, z: f64) -> [bool; 3] {
        let b = self.bounds(alpha);
        let m = [self.m2, self.m1a, self.m1b];
        std::array::from_fn(|i| m[i] <= b[i] + z * self.se[i])
    }
}

pub fn clipped_ratio_moments(xs: &[f64], ys: &[f64], alpha: f64) -> Result<ClippedMoments> {
    if xs.is_empty() || xs.len() != ys.len() {
        return config("clipped moments need two nonempty samples of equal length");
    }
    if !(alpha > 0.0) {
        return config("alpha must be > 0");
    }
    if xs.iter().chain(ys).any(|v| !(*v >= 0.0)) {
        return config("samples must be nonnegative");
    }
    let n = xs.len() as f64;
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    let mut diff_sq = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let terms = [x * x / (y * y).max(alpha * alpha), x / (y * y).max(alpha * alpha), x / y.max(alpha)];
        for i in 0..3 {
            sum[i] += terms[i];
            sum_sq[i] += terms[i] * terms[i];
        }
        diff_sq += (x - y) * (x - y);
    }
    let mean: [f64; 3] = std::array::from_fn(|i| sum[i] / n);
    let se: [f64; 3] = std::array::from_fn(|i| {
        if xs.len() < 2 {
            0.0
        } else {
            let var = ((sum_sq[i] - n * mean[i] * mean[i]) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        }
    });
    Ok(ClippedMoments { m2: mean[0], m1a: mean[1], m1b: mean[2], se, sigma_hat: (diff_sq / n).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn theory(rho: f64, kappa: f64, tau: f64, alpha: f64, horizon: u64) -> StepsizeParams {
        StepsizeParams { rho, kappa, tau, alpha, horizon, ..Default::default() }
    }

    #[test]
    fn hand_values() {
        let p = theory(1.0, 0.0, 0.0, 0.5, 10_000);
        assert_eq!(gamma(PolicyKind::Constant, &p, 1, 0.0, 0.0).unwrap(), 51.0);
        let p = theory(1.0, 0.0, 0.0, 1.0, 100);
        assert_eq!(gamma(PolicyKind::Growth, &p, 7, 3.0, 0.0).unwrap(), 41.0);
        assert_eq!(gamma(PolicyKind::Reference, &p, 7, 0.0, 0.2).unwrap(), 11.0);
        assert_eq!(gamma(PolicyKind::Reference, &p, 7, 0.0, 2.5).unwrap(), 26.0);
    }

    #[test]
    fn experiment_mode_drops_offsets() {
        let p = StepsizeParams { rho: 5.0, ..StepsizeParams::experiment(0.5, 1.0, 400) };
        assert_eq!(gamma(PolicyKind::Constant, &p, 1, 0.0, 0.0).unwrap(), 10.0);
        assert_eq!(gamma(PolicyKind::Growth, &p, 1, 3.0, 0.0).unwrap(), 30.0);
        assert_eq!(gamma(PolicyKind::Reference, &p, 1, 0.0, 0.1).unwrap(), 10.0);
        assert_eq!(gamma(PolicyKind::Reference, &p, 1, 0.0, 4.0).unwrap(), 40.0);
    }

    #[test]
    fn convex_mode() {
        let p = StepsizeParams::convex(2.0, 100);
        assert_eq!(gamma(PolicyKind::Constant, &p, 1, 0.0, 0.0).unwrap(), 20.0);
        assert_eq!(gamma(PolicyKind::Growth, &p, 1, 1.5, 0.0).unwrap(), 50.0);
        assert_eq!(gamma(PolicyKind::Reference, &p, 1, 0.0, 3.0).unwrap(), 30.0);
    }

    #[test]
    fn kzeta_growth_and_reference() {
        let p = StepsizeParams { mode: StepsizeMode::TheoryKZeta, zeta: 0.5 + 0.25, ..theory(1.0, 0.5, 0.25, 2.0, 1) };
        let k16 = 16f64.powf(0.75);
        assert_eq!(gamma(PolicyKind::Constant, &p, 16, 0.0, 0.0).unwrap(), 1.5 + 2.0 * k16);
        assert_eq!(gamma(PolicyKind::Growth, &p, 16, 3.0, 0.0).unwrap(), 1.5 + 4.0 * k16);
        assert_eq!(gamma(PolicyKind::Reference, &p, 16, 0.0, 0.1).unwrap(), 1.75 + 2.0 * k16);
    }

    #[test]
    fn invalid_inputs() {
        let p = theory(1.0, 0.0, 0.0, 1.0, 10);
        assert!(matches!(gamma(PolicyKind::Growth, &p, 1, f64::NAN, 0.0), Err(Error::Diverged(_))));
        assert!(matches!(gamma(PolicyKind::Reference, &p, 1, 0.0, f64::INFINITY), Err(Error::Diverged(_))));
        assert!(matches!(gamma(PolicyKind::Constant, &p, 11, 0.0, 0.0), Err(Error::Config(_))));
        assert!(theory(1.0, 0.6, 0.4, 1.0, 10).validate().is_err());
        assert!(StepsizeParams { mode: StepsizeMode::TheoryKZeta, zeta: 1.0, ..p }.validate().is_err());
        assert!(StepsizeParams { alpha: 0.0, ..p }.validate().is_err());
        assert!(p.validate().is_ok());
    }

    #[test]
    fn moments_degenerate_cases() {
        let ys: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let m = clipped_ratio_moments(&ys, &ys, 1.0).unwrap();
        assert!(m.m2 <= 1.0 && m.m1b <= 1.0);
        assert_eq!(m.sigma_hat, 0.0);

        let m = clipped_ratio_moments(&[2.0; 10], &[0.0; 10], 1.0).unwrap();
        assert_eq!(m.m2, 4.0);
        assert_eq!(m.sigma_hat, 2.0);
        assert_eq!(m.bounds(1.0)[0], 9.0);

        assert!(clipped_ratio_moments(&[], &[], 1.0).is_err());
        assert!(clipped_ratio_moments(&[1.0], &[1.0, 2.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn reference_is_monotone_and_floored(l1 in 0.0f64..5.0, l2 in 0.0f64..5.0, alpha in 0.1f64..3.0) {
            let p = theory(1.0, 0.0, 0.0, alpha, 100);
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let glo = gamma(PolicyKind::Reference, &p, 1, 0.0, lo).unwrap();
            let ghi = gamma(PolicyKind::Reference, &p, 1, 0.0, hi).unwrap();
            prop_assert!(glo <= ghi);
            if lo <= alpha {
                prop_assert_eq!(glo, gamma(PolicyKind::Reference, &p, 1, 0.0, 0.0).unwrap());
            }
        }

        #[test]
        fn horizon_dependence(k in 1u64..999, policy in prop_oneof![Just(PolicyKind::Constant), Just(PolicyKind::Growth), Just(PolicyKind::Reference)],
                              rho in 0.5f64..3.0, g in 0.0f64..4.0, l in 0.0f64..4.0) {
            let p = theory(rho, 0.1, 0.2, 1.0, 1000);
            let a = gamma(policy, &p, k, g, l).unwrap();
            prop_assert_eq!(a, gamma(policy, &p, k + 1, g, l).unwrap());
            prop_assert!(a > p.rho && p.rho > p.kappa);
            let pz = StepsizeParams { mode: StepsizeMode::TheoryKZeta, ..p };
            let b = gamma(policy, &pz, k, g, l).unwrap();
            prop_assert!(b < gamma(policy, &pz, k + 1, g, l).unwrap());
            prop_assert!(b > p.rho);
        }
    }
}
