//! Closed-form constants of the consensus/centroid error analysis.
//!
//! The consensus error obeys a recursion with coefficients `θ₁…θ₄`, the
//! centroid error one with `α₁…α₃`; stacking both over a period gives the 2×2
//! coupling `H` and drive `p`. Steady state is the explicit upper bound on
//! `(I − H)⁻¹ p` with higher-order remainders dropped, as in the analysis.

use std::fmt::Write as _;

use nalgebra::Matrix2;
use thiserror::Error;

use crate::linalg;

/// Remainders that the closed forms omit.
pub const REMAINDER_CAVEAT: &str = "O(mu^2) remainder of alpha2 and O(mu^3) terms of the coupled recursion are dropped";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("step size must be positive and finite (got {0})")]
    BadStepSize(f64),
    #[error("sequence length must be at least 1")]
    BadTau,
    #[error("agent count must be at least 1")]
    BadAgents,
    #[error("epsilon must lie in [0, 1) (got {0})")]
    EpsilonOutOfRange(f64),
    #[error("epsilon {0} is outside the rate regime 0 < eps <= 3/4")]
    OutsideRegime(f64),
    #[error("problem constants must be finite and nonnegative with nu > 0")]
    BadConstants,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub mu: f64,
    pub tau: usize,
    pub eps: f64,
    pub k: usize,
    pub nu: f64,
    pub delta: f64,
    pub sigma_sq: f64,
    pub beta_sq: f64,
    pub zeta_sq: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<(), BoundError> {
        if !self.mu.is_finite() || self.mu <= 0.0 {
            return Err(BoundError::BadStepSize(self.mu));
        }
        if self.tau == 0 {
            return Err(BoundError::BadTau);
        }
        if self.k == 0 {
            return Err(BoundError::BadAgents);
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(BoundError::EpsilonOutOfRange(self.eps));
        }
        let c = [self.nu, self.delta, self.sigma_sq, self.beta_sq, self.zeta_sq];
        if c.iter().any(|v| !v.is_finite() || *v < 0.0) || self.nu <= 0.0 {
            return Err(BoundError::BadConstants);
        }
        Ok(())
    }

    fn beta_sq_eff(&self) -> f64 {
        self.beta_sq
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thetas {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    /// Set when `μ > 1/(2δ)`.
    pub step_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alphas {
    pub alpha1: f64,
    /// Leading-order term `2δ²μ/(νK)`.
    pub alpha2: f64,
    /// The dropped higher-order part of α₂, `3β²μ²/K`.
    pub alpha2_remainder: f64,
    pub alpha3: f64,
    /// Set when `μ > ν/δ²`.
    pub step_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pub h: [[f64; 2]; 2],
    pub p: [f64; 2],
    pub rho_h: f64,
    pub gamma: f64,
    /// Set when `γ ≥ 1`, i.e. the stated rate certifies no contraction.
    pub gamma_flag: bool,
    pub admissible_mu: f64,
    /// Set when `μ` exceeds [`admissible_step_size`].
    pub step_warning: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Centroid component of the explicit `(I − H)⁻¹ p` bound.
    pub v1: f64,
    /// Consensus component.
    pub v2: f64,
    /// `2 (v1 + v2)`.
    pub bound: f64,
    /// Three-term order expression with unit constants.
    pub o_form: f64,
    /// Set when `ε > 3/4`, outside the regime of the rate statement.
    pub regime_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    pub inputs: BoundInputs,
    pub thetas: Thetas,
    pub alphas: Alphas,
    pub coupling: Coupling,
    pub steady_state: SteadyState,
}

pub fn consensus_thetas(i: &BoundInputs) -> Result<Thetas, BoundError> {
    i.validate()?;
    let (mu, tau, eps, k) = (i.mu, i.tau as f64, i.eps, i.k as f64);
    let (d2, b2, z2, s2) = (i.delta * i.delta, i.beta_sq_eff(), i.zeta_sq, i.sigma_sq);
    let ratio = (1.0 + eps) / (1.0 - eps);
    let mu2 = mu * mu;
    let theta1 = 0.5 * eps * (1.0 + eps);
    let theta2 = 3.0 * tau * (4.0 * d2 + b2) * ratio * mu2 + 18.0 * tau * b2 * mu2;
    let theta3 = 4.0 * tau * (d2 + b2 * k) * ratio * mu2 + 18.0 * tau * b2 * k * mu2;
    let theta4 = 2.0 * tau * (3.0 * tau * b2 * ratio + 18.0 * tau * b2) * mu2 * z2
        + 2.0 * tau * (6.0 * tau + ratio) * mu2 * s2;
    let step_warning = mu > 1.0 / (2.0 * i.delta);
    Ok(Thetas { theta1, theta2, theta3, theta4, step_warning })
}

pub fn centroid_alphas(i: &BoundInputs) -> Result<Alphas, BoundError> {
    i.validate()?;
    let (mu, k) = (i.mu, i.k as f64);
    let d2 = i.delta * i.delta;
    let b2 = i.beta_sq_eff();
    let mu2 = mu * mu;
    Ok(Alphas {
        alpha1: 1.0 - i.nu * mu / 2.0,
        alpha2: 2.0 * d2 * mu / (i.nu * k),
        alpha2_remainder: 3.0 * b2 * mu2 / k,
        alpha3: 3.0 * b2 * mu2 * i.zeta_sq / k + mu2 * i.sigma_sq / k,
        step_warning: mu > i.nu / d2,
    })
}

/// `min(√((1 − 0.75ε)(1 − ε)) / (5τ√(4δ² + β²)), 4/(3ντ))`.
pub fn admissible_step_size(i: &BoundInputs) -> Result<f64, BoundError> {
    i.validate()?;
    let tau = i.tau as f64;
    let a = ((1.0 - 0.75 * i.eps) * (1.0 - i.eps)).sqrt() / (5.0 * tau * (4.0 * i.delta * i.delta + i.beta_sq_eff()).sqrt());
    let b = 4.0 / (3.0 * i.nu * tau);
    Ok(a.min(b))
}

/// `γ = 1 − τνμ/8` at `ε = 0`, else `1 − τνμ/4 + (1 + ε)/2`.
pub fn rate(i: &BoundInputs) -> Result<f64, BoundError> {
    i.validate()?;
    let tnm = i.tau as f64 * i.nu * i.mu;
    if i.eps == 0.0 {
        Ok(1.0 - tnm / 8.0)
    } else if i.eps <= 0.75 {
        Ok(1.0 - tnm / 4.0 + (1.0 + i.eps) / 2.0)
    } else {
        Err(BoundError::OutsideRegime(i.eps))
    }
}

pub fn coupling_and_rate(i: &BoundInputs) -> Result<Coupling, BoundError> {
    let th = consensus_thetas(i)?;
    let al = centroid_alphas(i)?;
    let gamma = rate(i)?;
    let tau = i.tau as f64;
    let h = [
        [al.alpha1.powi(i.tau as i32), al.alpha2 * tau * (1.0 + 1.5 * th.theta1)],
        [1.5 * tau * th.theta3, 1.5 * (th.theta1 + tau * th.theta2)],
    ];
    let p = [tau * al.alpha3, 1.5 * th.theta4];
    let admissible_mu = admissible_step_size(i)?;
    Ok(Coupling {
        h,
        p,
        rho_h: linalg::spectral_radius_2x2(&h),
        gamma,
        gamma_flag: gamma >= 1.0,
        admissible_mu,
        step_warning: i.mu > admissible_mu,
    })
}

/// Explicit steady-state MSD bound.
///
/// Only `ε ≥ 1` is rejected; `ε > 3/4` is evaluated and flagged.
pub fn steady_state_bound(i: &BoundInputs) -> Result<SteadyState, BoundError> {
    i.validate()?;
    let (mu, tau, eps, k, nu) = (i.mu, i.tau as f64, i.eps, i.k as f64, i.nu);
    let (d2, b2z2, s2) = (i.delta * i.delta, i.beta_sq_eff() * i.zeta_sq, i.sigma_sq);
    let (mu2, tau2, nu2) = (mu * mu, tau * tau, nu * nu);
    let om = 1.0 - eps;
    let om2 = om * om;
    let op = 1.0 + eps;
    let v1 = 4.0 * mu * s2 / (nu * k)
        + 8640.0 * mu2 * tau2 * d2 * s2 / (nu2 * k * om)
        + 1440.0 * mu2 * tau * op * d2 * s2 / (nu2 * k * om2)
        + 12.0 * mu * b2z2 / (nu * k)
        + 4320.0 * mu2 * tau2 * op * d2 * b2z2 / (nu2 * k * om2)
        + 25920.0 * mu2 * tau2 * d2 * b2z2 / (nu2 * k * om);
    let v2 = 540.0 * mu2 * tau2 * s2 / om
        + 90.0 * mu2 * tau * op * s2 / om2
        + 1620.0 * mu2 * tau2 * b2z2 / om
        + 270.0 * mu2 * tau2 * op * b2z2 / om2;
    let noise = s2 + b2z2;
    let o_form = mu * noise / (nu * k) + mu2 * tau2 * d2 * op * noise / (nu2 * k * om2) + mu2 * tau2 * op * noise / om2;
    Ok(SteadyState { v1, v2, bound: 2.0 * (v1 + v2), o_form, regime_flag: eps > 0.75 })
}

pub fn evaluate(i: &BoundInputs) -> Result<BoundConstants, BoundError> {
    Ok(BoundConstants {
        inputs: i.clone(),
        thetas: consensus_thetas(i)?,
        alphas: centroid_alphas(i)?,
        coupling: coupling_and_rate(i)?,
        steady_state: steady_state_bound(i)?,
    })
}

/// Transient constant `c₁ = 2√2 κ (ω₁ + χ₁)` from the measured centroid error
/// `ω₁` and consensus error `χ₁` after the first period; `κ` is the 2-norm
/// condition number of `H`.
pub fn transient_c1(h: &[[f64; 2]; 2], omega1: f64, chi1: f64) -> f64 {
    let m = Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1]);
    let sv = m.singular_values();
    let kappa = if sv.min() > 0.0 { sv.max() / sv.min() } else { f64::INFINITY };
    2.0 * std::f64::consts::SQRT_2 * kappa * (omega1 + chi1)
}

impl BoundConstants {
    /// Flat `key=value` lines in a fixed order.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let i = &self.inputs;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("mu", format!("{:e}", i.mu));
        kv("tau", i.tau.to_string());
        kv("eps", format!("{:e}", i.eps));
        kv("K", i.k.to_string());
        kv("nu", format!("{:e}", i.nu));
        kv("delta", format!("{:e}", i.delta));
        kv("sigma_sq", format!("{:e}", i.sigma_sq));
        kv("beta_sq", format!("{:e}", i.beta_sq));
        kv("zeta_sq", format!("{:e}", i.zeta_sq));
        let t = &self.thetas;
        kv("theta1", format!("{:e}", t.theta1));
        kv("theta2", format!("{:e}", t.theta2));
        kv("theta3", format!("{:e}", t.theta3));
        kv("theta4", format!("{:e}", t.theta4));
        kv("theta_step_warning", t.step_warning.to_string());
        let a = &self.alphas;
        kv("alpha1", format!("{:e}", a.alpha1));
        kv("alpha2", format!("{:e}", a.alpha2));
        kv("alpha2_remainder", format!("{:e}", a.alpha2_remainder));
        kv("alpha3", format!("{:e}", a.alpha3));
        kv("alpha_step_warning", a.step_warning.to_string());
        let c = &self.coupling;
        kv("H11", format!("{:e}", c.h[0][0]));
        kv("H12", format!("{:e}", c.h[0][1]));
        kv("H21", format!("{:e}", c.h[1][0]));
        kv("H22", format!("{:e}", c.h[1][1]));
        kv("p1", format!("{:e}", c.p[0]));
        kv("p2", format!("{:e}", c.p[1]));
        kv("rho_H", format!("{:e}", c.rho_h));
        kv("gamma", format!("{:e}", c.gamma));
        kv("gamma_ge_one", c.gamma_flag.to_string());
        kv("mu_admissible", format!("{:e}", c.admissible_mu));
        kv("mu_warning", c.step_warning.to_string());
        let s = &self.steady_state;
        kv("steady_state_v1", format!("{:e}", s.v1));
        kv("steady_state_v2", format!("{:e}", s.v2));
        kv("steady_state_bound", format!("{:e}", s.bound));
        kv("steady_state_o_form", format!("{:e}", s.o_form));
        kv("regime_flag", s.regime_flag.to_string());
        kv("caveat", REMAINDER_CAVEAT.to_string());
        out
    }
}
