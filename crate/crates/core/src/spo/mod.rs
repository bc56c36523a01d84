//! Scalar Performance Optimization.
//!
//! For `α, τg, β, τh ≥ 0` the objective is
//!
//! ```text
//! D = βτg/2 + δ·L(α, τg/β) - ατh/2 - αβ²/(2τh) + λ·F(αβ/τh, αλ/τh)
//! ```
//!
//! and the asymptotic squared error of the estimator is `α*²`, where `α*` is the minimizing
//! `α` of `min_{α,τg} max_{β,τh} D`. Solvers work in `κ = τg/β` and `ν = τh/α`.

mod closed;
mod fixed_point;
mod minimax;
mod recovery;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eme::{EmeError, EmeProvider};

pub use closed::{
    closed_cone_ls, closed_ls, closed_ridge_kappa, closed_ridge_ls, mmse_optimal_ridge, MmseRidge,
};
pub use fixed_point::{
    solve_fixed_point, solve_genlasso_system, solve_ridge_system, solve_unregularized,
    FixedPointOptions,
};
pub use minimax::{
    solve_cone, solve_minimax, solve_sqrt_lasso, MinimaxOptions, Profile, ProfilePoint,
};
pub use recovery::{l1_stat_dim, perfect_recovery_check, stein_crosscheck, RecoveryCheck};

#[derive(Debug, Error, PartialEq)]
pub enum SpoError {
    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("iterate reached α = 0 (perfect recovery); use the minimax solver for this problem")]
    DegenerateSolution,
    #[error("unstable regime: {0}")]
    UnstableRegime(String),
    #[error("objective still decreasing at α_max = {alpha_max} (M = {value})")]
    Unbounded { alpha_max: f64, value: f64 },
    #[error("β = 0 requested with L0 = +∞")]
    InfiniteL0AtBoundary,
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error(transparent)]
    Eme(#[from] EmeError),
}

/// `(δ, λ, L, F)`.
#[derive(Clone, Debug)]
pub struct SpoProblem {
    pub delta: f64,
    pub lambda: f64,
    pub loss: EmeProvider,
    pub reg: EmeProvider,
}

impl SpoProblem {
    pub fn new(
        delta: f64,
        lambda: f64,
        loss: EmeProvider,
        reg: EmeProvider,
    ) -> Result<Self, SpoError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(SpoError::Domain(format!("δ must be positive, got {delta}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(SpoError::Domain(format!("λ must be >= 0, got {lambda}")));
        }
        if lambda == 0.0 && !reg.is_zero_reg() {
            return Err(SpoError::Domain(
                "λ = 0 is only meaningful without a regularizer".into(),
            ));
        }
        Ok(Self {
            delta,
            lambda,
            loss,
            reg,
        })
    }

    /// Whether the `F` block contributes at all.
    pub(crate) fn has_reg(&self) -> bool {
        self.lambda > 0.0 && !self.reg.is_zero_reg()
    }

    /// `D(α, τg, β, τh)` in the original variables, with the limiting values at `α = 0`
    /// (no `F` block) and `β = 0` (`δL → -δL0`).
    pub fn objective(
        &self,
        alpha: f64,
        tau_g: f64,
        beta: f64,
        tau_h: f64,
    ) -> Result<f64, SpoError> {
        if alpha < 0.0 || tau_g < 0.0 || beta < 0.0 || tau_h < 0.0 {
            return Err(SpoError::Domain(
                "SPO variables must be non-negative".into(),
            ));
        }
        let loss_part = if beta == 0.0 {
            let l0 = self.loss.l0();
            if l0.is_infinite() {
                return Err(SpoError::InfiniteL0AtBoundary);
            }
            -self.delta * l0
        } else if tau_g == 0.0 {
            return Err(SpoError::Domain("τg = 0 with β > 0".into()));
        } else {
            0.5 * beta * tau_g + self.delta * self.loss.value(alpha, tau_g / beta)?
        };
        let reg_part = if alpha == 0.0 {
            0.0
        } else if tau_h == 0.0 {
            return Err(SpoError::Domain("τh = 0 with α > 0".into()));
        } else {
            let f = if self.has_reg() {
                self.lambda
                    * self
                        .reg
                        .value(alpha * beta / tau_h, alpha * self.lambda / tau_h)?
            } else {
                0.0
            };
            -0.5 * alpha * tau_h - alpha * beta * beta / (2.0 * tau_h) + f
        };
        Ok(loss_part + reg_part)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    FixedPoint,
    Minimax,
    ClosedForm,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::FixedPoint => "fixed-point",
            Method::Minimax => "minimax",
            Method::ClosedForm => "closed-form",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpoSolution {
    pub alpha: f64,
    pub alpha_sq: f64,
    pub beta: f64,
    pub nu: f64,
    pub kappa: f64,
    pub tau_g: f64,
    pub tau_h: f64,
    pub cost: f64,
    pub method: Method,
    pub iterations: usize,
    pub residual: f64,
    pub flags: Vec<String>,
}

impl SpoSolution {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        alpha: f64,
        beta: f64,
        nu: f64,
        kappa: f64,
        cost: f64,
        method: Method,
        iterations: usize,
        residual: f64,
    ) -> Self {
        Self {
            alpha,
            alpha_sq: alpha * alpha,
            beta,
            nu,
            kappa,
            tau_g: kappa * beta,
            tau_h: nu * alpha,
            cost,
            method,
            iterations,
            residual,
            flags: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }
}

/// Largest violation of the saddle conditions under unilateral moves of size `step`:
/// moving `α` or `τg` must not decrease `D`, moving `β` or `τh` must not increase it.
pub fn saddle_violation(p: &SpoProblem, s: &SpoSolution, step: f64) -> Result<f64, SpoError> {
    let base = [s.alpha, s.tau_g, s.beta, s.tau_h];
    let d = |v: [f64; 4]| p.objective(v[0], v[1], v[2], v[3]);
    let d0 = d(base)?;
    let mut worst = 0.0f64;
    for k in 0..4 {
        for sign in [-1.0, 1.0] {
            let mut v = base;
            v[k] += sign * step;
            // Positive scales stay positive; α and β may sit on their zero boundary.
            if v[k] < 0.0 || ((k == 1 || k == 3) && v[k] == 0.0) {
                continue;
            }
            let change = d(v)? - d0;
            let violation = if k < 2 { -change } else { change };
            worst = worst.max(violation);
        }
    }
    Ok(worst)
}

/// Fixed point first, minimax when the recursion fails or degenerates.
pub fn solve(p: &SpoProblem) -> Result<SpoSolution, SpoError> {
    match solve_fixed_point(p, &FixedPointOptions::default()) {
        Ok(s) => Ok(s),
        Err(SpoError::Eme(e)) => Err(SpoError::Eme(e)),
        Err(first) => {
            let mut s = solve_minimax(p, &MinimaxOptions::default())?;
            s.flags.push(format!("fixed-point fallback: {first}"));
            Ok(s)
        }
    }
}
