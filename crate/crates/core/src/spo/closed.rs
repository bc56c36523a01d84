//! Closed-form errors for square loss.

use serde::{Deserialize, Serialize};

use super::SpoError;
use crate::optim::brent;

fn positive(name: &str, v: f64) -> Result<(), SpoError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SpoError::Domain(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn nonneg(name: &str, v: f64) -> Result<(), SpoError> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(SpoError::Domain(format!("{name} must be >= 0, got {v}")))
    }
}

/// Least squares: `σ²/(δ - 1)`.
pub fn closed_ls(delta: f64, sigma2: f64) -> Result<f64, SpoError> {
    nonneg("σ²", sigma2)?;
    if !(delta > 1.0) {
        return Err(SpoError::Domain(format!(
            "least squares needs δ > 1, got {delta}"
        )));
    }
    Ok(sigma2 / (delta - 1.0))
}

/// `κ` of ridge-regularized least squares.
pub fn closed_ridge_kappa(delta: f64, lambda: f64) -> Result<f64, SpoError> {
    positive("δ", delta)?;
    positive("λ", lambda)?;
    let b = 1.0 - delta - lambda;
    Ok((b + (b * b + 4.0 * lambda).sqrt()) / (2.0 * lambda))
}

/// Squared error of ridge-regularized least squares.
pub fn closed_ridge_ls(
    delta: f64,
    lambda: f64,
    sigma2: f64,
    sigmax2: f64,
) -> Result<f64, SpoError> {
    nonneg("σ²", sigma2)?;
    nonneg("σx²", sigmax2)?;
    let k = closed_ridge_kappa(delta, lambda)?;
    let r = delta * (k / (1.0 + k)).powi(2);
    Ok((r * sigma2 + lambda * lambda * sigmax2 * k * k) / (1.0 - r))
}

/// Cone-constrained least squares: `σ²D̄/(δ - D̄)`.
pub fn closed_cone_ls(delta: f64, dbar: f64, sigma2: f64) -> Result<f64, SpoError> {
    nonneg("σ²", sigma2)?;
    if !(dbar > 0.0 && dbar < 1.0) {
        return Err(SpoError::Domain(format!(
            "D̄ must lie in (0, 1), got {dbar}"
        )));
    }
    if !(delta > dbar) {
        return Err(SpoError::Domain(format!(
            "cone least squares needs δ > D̄, got δ = {delta}"
        )));
    }
    Ok(sigma2 * dbar / (delta - dbar))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmseRidge {
    /// Error of the optimally tuned ridge estimator.
    pub o_star: f64,
    /// Minimizer of `(δx² + σ²(1-x)²)/(δ - (1-x)²)` over `x = κλ ∈ (0, 1)`.
    pub x_star: f64,
}

/// Ridge least squares at the best `λ`, for a standard Gaussian signal.
pub fn mmse_optimal_ridge(delta: f64, sigma2: f64) -> Result<MmseRidge, SpoError> {
    positive("δ", delta)?;
    positive("σ²", sigma2)?;
    let o_star = 0.5
        * (1.0 - sigma2 - delta
            + ((1.0 - delta).powi(2) + 2.0 * sigma2 * (delta + 1.0) + sigma2 * sigma2).sqrt());
    let lo = (1.0 - delta.sqrt()).max(0.0);
    let f = |x: f64| {
        let den = delta - (1.0 - x).powi(2);
        if den <= 0.0 {
            f64::INFINITY
        } else {
            (delta * x * x + sigma2 * (1.0 - x).powi(2)) / den
        }
    };
    let x_star = brent(f, lo, 1.0, 1e-13).x;
    Ok(MmseRidge { o_star, x_star })
}
