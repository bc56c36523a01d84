//! Perfect-recovery condition for LAD with sparse Gaussian noise, the ℓ1 statistical
//! dimension, and the Stein cross-check of a computed solution.

use serde::{Deserialize, Serialize};

use super::{SpoError, SpoProblem, SpoSolution};
use crate::dist::{Kinks, Quadrature};
use crate::eme::{phi, q_tail, EmeProvider};
use crate::moreau::LossSpec;
use crate::optim::brent_log;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCheck {
    pub holds: bool,
    pub margin: f64,
    pub kappa: f64,
}

/// `2∫_κ^∞ (g - κ)² φ(g) dg`.
fn tail_second_moment(kappa: f64) -> f64 {
    2.0 * ((1.0 + kappa * kappa) * q_tail(kappa) - kappa * phi(kappa))
}

/// Whether LAD recovers the signal exactly: `δ ≥ D̄ + min_κ {s̄(1+κ²) + (δ-s̄)·2∫_κ^∞(g-κ)²φ}`.
///
/// `s̄` is the nonzero-noise mass scaled by `δ`, i.e. `δ·P(Z ≠ 0)`.
pub fn perfect_recovery_check(delta: f64, dbar: f64, sbar: f64) -> Result<RecoveryCheck, SpoError> {
    if !(dbar > 0.0 && dbar < 1.0) {
        return Err(SpoError::Domain(format!(
            "D̄ must lie in (0, 1), got {dbar}"
        )));
    }
    if !(sbar > 0.0 && sbar < 1.0) {
        return Err(SpoError::Domain(format!(
            "s̄ must lie in (0, 1), got {sbar}"
        )));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(SpoError::Domain(format!("δ must be positive, got {delta}")));
    }
    let obj = |k: f64| sbar * (1.0 + k * k) + (delta - sbar) * tail_second_moment(k);
    let r = brent_log(obj, 1e-3, 10.0, 1e-12, 1e3, 1e-12);
    let margin = delta - dbar - r.f;
    Ok(RecoveryCheck {
        holds: margin >= 0.0,
        margin,
        kappa: r.x,
    })
}

/// Statistical dimension ratio of the ℓ1 descent cone at a signal with a fraction `rho` of
/// nonzero entries: `min_κ ρ(1+κ²) + (1-ρ)·2∫_κ^∞(g-κ)²φ`.
pub fn l1_stat_dim(rho: f64) -> Result<f64, SpoError> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(SpoError::Domain(format!(
            "sparsity must lie in (0, 1), got {rho}"
        )));
    }
    let obj = |k: f64| rho * (1.0 + k * k) + (1.0 - rho) * tail_second_moment(k);
    Ok(brent_log(obj, 1e-3, 10.0, 1e-12, 1e3, 1e-12).f)
}

/// `|E[e'(αG+Z; κ)·G] - α·E[e''(αG+Z; κ)]|` at a solution, with `e''` by central differences.
pub fn stein_crosscheck(sol: &SpoSolution, p: &SpoProblem) -> Result<f64, SpoError> {
    let (loss, sep) = match &p.loss {
        EmeProvider::SeparableLoss(l, s) => (*l, s),
        _ => {
            return Err(SpoError::NotApplicable(
                "the Stein check needs a separable loss".into(),
            ))
        }
    };
    if loss == LossSpec::Abs {
        return Err(SpoError::NotApplicable(
            "the absolute loss has no second envelope derivative".into(),
        ));
    }
    let (alpha, kappa) = (sol.alpha, sol.kappa);
    if alpha == 0.0 {
        return Ok(0.0);
    }
    let f = sep.func();
    let h = 1e-6;
    let kinks = f.env_kinks(kappa);
    let quad = Quadrature::default();
    let lhs = sep
        .dist()
        .expectation_with(&quad, alpha, Kinks::in_x(&kinks), |n| {
            f.env_dx_unchecked(n.x, kappa) * n.g
        })
        .map_err(crate::eme::EmeError::from)?;
    let second = sep
        .dist()
        .expectation_with(&quad, alpha, Kinks::in_x(&kinks), |n| {
            (f.env_dx_unchecked(n.x + h, kappa) - f.env_dx_unchecked(n.x - h, kappa)) / (2.0 * h)
        })
        .map_err(crate::eme::EmeError::from)?;
    Ok((lhs - alpha * second).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::ScalarDist;
    use crate::spo::{solve_fixed_point, FixedPointOptions};
    use approx::assert_abs_diff_eq;

    #[test]
    fn tail_integral_matches_quadrature() {
        for k in [0.0, 0.3, 1.0, 2.5] {
            let rule = crate::quad::QuadRule::gauss_legendre(64);
            let num: f64 = (0..40)
                .map(|i| {
                    let a = k + i as f64 * 0.25;
                    rule.integrate(a, a + 0.25, |g| (g - k).powi(2) * phi(g))
                })
                .sum();
            assert_abs_diff_eq!(tail_second_moment(k), 2.0 * num, epsilon = 1e-13);
        }
    }

    #[test]
    fn l1_statistical_dimension() {
        let d = l1_stat_dim(0.1).unwrap();
        assert!((0.32..0.34).contains(&d), "{d}");
        // Small sparsity gives a small cone, dense signals nearly fill the space.
        assert!(l1_stat_dim(0.01).unwrap() < 0.1);
        assert!(l1_stat_dim(0.9).unwrap() > 0.95);
    }

    #[test]
    fn figure_one_setting() {
        let dbar = l1_stat_dim(0.1).unwrap();
        let hold = perfect_recovery_check(1.2, dbar, 1.2 * 0.3).unwrap();
        assert!(hold.holds && hold.margin > 0.0 && hold.kappa > 0.0);
        let fail = perfect_recovery_check(0.7, dbar, 0.7 * 0.3).unwrap();
        assert!(!fail.holds);
    }

    #[test]
    fn margin_grows_with_delta() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..40 {
            let d = 0.5 + 0.05 * i as f64;
            let m = perfect_recovery_check(d, 0.3, 0.2).unwrap().margin;
            assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn vanishing_noise_mass_reduces_to_cone_threshold() {
        // s̄ → 0: the minimum over κ of (δ)·2∫(g-κ)²φ tends to 0 as κ → ∞.
        let r = perfect_recovery_check(0.5, 0.3, 1e-9).unwrap();
        assert_abs_diff_eq!(r.margin, 0.2, epsilon = 1e-3);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(perfect_recovery_check(1.0, 1.0, 0.5).is_err());
        assert!(perfect_recovery_check(1.0, 0.5, 0.0).is_err());
    }

    #[test]
    fn stein_identity() {
        let sq =
            EmeProvider::separable_loss(LossSpec::Square, ScalarDist::normal(0.0, 1.0).unwrap())
                .unwrap();
        let p = SpoProblem::new(2.0, 1.0, sq, EmeProvider::quad_reg(1.0).unwrap()).unwrap();
        let s = solve_fixed_point(&p, &FixedPointOptions::default()).unwrap();
        assert!(stein_crosscheck(&s, &p).unwrap() <= 1e-8);
        let hub = EmeProvider::separable_loss(
            LossSpec::huber(1.0).unwrap(),
            ScalarDist::normal(0.0, 1.0).unwrap(),
        )
        .unwrap();
        let p = SpoProblem::new(2.0, 1.0, hub, EmeProvider::quad_reg(1.0).unwrap()).unwrap();
        let s = solve_fixed_point(&p, &FixedPointOptions::default()).unwrap();
        assert!(stein_crosscheck(&s, &p).unwrap() <= 1e-5);
        let mut zero = s.clone();
        zero.alpha = 0.0;
        assert_eq!(stein_crosscheck(&zero, &p).unwrap(), 0.0);
        let abs = EmeProvider::separable_loss(LossSpec::Abs, ScalarDist::normal(0.0, 1.0).unwrap())
            .unwrap();
        let p = SpoProblem::new(2.0, 1.0, abs, EmeProvider::quad_reg(1.0).unwrap()).unwrap();
        assert!(matches!(
            stein_crosscheck(&s, &p),
            Err(SpoError::NotApplicable(_))
        ));
    }
}
