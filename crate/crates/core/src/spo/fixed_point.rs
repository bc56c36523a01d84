//! Damped fixed-point recursions on the stationarity conditions of the SPO.

use super::{Method, SpoError, SpoProblem, SpoSolution};
use crate::eme::{EmeProvider, Eval};

#[derive(Clone, Debug)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Starting point `(α, β, ν, κ)`.
    pub init: [f64; 4],
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 20_000,
            damping: 0.5,
            init: [1.0; 4],
        }
    }
}

/// Runs `t ← (1-θ)t + θS(t)` until the damped step is below `tol`. The damping is halved
/// whenever the step norm alternates between growing and shrinking twice in a row.
fn iterate<const N: usize>(
    opts: &FixedPointOptions,
    init: [f64; N],
    mut map: impl FnMut(&[f64; N]) -> Result<[f64; N], SpoError>,
) -> Result<([f64; N], usize, f64), SpoError> {
    let mut t = init;
    let mut theta = opts.damping;
    let mut prev_step = f64::INFINITY;
    let mut prev_trend = 0i8;
    let mut flips = 0;
    for k in 1..=opts.max_iter {
        let s = map(&t)?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(SpoError::NoConvergence {
                iterations: k,
                residual: f64::INFINITY,
            });
        }
        let residual = t
            .iter()
            .zip(&s)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let step = theta * residual;
        for (a, b) in t.iter_mut().zip(&s) {
            *a += theta * (b - *a);
        }
        if step <= opts.tol {
            return Ok((t, k, residual));
        }
        let trend = if step > prev_step { 1 } else { -1 };
        if prev_trend != 0 && trend != prev_trend {
            flips += 1;
            if flips >= 2 && theta > 1.0 / 64.0 {
                theta *= 0.5;
                flips = 0;
            }
        } else {
            flips = 0;
        }
        prev_trend = trend;
        prev_step = step;
    }
    let s = map(&t)?;
    let residual = t
        .iter()
        .zip(&s)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Err(SpoError::NoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

const ALPHA_FLOOR: f64 = 1e-12;

fn degenerate(alpha: f64) -> Result<(), SpoError> {
    if alpha <= ALPHA_FLOOR {
        Err(SpoError::DegenerateSolution)
    } else {
        Ok(())
    }
}

fn loss_eval(p: &EmeProvider, alpha: f64, kappa: f64) -> Result<Eval, SpoError> {
    Ok(p.eval(alpha, kappa)?)
}

/// Cost at a stationary point, in the reparametrized variables.
fn cost(p: &SpoProblem, alpha: f64, beta: f64, nu: f64, kappa: f64) -> Result<f64, SpoError> {
    p.objective(alpha, kappa * beta, beta, nu * alpha)
}

/// General four-variable recursion.
pub fn solve_fixed_point(
    p: &SpoProblem,
    opts: &FixedPointOptions,
) -> Result<SpoSolution, SpoError> {
    if !(p.lambda > 0.0) {
        return Err(SpoError::Domain("the general recursion needs λ > 0".into()));
    }
    let delta = p.delta;
    let lambda = p.lambda;
    let (t, iters, residual) = iterate(opts, opts.init, |t| {
        let [alpha, beta, nu, kappa] = *t;
        degenerate(alpha)?;
        if !(beta > 0.0 && nu > 0.0 && kappa > 0.0) {
            return Err(SpoError::NoConvergence {
                iterations: 0,
                residual: f64::NAN,
            });
        }
        let cf = beta / nu;
        let tf = lambda / nu;
        let f = p.reg.eval(cf, tf)?;
        let l = loss_eval(&p.loss, alpha, kappa)?;
        let a2 = cf * cf - 2.0 * tf * cf * f.d_c - 2.0 * tf * tf * f.d_tau;
        Ok([
            a2.max(0.0).sqrt(),
            (-2.0 * delta * l.d_tau).max(0.0).sqrt(),
            delta * l.d_c / alpha,
            (cf - tf * f.d_c) / beta,
        ])
    })?;
    let [alpha, beta, nu, kappa] = t;
    degenerate(alpha)?;
    let c = cost(p, alpha, beta, nu, kappa)?;
    Ok(SpoSolution::new(
        alpha,
        beta,
        nu,
        kappa,
        c,
        Method::FixedPoint,
        iters,
        residual,
    ))
}

/// `f = 0`: two-variable recursion on `(α, κ)`.
pub fn solve_unregularized(
    delta: f64,
    loss: &EmeProvider,
    opts: &FixedPointOptions,
) -> Result<SpoSolution, SpoError> {
    if !(delta > 1.0) {
        return Err(SpoError::UnstableRegime(format!(
            "without regularization recovery is stable only for δ > 1 (got δ = {delta})"
        )));
    }
    let (t, iters, residual) = iterate(opts, [opts.init[0], opts.init[3]], |t| {
        let [alpha, kappa] = *t;
        degenerate(alpha)?;
        let l = loss_eval(loss, alpha, kappa)?;
        Ok([
            kappa * (-2.0 * delta * l.d_tau).max(0.0).sqrt(),
            alpha / (delta * l.d_c),
        ])
    })?;
    let [alpha, kappa] = t;
    let l = loss_eval(loss, alpha, kappa)?;
    let beta = (-2.0 * delta * l.d_tau).sqrt();
    let nu = 1.0 / kappa;
    let c = 0.5 * beta * beta * kappa + delta * l.value - alpha * beta;
    Ok(SpoSolution::new(
        alpha,
        beta,
        nu,
        kappa,
        c,
        Method::FixedPoint,
        iters,
        residual,
    ))
}

/// Ridge regularizer against a signal of second moment `σx²`: recursion on `(α, κ)`.
pub fn solve_ridge_system(
    delta: f64,
    lambda: f64,
    loss: &EmeProvider,
    sigmax2: f64,
    opts: &FixedPointOptions,
) -> Result<SpoSolution, SpoError> {
    if !(lambda > 0.0) {
        return Err(SpoError::Domain(format!("ridge needs λ > 0, got {lambda}")));
    }
    let (t, iters, residual) = iterate(opts, [opts.init[0], opts.init[3]], |t| {
        let [alpha, kappa] = *t;
        degenerate(alpha)?;
        let l = loss_eval(loss, alpha, kappa)?;
        let a2 = -2.0 * delta * l.d_tau * kappa * kappa + lambda * lambda * kappa * kappa * sigmax2;
        Ok([a2.max(0.0).sqrt(), alpha / (delta * l.d_c + lambda * alpha)])
    })?;
    let [alpha, kappa] = t;
    let l = loss_eval(loss, alpha, kappa)?;
    let beta = (-2.0 * delta * l.d_tau).sqrt();
    let nu = delta * l.d_c / alpha;
    let p = SpoProblem::new(delta, lambda, loss.clone(), EmeProvider::quad_reg(sigmax2)?)?;
    let c = cost(&p, alpha, beta, nu, kappa)?;
    Ok(SpoSolution::new(
        alpha,
        beta,
        nu,
        kappa,
        c,
        Method::FixedPoint,
        iters,
        residual,
    ))
}

/// Square loss against noise of second moment `σ²` with an arbitrary regularizer:
/// recursion on `(α, β)`.
pub fn solve_genlasso_system(
    delta: f64,
    lambda: f64,
    sigma2: f64,
    reg: &EmeProvider,
    opts: &FixedPointOptions,
) -> Result<SpoSolution, SpoError> {
    if !(lambda > 0.0) {
        return Err(SpoError::Domain(format!(
            "generalized LASSO needs λ > 0, got {lambda}"
        )));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(SpoError::Domain(format!(
            "generalized LASSO needs 0 < σ² < ∞, got {sigma2}"
        )));
    }
    let (t, iters, residual) = iterate(opts, [opts.init[0], opts.init[1]], |t| {
        let [alpha, beta] = *t;
        degenerate(alpha)?;
        let s = ((alpha * alpha + sigma2) / delta).sqrt();
        let tf = lambda * s / beta;
        let f = reg.eval(s, tf)?;
        let a2 = s * s - 2.0 * tf * s * f.d_c - 2.0 * tf * tf * f.d_tau;
        Ok([a2.max(0.0).sqrt(), s * (delta - 1.0) + tf * f.d_c])
    })?;
    let [alpha, beta] = t;
    degenerate(alpha)?;
    let s = ((alpha * alpha + sigma2) / delta).sqrt();
    let kappa = delta * s / beta - 1.0;
    let nu = beta / s;
    let p = SpoProblem::new(delta, lambda, EmeProvider::quad_loss(sigma2)?, reg.clone())?;
    let c = cost(&p, alpha, beta, nu, kappa)?;
    Ok(SpoSolution::new(
        alpha,
        beta,
        nu,
        kappa,
        c,
        Method::FixedPoint,
        iters,
        residual,
    ))
}
