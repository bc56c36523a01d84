//! Nested solution of `min_α max_β [g₁(α,β) + g₂(α,β)]` with
//! `g₁ = min_κ β²κ/2 + δL(α,κ)` and `g₂ = max_ν -α²ν/2 - β²/(2ν) + λF(β/ν, λ/ν)`.
//!
//! Each level is a monotone one-dimensional equation: the inner first-order conditions in
//! `κ` and `ν`, then `∂β(g₁+g₂) = 0`, then `M'(α) = δ·∂cL(α,κ*) - αν* = 0` (envelope
//! theorem). All of them are bracketed and solved with Brent-Dekker root finding, `κ` and
//! `ν` in log coordinates. Values of `M` are kept for boundary checks and diagnostics.

use super::{Method, SpoError, SpoProblem, SpoSolution};
use crate::eme::EmeProvider;
use crate::optim::zeroin;

#[derive(Clone, Debug)]
pub struct MinimaxOptions {
    /// Upper end of the `α` search; defaults to `10·max(1, √scale)`.
    pub alpha_max: Option<f64>,
    pub beta_max: f64,
    /// Relative tolerance on `α*`.
    pub tol: f64,
    /// How many times `α_max` is doubled before reporting an unbounded problem.
    pub max_doublings: usize,
}

impl Default for MinimaxOptions {
    fn default() -> Self {
        Self {
            alpha_max: None,
            beta_max: 1e4,
            tol: 1e-11,
            max_doublings: 2,
        }
    }
}

const LOG_MIN: f64 = -32.0;
const LOG_MAX: f64 = 32.0;
const BETA_MIN: f64 = 1e-12;
/// Below this `ν` the terms `-β²/(2ν)` and `λF(β/ν, λ/ν)` cancel and the sign of the ν-slope is noise.
const LOG_NU_MIN: f64 = -13.8;

/// Root of a nondecreasing `g` on `[lo, hi]`, searched outward from `s0`.
/// Returns an endpoint when `g` has constant sign.
fn monotone_root(mut g: impl FnMut(f64) -> f64, s0: f64, lo: f64, hi: f64, xtol: f64) -> f64 {
    let s0 = s0.clamp(lo, hi);
    let g0 = g(s0);
    if g0 == 0.0 {
        return s0;
    }
    let dir = if g0 < 0.0 { 1.0 } else { -1.0 };
    let mut step = 0.5;
    let (mut a, mut ga) = (s0, g0);
    loop {
        let b = (a + dir * step).clamp(lo, hi);
        let gb = g(b);
        if gb.signum() != ga.signum() || gb == 0.0 {
            let (l, r, gl, gr) = if dir > 0.0 {
                (a, b, ga, gb)
            } else {
                (b, a, gb, ga)
            };
            return zeroin(&mut g, l, r, gl, gr, xtol);
        }
        if b == lo || b == hi {
            return b;
        }
        a = b;
        ga = gb;
        step *= 2.0;
    }
}

/// Optimal inner variables and the value and slope of `M` at one `α`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub alpha: f64,
    pub m: f64,
    pub dm: f64,
    pub beta: f64,
    pub kappa: f64,
    pub nu: f64,
    pub beta_at_cap: bool,
    pub beta_at_zero: bool,
}

struct Side {
    value: f64,
    arg: f64,
    d_alpha: f64,
    d_beta: f64,
}

/// Evaluates `M(α) = max_β min_κ max_ν D` with warm-started inner searches.
pub struct Profile<'a> {
    p: &'a SpoProblem,
    beta_max: f64,
    log_kappa: f64,
    log_nu: f64,
    log_beta: f64,
}

impl<'a> Profile<'a> {
    pub fn new(p: &'a SpoProblem, beta_max: f64) -> Self {
        Self {
            p,
            beta_max,
            log_kappa: 0.0,
            log_nu: 0.0,
            log_beta: 0.0f64.min(beta_max.ln()),
        }
    }

    fn loss_side(&mut self, alpha: f64, beta: f64) -> Result<Side, SpoError> {
        let p = self.p;
        let half_b2 = 0.5 * beta * beta;
        let s = monotone_root(
            |s| half_b2 + p.delta * p.loss.eval_unchecked(alpha, s.exp()).d_tau,
            self.log_kappa,
            LOG_MIN,
            LOG_MAX,
            1e-13,
        );
        self.log_kappa = s;
        let kappa = s.exp();
        let l = p.loss.eval(alpha, kappa)?;
        Ok(Side {
            value: half_b2 * kappa + p.delta * l.value,
            arg: kappa,
            d_alpha: p.delta * l.d_c,
            d_beta: beta * kappa,
        })
    }

    fn reg_side(&mut self, alpha: f64, beta: f64) -> Result<Side, SpoError> {
        let p = self.p;
        if alpha == 0.0 {
            return Ok(Side {
                value: 0.0,
                arg: f64::INFINITY,
                d_alpha: 0.0,
                d_beta: 0.0,
            });
        }
        if !p.has_reg() {
            return Ok(Side {
                value: -alpha * beta,
                arg: beta / alpha,
                d_alpha: -beta,
                d_beta: -alpha,
            });
        }
        let lam = p.lambda;
        let reg: &EmeProvider = &p.reg;
        // ν²·∂ν of the ν-objective, nonincreasing in ν.
        let s = monotone_root(
            |s| {
                let nu = s.exp();
                let f = reg.eval_unchecked(beta / nu, lam / nu);
                -(-0.5 * alpha * alpha * nu * nu + 0.5 * beta * beta
                    - lam * (beta * f.d_c + lam * f.d_tau))
            },
            self.log_nu,
            LOG_NU_MIN,
            LOG_MAX,
            1e-13,
        );
        // A boundary optimum is a poor warm start for the next search.
        self.log_nu = if s > LOG_NU_MIN { s } else { 0.0 };
        let nu = s.exp();
        let f = reg.eval(beta / nu, lam / nu)?;
        Ok(Side {
            value: -0.5 * alpha * alpha * nu - beta * beta / (2.0 * nu) + lam * f.value,
            arg: nu,
            d_alpha: -alpha * nu,
            d_beta: -beta / nu + lam / nu * f.d_c,
        })
    }

    fn both(&mut self, alpha: f64, beta: f64) -> Result<(Side, Side), SpoError> {
        Ok((self.loss_side(alpha, beta)?, self.reg_side(alpha, beta)?))
    }

    /// `M(α)` and `M'(α)` with the maximizing `β` and the matching `κ`, `ν`.
    pub fn eval(&mut self, alpha: f64) -> Result<ProfilePoint, SpoError> {
        let p = self.p;
        if alpha == 0.0 {
            // M(0) = sup_β g₁(β) = δ·L(0, 0⁺), approached as β → ∞.
            return Ok(ProfilePoint {
                alpha,
                m: p.delta * p.loss.value(0.0, 1e-14)?,
                dm: f64::NAN,
                beta: f64::INFINITY,
                kappa: 0.0,
                nu: f64::INFINITY,
                beta_at_cap: true,
                beta_at_zero: false,
            });
        }
        let log_beta_max = self.beta_max.ln();
        let log_beta_min = BETA_MIN.ln();
        let mut failure = None;
        let start = self.log_beta.clamp(log_beta_min, log_beta_max);
        let sb = {
            let this = &mut *self;
            monotone_root(
                |s| match this.both(alpha, s.exp()) {
                    Ok((l, r)) => -(l.d_beta + r.d_beta),
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                start,
                log_beta_min,
                log_beta_max,
                1e-13,
            )
        };
        if let Some(e) = failure {
            return Err(e);
        }
        self.log_beta = sb;
        let beta = sb.exp();
        let (l, r) = self.both(alpha, beta)?;
        let at_zero = sb <= log_beta_min && l.d_beta + r.d_beta < 0.0;
        let (m, dm, beta, kappa) = if at_zero && p.loss.l0().is_finite() {
            // β = 0 boundary: g₁(0) = -δ·L0.
            let r0 = self.reg_side(alpha, 0.0)?;
            let m0 = -p.delta * p.loss.l0() + r0.value;
            if m0 >= l.value + r.value {
                (m0, r0.d_alpha, 0.0, f64::INFINITY)
            } else {
                (l.value + r.value, l.d_alpha + r.d_alpha, beta, l.arg)
            }
        } else {
            (l.value + r.value, l.d_alpha + r.d_alpha, beta, l.arg)
        };
        Ok(ProfilePoint {
            alpha,
            m,
            dm,
            beta,
            kappa,
            nu: r.arg,
            beta_at_cap: sb >= log_beta_max,
            beta_at_zero: at_zero,
        })
    }
}

fn point_to_solution(pt: &ProfilePoint, iterations: usize, residual: f64) -> SpoSolution {
    let mut s = SpoSolution::new(
        pt.alpha,
        pt.beta,
        pt.nu,
        pt.kappa,
        pt.m,
        Method::Minimax,
        iterations,
        residual,
    );
    if pt.beta_at_cap {
        s.flags.push("beta_at_cap".into());
    }
    if pt.beta_at_zero {
        s.flags.push("beta_at_zero".into());
    }
    s
}

fn solve_with(p: &SpoProblem, opts: &MinimaxOptions) -> Result<SpoSolution, SpoError> {
    let scale = p.loss.scale_proxy().max(p.reg.scale_proxy());
    let unit = scale.sqrt().max(1.0);
    let mut alpha_max = opts.alpha_max.unwrap_or(10.0 * unit);
    let alpha_min = 1e-9 * unit;
    let mut prof = Profile::new(p, opts.beta_max);
    let mut evals = 0usize;
    let mut failure = None;

    let lo = prof.eval(alpha_min)?;
    evals += 1;
    if lo.dm >= 0.0 {
        let mut zero = lo;
        zero.alpha = 0.0;
        let mut s = point_to_solution(&zero, evals, 0.0);
        s.tau_h = zero.nu * alpha_min;
        s.flags.push("alpha_at_zero".into());
        return Ok(s);
    }

    let mut hi = prof.eval(alpha_max)?;
    evals += 1;
    let mut doublings = 0;
    while hi.dm < 0.0 {
        if doublings == opts.max_doublings {
            return Err(SpoError::Unbounded {
                alpha_max,
                value: hi.m,
            });
        }
        alpha_max *= 2.0;
        doublings += 1;
        hi = prof.eval(alpha_max)?;
        evals += 1;
    }

    let root =
        |shift: f64, prof: &mut Profile<'_>, evals: &mut usize, failure: &mut Option<SpoError>| {
            zeroin(
                |s| {
                    *evals += 1;
                    match prof.eval(s.exp()) {
                        Ok(pt) => pt.dm + shift,
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    }
                },
                alpha_min.ln(),
                alpha_max.ln(),
                lo.dm + shift,
                hi.dm + shift,
                opts.tol,
            )
            .exp()
        };
    let mut alpha = root(0.0, &mut prof, &mut evals, &mut failure);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let mut flat = false;
    let probe = prof.eval((alpha * (1.0 + 1e-3)).min(alpha_max))?;
    if probe.dm.abs() <= FLAT_SLOPE {
        flat = true;
        alpha = root(FLAT_SLOPE, &mut prof, &mut evals, &mut failure);
        if let Some(e) = failure {
            return Err(e);
        }
    }
    let pt = prof.eval(alpha)?;
    let mut s = point_to_solution(&pt, evals, pt.dm.abs());
    if flat {
        s.flags.push("flat_minimum".into());
    }
    if doublings > 0 {
        s.flags.push(format!("alpha_max_doubled_{doublings}"));
    }
    Ok(s)
}

const FLAT_SLOPE: f64 = 1e-11;

/// Nested minimax on the full SPO.
pub fn solve_minimax(p: &SpoProblem, opts: &MinimaxOptions) -> Result<SpoSolution, SpoError> {
    solve_with(p, opts)
}

/// Cone-constrained M-estimator with statistical-dimension ratio `D̄`.
pub fn solve_cone(delta: f64, dbar: f64, loss: &EmeProvider) -> Result<SpoSolution, SpoError> {
    if !(dbar > 0.0 && dbar < 1.0) {
        return Err(SpoError::Domain(format!(
            "D̄ must lie in (0, 1), got {dbar}"
        )));
    }
    if !(delta > dbar) {
        return Err(SpoError::UnstableRegime(format!(
            "cone-constrained recovery needs δ > D̄ (got δ = {delta}, D̄ = {dbar})"
        )));
    }
    let p = SpoProblem::new(delta, 1.0, loss.clone(), EmeProvider::cone(dbar)?)?;
    solve_with(&p, &MinimaxOptions::default())
}

/// Square-root LASSO: `√n‖y - Ax‖₂ + λf(x)` with noise variance `σ²`.
pub fn solve_sqrt_lasso(
    delta: f64,
    sigma2: f64,
    lambda: f64,
    reg: &EmeProvider,
) -> Result<SpoSolution, SpoError> {
    let p = SpoProblem::new(
        delta,
        lambda,
        EmeProvider::sqrt_lasso(sigma2, delta)?,
        reg.clone(),
    )?;
    solve_with(
        &p,
        &MinimaxOptions {
            beta_max: 1.0,
            ..MinimaxOptions::default()
        },
    )
}
