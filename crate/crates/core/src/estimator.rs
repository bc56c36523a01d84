//! Finite-dimensional M-estimators `argmin_x L(y - Ax) + λ·f(x)` solved by primal-dual
//! proximal splitting.
//!
//! The iteration alternates a proximal step on `x` with a proximal ascent step on the dual
//! variable of the residual. The iteration restarts from its running average when that
//! average has a markedly smaller KKT residual, and the primal/dual step ratio is
//! rebalanced at each restart while the step product stays below `1/‖A‖²`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::moreau::{block_soft_threshold, soft_threshold, LossName, RegSpec, ScalarFn};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("no convergence after {} iterations (KKT residual {:.3e})", .0.iterations, .0.kkt_residual)]
    MaxIterExceeded(Box<SolveReport>),
    #[error("power iteration for ‖A‖ did not settle")]
    IllConditioned,
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, EstimatorError> {
        if rows == 0 || cols == 0 {
            return Err(EstimatorError::Dimension(
                "matrix must be at least 1×1".into(),
            ));
        }
        if data.len() != rows * cols {
            return Err(EstimatorError::Dimension(format!(
                "{} entries for a {rows}×{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, EstimatorError> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `out = A·x`.
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out = Aᵀ·u`.
    pub fn mul_t_vec(&self, u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (&ui, row) in u.iter().zip(self.data.chunks_exact(self.cols)) {
            if ui != 0.0 {
                for (o, &a) in out.iter_mut().zip(row) {
                    *o += ui * a;
                }
            }
        }
    }

    /// Rows reordered so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for &i in perm {
            data.extend_from_slice(self.row(i));
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }

    /// Largest singular value by power iteration on `AᵀA`.
    pub fn operator_norm(&self) -> Result<f64, EstimatorError> {
        let mut v: Vec<f64> = (0..self.cols)
            .map(|j| 1.0 + 0.5 * (j as f64 * 0.618).sin())
            .collect();
        normalize(&mut v);
        let mut av = vec![0.0; self.rows];
        let mut prev = 0.0;
        for it in 1..=500 {
            self.mul_vec(&v, &mut av);
            self.mul_t_vec(&av, &mut v);
            let s = normalize(&mut v).sqrt();
            if s == 0.0 {
                return Ok(0.0);
            }
            let change = (s - prev).abs() / s;
            prev = s;
            if it >= 50 && change <= 1e-3 {
                return Ok(s);
            }
        }
        Err(EstimatorError::IllConditioned)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Scales `v` to unit norm and returns the original norm.
fn normalize(v: &mut [f64]) -> f64 {
    let r = norm2(v);
    if r > 0.0 {
        v.iter_mut().for_each(|x| *x /= r);
    }
    r
}

#[derive(Clone, Debug)]
pub struct InstanceProblem {
    pub a: Matrix,
    pub y: Vec<f64>,
    pub loss: LossName,
    pub reg: RegSpec,
    pub lambda: f64,
}

impl InstanceProblem {
    pub fn new(
        a: Matrix,
        y: Vec<f64>,
        loss: LossName,
        reg: RegSpec,
        lambda: f64,
    ) -> Result<Self, EstimatorError> {
        if y.len() != a.rows() {
            return Err(EstimatorError::Dimension(format!(
                "y has {} entries but A has {} rows",
                y.len(),
                a.rows()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(EstimatorError::BadParameter(format!(
                "λ must be >= 0, got {lambda}"
            )));
        }
        if let RegSpec::BlockL2 { t } = reg {
            if t == 0 || a.cols() % t != 0 {
                return Err(EstimatorError::Dimension(format!(
                    "block length {t} does not divide n = {}",
                    a.cols()
                )));
            }
        }
        Ok(Self {
            a,
            y,
            loss,
            reg,
            lambda,
        })
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn loss_value(&self, v: &[f64]) -> f64 {
        match self.loss {
            LossName::Separable(l) => {
                let f = l.scalar();
                v.iter().map(|&r| f.value(r)).sum()
            }
            LossName::SqrtL2 => (self.n() as f64).sqrt() * norm2(v),
        }
    }

    pub fn reg_value(&self, x: &[f64]) -> f64 {
        match self.reg {
            RegSpec::L1 => x.iter().map(|v| v.abs()).sum(),
            RegSpec::HalfSquare => 0.5 * dot(x, x),
            RegSpec::Zero => 0.0,
            RegSpec::BlockL2 { t } => x.chunks_exact(t).map(norm2).sum(),
        }
    }

    /// `L(y - Ax) + λ·f(x)`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.m()];
        self.a.mul_vec(x, &mut ax);
        self.objective_with(x, &ax)
    }

    fn objective_with(&self, x: &[f64], ax: &[f64]) -> f64 {
        let r: Vec<f64> = self.y.iter().zip(ax).map(|(y, a)| y - a).collect();
        let reg = if self.lambda > 0.0 {
            self.lambda * self.reg_value(x)
        } else {
            0.0
        };
        self.loss_value(&r) + reg
    }

    /// `prox_{τλf}` in place.
    fn prox_reg(&self, x: &mut [f64], tau: f64) {
        let t = tau * self.lambda;
        match self.reg {
            RegSpec::L1 => x.iter_mut().for_each(|v| *v = soft_threshold(*v, t)),
            RegSpec::HalfSquare => x.iter_mut().for_each(|v| *v /= 1.0 + t),
            RegSpec::Zero => {}
            RegSpec::BlockL2 { t: len } => x
                .chunks_exact_mut(len)
                .for_each(|b| block_soft_threshold(b, t)),
        }
    }

    /// `prox_{σH*}(w)` in place, for `H(v) = L(y - v)`.
    fn prox_dual(&self, w: &mut [f64], sigma: f64) {
        let inv = 1.0 / sigma;
        match self.loss {
            LossName::Separable(l) => {
                let f = l.scalar();
                for (wi, &yi) in w.iter_mut().zip(&self.y) {
                    *wi = dual_entry(f, *wi, yi, sigma);
                }
            }
            LossName::SqrtL2 => {
                let mut s: Vec<f64> = self
                    .y
                    .iter()
                    .zip(w.iter())
                    .map(|(y, wi)| y - wi * inv)
                    .collect();
                block_soft_threshold(&mut s, (self.n() as f64).sqrt() * inv);
                for ((wi, &yi), si) in w.iter_mut().zip(&self.y).zip(&s) {
                    *wi -= sigma * (yi - si);
                }
            }
        }
    }
}

/// One coordinate of `prox_{σH*}` for a separable loss.
fn dual_entry(f: ScalarFn, w: f64, y: f64, sigma: f64) -> f64 {
    let inv = 1.0 / sigma;
    w - sigma * (y - f.prox_unchecked(y - w * inv, inv))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// Objective of the running average of all iterates, every `CHECKPOINT` iterations.
    pub checkpoints: Vec<f64>,
}

pub const CHECKPOINT: usize = 100;

/// Iterations between restart checks.
const RESTART_CHECK: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200_000,
        }
    }
}

/// Primal-dual pair with the cached products `Ax` and `Aᵀu`.
#[derive(Clone, Debug)]
struct Point {
    x: Vec<f64>,
    ax: Vec<f64>,
    u: Vec<f64>,
    atu: Vec<f64>,
}

impl Point {
    fn zeros(m: usize, n: usize) -> Self {
        Self {
            x: vec![0.0; n],
            ax: vec![0.0; m],
            u: vec![0.0; m],
            atu: vec![0.0; n],
        }
    }

    fn accumulate(&mut self, other: &Point, w: f64) {
        fn mix(a: &mut [f64], b: &[f64], w: f64) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += w * (b - *a));
        }
        mix(&mut self.x, &other.x, w);
        mix(&mut self.ax, &other.ax, w);
        mix(&mut self.u, &other.u, w);
        mix(&mut self.atu, &other.atu, w);
    }
}

/// One iteration from `from` into `to`; returns the KKT residual of `to`, scaled by `1/√n`.
fn pdhg_step(p: &InstanceProblem, from: &Point, to: &mut Point, tau: f64, sigma: f64) -> f64 {
    let (m, n) = (p.m(), p.n());
    for j in 0..n {
        to.x[j] = from.x[j] - tau * from.atu[j];
    }
    p.prox_reg(&mut to.x, tau);
    match p.loss {
        // Separable duals update row by row, so each row of A is read once per iteration.
        LossName::Separable(l) => {
            let f = l.scalar();
            to.atu.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..m {
                let row = p.a.row(i);
                let axi = dot(row, &to.x);
                to.ax[i] = axi;
                let ui = dual_entry(
                    f,
                    from.u[i] + sigma * (2.0 * axi - from.ax[i]),
                    p.y[i],
                    sigma,
                );
                to.u[i] = ui;
                if ui != 0.0 {
                    to.atu.iter_mut().zip(row).for_each(|(o, &a)| *o += ui * a);
                }
            }
        }
        LossName::SqrtL2 => {
            p.a.mul_vec(&to.x, &mut to.ax);
            for i in 0..m {
                to.u[i] = from.u[i] + sigma * (2.0 * to.ax[i] - from.ax[i]);
            }
            p.prox_dual(&mut to.u, sigma);
            p.a.mul_t_vec(&to.u, &mut to.atu);
        }
    }
    let mut res = 0.0;
    for j in 0..n {
        let r = (from.x[j] - to.x[j]) / tau - (from.atu[j] - to.atu[j]);
        res += r * r;
    }
    for i in 0..m {
        let r = (from.u[i] - to.u[i]) / sigma - (from.ax[i] - to.ax[i]);
        res += r * r;
    }
    (res / n as f64).sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Solves the instance to a KKT residual of `tol`, scaled by `1/√n`.
///
/// Restarts from the average of the iterates (or the last iterate, whichever has the smaller
/// residual) once the residual has dropped enough since the previous restart, and retunes the
/// primal weight `σ/τ` at each restart.
pub fn solve_instance(
    p: &InstanceProblem,
    tol: f64,
    max_iter: usize,
) -> Result<SolveReport, EstimatorError> {
    if !(tol > 0.0) {
        return Err(EstimatorError::BadParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (m, n) = (p.m(), p.n());
    let norm = p.a.operator_norm()? * 1.01;
    let eta = 0.95 / if norm > 0.0 { norm } else { 1.0 };
    let mut weight = 1.0f64;
    let (mut tau, mut sigma) = (eta, eta);

    let mut cur = Point::zeros(m, n);
    let mut next = Point::zeros(m, n);
    let mut trial = Point::zeros(m, n);
    let mut avg = cur.clone();
    let mut avg_count = 0usize;
    let mut anchor = (cur.x.clone(), cur.u.clone());
    let mut anchor_res = f64::INFINITY;
    let mut prev_candidate = f64::INFINITY;
    let mut since_restart = 0usize;

    let mut ergodic = vec![0.0; n];
    let mut checkpoints = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let finish = |pt: &Point, kkt: f64, it: usize, checkpoints: Vec<f64>| SolveReport {
        x: pt.x.clone(),
        objective: p.objective_with(&pt.x, &pt.ax),
        kkt_residual: kkt,
        iterations: it,
        checkpoints,
    };

    for it in 1..=max_iter {
        let res = pdhg_step(p, &cur, &mut next, tau, sigma);
        std::mem::swap(&mut cur, &mut next);
        since_restart += 1;
        avg_count += 1;
        avg.accumulate(&cur, 1.0 / avg_count as f64);

        let w = 1.0 / it as f64;
        ergodic
            .iter_mut()
            .zip(&cur.x)
            .for_each(|(a, v)| *a += w * (v - *a));
        if it % CHECKPOINT == 0 {
            checkpoints.push(p.objective(&ergodic));
        }
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, cur.x.clone()));
        }
        if res <= tol {
            return Ok(finish(&cur, res, it, checkpoints));
        }
        if anchor_res.is_infinite() {
            anchor_res = res;
        }

        if since_restart % RESTART_CHECK == 0 {
            let avg_res = pdhg_step(p, &avg, &mut trial, tau, sigma);
            if avg_res <= tol {
                return Ok(finish(&trial, avg_res, it, checkpoints));
            }
            let use_avg = avg_res < res;
            let candidate = res.min(avg_res);
            let restart = candidate <= 0.2 * anchor_res
                || (candidate <= 0.8 * anchor_res && candidate > prev_candidate)
                || since_restart as f64 >= 0.36 * it as f64;
            prev_candidate = candidate;
            if restart {
                if use_avg {
                    std::mem::swap(&mut cur, &mut trial);
                }
                let dx = dist(&cur.x, &anchor.0);
                let du = dist(&cur.u, &anchor.1);
                if dx > 1e-10 && du > 1e-10 {
                    weight = (0.5 * (du / dx).ln() + 0.5 * weight.ln()).exp();
                    tau = eta / weight;
                    sigma = eta * weight;
                }
                anchor = (cur.x.clone(), cur.u.clone());
                anchor_res = candidate;
                prev_candidate = f64::INFINITY;
                since_restart = 0;
                avg = cur.clone();
                avg_count = 0;
            }
        }
    }
    let (kkt, x) = best.unwrap_or((f64::INFINITY, cur.x));
    let objective = p.objective(&x);
    Err(EstimatorError::MaxIterExceeded(Box::new(SolveReport {
        x,
        objective,
        kkt_residual: kkt,
        iterations: max_iter,
        checkpoints,
    })))
}
