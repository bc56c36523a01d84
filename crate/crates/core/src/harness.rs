//! Monte Carlo experiments: draw instances, solve them, and compare the empirical squared
//! error with the predicted `α*²`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dist::{BlockSignalDist, DistError, ScalarDist};
use crate::eme::{EmeError, EmeProvider};
use crate::estimator::{solve_instance, EstimatorError, InstanceProblem, Matrix};
use crate::moreau::{LossName, LossSpec, RegName, RegSpec};
use crate::rng::{trial_stream, Role};
use crate::spo::{
    self, closed_ls, closed_ridge_ls, solve_cone, solve_genlasso_system, solve_ridge_system,
    solve_sqrt_lasso, solve_unregularized, FixedPointOptions, Method, MinimaxOptions, SpoError,
    SpoProblem, SpoSolution,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment: {0}")]
    Config(String),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Eme(#[from] EmeError),
    #[error(transparent)]
    Spo(#[from] SpoError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

/// Signal law: i.i.d. entries or i.i.d. blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Signal {
    Scalar(ScalarDist),
    Block(BlockSignalDist),
}

impl Signal {
    pub fn second_moment(&self) -> f64 {
        match self {
            Signal::Scalar(d) => d.second_moment(),
            Signal::Block(b) => b.second_moment(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        match self {
            Signal::Scalar(d) => d.sample(rng, n),
            Signal::Block(b) => b.sample(rng, n / b.block_len),
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Scalar(d) => d.fmt(f),
            Signal::Block(b) => b.fmt(f),
        }
    }
}

impl FromStr for Signal {
    type Err = DistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim_start().to_ascii_lowercase().starts_with("block") {
            s.parse().map(Signal::Block)
        } else {
            s.parse().map(Signal::Scalar)
        }
    }
}

impl TryFrom<String> for Signal {
    type Error = DistError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Signal> for String {
    fn from(s: Signal) -> Self {
        s.to_string()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ensemble {
    #[default]
    Gaussian,
    Bernoulli,
}

impl fmt::Display for Ensemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ensemble::Gaussian => "gaussian",
            Ensemble::Bernoulli => "bernoulli",
        })
    }
}

mod as_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use std::fmt::Display;
    use std::str::FromStr;

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(D::Error::custom)
    }
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub delta: f64,
    pub lambda_grid: Vec<f64>,
    pub loss: LossName,
    pub reg: RegName,
    #[serde(with = "as_string")]
    pub noise: ScalarDist,
    pub signal: Signal,
    #[serde(default)]
    pub ensemble: Ensemble,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Free-form remarks carried into the output header.
    #[serde(default)]
    pub notes: Vec<String>,
}

impl ExperimentConfig {
    pub fn m(&self) -> usize {
        (self.delta * self.n as f64).round() as usize
    }

    /// Checks a configuration before simulation.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.n < 8 {
            return bad(format!("n must be at least 8, got {}", self.n));
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.m() == 0 {
            return bad(format!("δ = {} gives no measurements", self.delta));
        }
        self.validate_for_prediction()?;
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return bad("solver tolerance and iteration budget must be positive".into());
        }
        if let Signal::Block(b) = &self.signal {
            if self.n % b.block_len != 0 {
                return bad(format!(
                    "block length {} does not divide n = {}",
                    b.block_len, self.n
                ));
            }
        }
        self.estimator_reg()?;
        Ok(())
    }

    /// The subset of [`validate`](Self::validate) that matters when only predictions are made.
    pub fn validate_for_prediction(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("δ must be positive, got {}", self.delta));
        }
        if self.lambda_grid.is_empty() {
            return bad("λ grid is empty".into());
        }
        if self
            .lambda_grid
            .iter()
            .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return bad("λ values must be finite and >= 0".into());
        }
        if self.lambda_grid.windows(2).any(|w| w[0] > w[1]) {
            return bad("λ grid must be sorted".into());
        }
        Ok(())
    }

    fn estimator_reg(&self) -> Result<RegSpec, HarnessError> {
        match self.reg {
            RegName::Separable(r) => {
                if let RegSpec::BlockL2 { t } = r {
                    if self.n % t != 0 {
                        return Err(HarnessError::Config(format!(
                            "block length {t} does not divide n = {}",
                            self.n
                        )));
                    }
                }
                Ok(r)
            }
            RegName::Cone(_) => Err(HarnessError::Config(
                "cone constraints have no instance solver; use prediction only".into(),
            )),
        }
    }

    /// SHA-256 of the canonical JSON form, truncated to 16 hex digits.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("plain data serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// One draw of `(A, x0, z)` with `y = A·x0 + z`.
#[derive(Clone, Debug)]
pub struct Instance {
    pub problem: InstanceProblem,
    pub x0: Vec<f64>,
}

pub fn gen_instance(cfg: &ExperimentConfig, trial: u64) -> Result<Instance, HarnessError> {
    cfg.validate()?;
    let (m, n) = (cfg.m(), cfg.n);
    let mut rng = trial_stream(cfg.seed, trial, Role::Design);
    let s = 1.0 / (n as f64).sqrt();
    let a = match cfg.ensemble {
        Ensemble::Gaussian => {
            Matrix::from_fn(m, n, |_, _| s * rng.sample::<f64, _>(StandardNormal))?
        }
        Ensemble::Bernoulli => {
            Matrix::from_fn(m, n, |_, _| if rng.random::<bool>() { s } else { -s })?
        }
    };
    let x0 = cfg
        .signal
        .sample(&mut trial_stream(cfg.seed, trial, Role::Signal), n);
    let z = cfg
        .noise
        .sample(&mut trial_stream(cfg.seed, trial, Role::Noise), m);
    let mut y = vec![0.0; m];
    a.mul_vec(&x0, &mut y);
    y.iter_mut().zip(&z).for_each(|(y, z)| *y += z);
    let problem = InstanceProblem::new(a, y, cfg.loss, cfg.estimator_reg()?, cfg.lambda_grid[0])?;
    Ok(Instance { problem, x0 })
}

fn loss_provider(loss: LossSpec, noise: &ScalarDist) -> Result<EmeProvider, EmeError> {
    let m2 = noise.second_moment();
    if loss == LossSpec::Square && m2.is_finite() && noise.mean() == Some(0.0) {
        EmeProvider::quad_loss(m2)
    } else {
        EmeProvider::separable_loss(loss, noise.clone())
    }
}

fn reg_provider(reg: RegSpec, signal: &Signal) -> Result<EmeProvider, HarnessError> {
    match (reg, signal) {
        (RegSpec::HalfSquare, s) => Ok(EmeProvider::quad_reg(s.second_moment())?),
        (RegSpec::BlockL2 { t }, Signal::Block(b)) if t > 1 => Ok(EmeProvider::block(t, *b)?),
        (RegSpec::BlockL2 { t }, _) if t > 1 => Err(HarnessError::Config(format!(
            "block_l2({t}) needs a block signal"
        ))),
        (r, Signal::Scalar(d)) => Ok(EmeProvider::separable_reg(r, d.clone())?),
        (r, Signal::Block(_)) => Err(HarnessError::Config(format!(
            "regularizer `{r}` needs an i.i.d. scalar signal"
        ))),
    }
}

/// Predicted error for one `(δ, λ)` via the solver matching the loss and regularizer.
pub fn predict(
    delta: f64,
    lambda: f64,
    loss: LossName,
    reg: RegName,
    noise: &ScalarDist,
    signal: &Signal,
) -> Result<SpoSolution, HarnessError> {
    let fp = FixedPointOptions::default();
    let unregularized = lambda == 0.0 || reg == RegName::Separable(RegSpec::Zero);
    match (loss, reg) {
        (LossName::SqrtL2, RegName::Cone(_)) => Err(HarnessError::Config(
            "sqrt_l2 loss with a cone constraint is not supported".into(),
        )),
        (LossName::SqrtL2, RegName::Separable(r)) => {
            let sigma2 = noise.second_moment();
            let f = if unregularized {
                EmeProvider::separable_reg(RegSpec::Zero, ScalarDist::point(0.0))?
            } else {
                reg_provider(r, signal)?
            };
            Ok(solve_sqrt_lasso(
                delta,
                sigma2,
                if unregularized { 0.0 } else { lambda },
                &f,
            )?)
        }
        (LossName::Separable(l), RegName::Cone(c)) => Ok(solve_cone(
            delta,
            c.stat_dim_ratio,
            &loss_provider(l, noise)?,
        )?),
        (LossName::Separable(l), RegName::Separable(r)) => {
            let lp = loss_provider(l, noise)?;
            let exact = |mut s: SpoSolution, a2: f64| {
                s.alpha_sq = a2;
                s.alpha = a2.sqrt();
                s.method = Method::ClosedForm;
                s
            };
            let quad_noise = match lp {
                EmeProvider::QuadLoss { sigma2 } => Some(sigma2),
                _ => None,
            };
            if unregularized {
                let s = solve_unregularized(delta, &lp, &fp)?;
                return Ok(match quad_noise {
                    Some(s2) => exact(s, closed_ls(delta, s2)?),
                    None => s,
                });
            }
            if let (Some(s2), RegSpec::HalfSquare) = (quad_noise, r) {
                let sx2 = signal.second_moment();
                let s = solve_ridge_system(delta, lambda, &lp, sx2, &fp)?;
                return Ok(exact(s, closed_ridge_ls(delta, lambda, s2, sx2)?));
            }
            let fallback = |first: SpoError, p: &SpoProblem| -> Result<SpoSolution, HarnessError> {
                if let SpoError::Eme(e) = first {
                    return Err(e.into());
                }
                let mut s = spo::solve_minimax(p, &MinimaxOptions::default())?;
                s.flags.push(format!("fixed-point fallback: {first}"));
                Ok(s)
            };
            let p = SpoProblem::new(delta, lambda, lp.clone(), reg_provider(r, signal)?)?;
            let first = match (l, r, &lp) {
                (_, RegSpec::HalfSquare, _) => {
                    solve_ridge_system(delta, lambda, &lp, signal.second_moment(), &fp)
                }
                (LossSpec::Square, _, EmeProvider::QuadLoss { sigma2 }) if *sigma2 > 0.0 => {
                    solve_genlasso_system(delta, lambda, *sigma2, &p.reg, &fp)
                }
                _ => spo::solve_fixed_point(&p, &fp),
            };
            match first {
                Ok(s) => Ok(s),
                Err(e) => fallback(e, &p),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub lambda: f64,
    pub delta: f64,
    pub n: usize,
    pub trials: usize,
    pub predicted_alpha_sq: Option<f64>,
    pub empirical_mean: f64,
    pub empirical_std: f64,
    pub solver_method: String,
    pub flags: String,
    pub loss: String,
    pub reg: String,
}

impl ResultRow {
    pub fn std_error(&self) -> f64 {
        self.empirical_std / (self.trials.max(1) as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config_hash: String,
    pub notes: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl ExperimentResult {
    pub fn to_csv(&self) -> String {
        let mut out = format!("# config_hash={}\n", self.config_hash);
        for n in &self.notes {
            out.push_str(&format!("# note={n}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    /// Parses the output of [`to_csv`](Self::to_csv).
    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let mut config_hash = String::new();
        let mut notes = Vec::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(h) = line.strip_prefix("# config_hash=") {
                config_hash = h.to_string();
            } else if let Some(n) = line.strip_prefix("# note=") {
                notes.push(n.to_string());
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let rows = csv::Reader::from_reader(body.as_bytes())
            .deserialize()
            .collect::<Result<Vec<ResultRow>, _>>()
            .map_err(|e| HarnessError::Config(format!("malformed CSV: {e}")))?;
        Ok(Self {
            config_hash,
            notes,
            rows,
        })
    }
}

/// Worker pool honoring `SPOLAB_THREADS`.
fn pool() -> rayon::ThreadPool {
    let threads = std::env::var("SPOLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t > 0)
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
}

/// Per-trial outcome for every `λ`: `(‖x̂-x0‖²/n, hit iteration cap)`.
type TrialErrors = Result<Vec<Result<(f64, bool), String>>, String>;

fn run_trial(cfg: &ExperimentConfig, trial: u64) -> TrialErrors {
    let inst = gen_instance(cfg, trial).map_err(|e| e.to_string())?;
    let n = cfg.n as f64;
    let mut p = inst.problem;
    Ok(cfg
        .lambda_grid
        .iter()
        .map(|&lambda| {
            p.lambda = lambda;
            let (x, capped) = match solve_instance(&p, cfg.tol, cfg.max_iter) {
                Ok(r) => (r.x, false),
                Err(EstimatorError::MaxIterExceeded(r)) => (r.x, true),
                Err(e) => return Err(e.to_string()),
            };
            let err = x
                .iter()
                .zip(&inst.x0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n;
            Ok((err, capped))
        })
        .collect())
}

fn mean_std(values: &mut [f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    values.sort_by(f64::total_cmp);
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Runs every trial at every `λ`. Failures are reported per row.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let trials: Vec<TrialErrors> = pool().install(|| {
        (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| run_trial(cfg, t))
            .collect()
    });
    let rows = cfg
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let mut flags = Vec::new();
            let mut values = Vec::new();
            let mut capped = 0;
            for (t, tr) in trials.iter().enumerate() {
                match tr.as_ref().map(|v| &v[k]) {
                    Ok(Ok((e, c))) => {
                        values.push(*e);
                        capped += usize::from(*c);
                    }
                    Ok(Err(e)) | Err(e) => flags.push(format!("trial {t}: {e}")),
                }
            }
            if capped > 0 {
                flags.push(format!("iteration cap reached in {capped} trial(s)"));
            }
            let (empirical_mean, empirical_std) = mean_std(&mut values);
            let (predicted_alpha_sq, solver_method) = match predict(
                cfg.delta,
                lambda,
                cfg.loss,
                cfg.reg,
                &cfg.noise,
                &cfg.signal,
            ) {
                Ok(s) => {
                    flags.extend(s.flags.iter().cloned());
                    (Some(s.alpha_sq), s.method.to_string())
                }
                Err(e) => {
                    flags.push(format!("prediction failed: {e}"));
                    (None, "none".to_string())
                }
            };
            ResultRow {
                lambda,
                delta: cfg.delta,
                n: cfg.n,
                trials: values.len(),
                predicted_alpha_sq,
                empirical_mean,
                empirical_std,
                solver_method,
                flags: flags.join("; "),
                loss: cfg.loss.to_string(),
                reg: cfg.reg.to_string(),
            }
        })
        .collect();
    Ok(ExperimentResult {
        config_hash: cfg.config_hash(),
        notes: cfg.notes.clone(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Lambda,
    Delta,
}

impl FromStr for Axis {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(Axis::Lambda),
            "delta" => Ok(Axis::Delta),
            _ => Err(HarnessError::Config(format!(
                "unknown axis `{s}` (lambda or delta)"
            ))),
        }
    }
}

/// Long-format table over `values` along `axis`. A λ sweep replaces the grid; a δ sweep runs
/// the whole λ grid at each `δ`.
pub fn sweep(
    cfg: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
) -> Result<ExperimentResult, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Config(
            "sweep needs at least one value".into(),
        ));
    }
    match axis {
        Axis::Lambda => run_experiment(&ExperimentConfig {
            lambda_grid: values.to_vec(),
            ..cfg.clone()
        }),
        Axis::Delta => {
            let mut out = ExperimentResult {
                config_hash: cfg.config_hash(),
                notes: cfg.notes.clone(),
                rows: Vec::new(),
            };
            for &delta in values {
                let r = run_experiment(&ExperimentConfig {
                    delta,
                    ..cfg.clone()
                })?;
                out.rows.extend(r.rows);
            }
            Ok(out)
        }
    }
}

/// Ready-made settings, one per worked example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Ls,
    RidgeLs,
    ConeLs,
    Genlasso,
    SqrtLasso,
    LadL1,
    HuberL1,
    GroupLasso,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Ls,
        Preset::RidgeLs,
        Preset::ConeLs,
        Preset::Genlasso,
        Preset::SqrtLasso,
        Preset::LadL1,
        Preset::HuberL1,
        Preset::GroupLasso,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Ls => "ls",
            Preset::RidgeLs => "ridge-ls",
            Preset::ConeLs => "cone-ls",
            Preset::Genlasso => "genlasso",
            Preset::SqrtLasso => "sqrt-lasso",
            Preset::LadL1 => "lad-l1",
            Preset::HuberL1 => "huber-l1",
            Preset::GroupLasso => "group-lasso",
        }
    }

    pub fn config(&self) -> ExperimentConfig {
        let sparse_signal = || {
            Signal::Scalar(
                "mix(0.9*delta(0), 0.1*normal(0, 10))"
                    .parse()
                    .expect("literal"),
            )
        };
        let grid = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
            (0..k)
                .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
                .collect()
        };
        let base = ExperimentConfig {
            n: 512,
            delta: 2.0,
            lambda_grid: vec![1.0],
            loss: LossName::Separable(LossSpec::Square),
            reg: RegName::Separable(RegSpec::HalfSquare),
            noise: ScalarDist::normal(0.0, 1.0).expect("literal"),
            signal: Signal::Scalar(ScalarDist::normal(0.0, 1.0).expect("literal")),
            ensemble: Ensemble::Gaussian,
            trials: 10,
            seed: 1,
            tol: default_tol(),
            max_iter: default_max_iter(),
            notes: Vec::new(),
        };
        match self {
            Preset::Ls => ExperimentConfig {
                lambda_grid: vec![0.0],
                reg: RegName::Separable(RegSpec::Zero),
                ..base
            },
            Preset::RidgeLs => ExperimentConfig { trials: 20, ..base },
            Preset::ConeLs => ExperimentConfig {
                delta: 1.0,
                reg: RegName::Cone(crate::moreau::ConeRegSpec::new(0.5).expect("literal")),
                notes: vec!["cone constraints are prediction-only".into()],
                ..base
            },
            Preset::Genlasso => ExperimentConfig {
                n: 768,
                delta: 1.2,
                lambda_grid: grid(0.1, 3.0, 15),
                reg: RegName::Separable(RegSpec::L1),
                noise: "mix(0.9*delta(0), 0.1*normal(0, 1))"
                    .parse()
                    .expect("literal"),
                signal: sparse_signal(),
                trials: 5,
                tol: 1e-5,
                ..base
            },
            Preset::SqrtLasso => ExperimentConfig {
                delta: 1.2,
                lambda_grid: grid(0.2, 2.0, 10),
                loss: LossName::SqrtL2,
                reg: RegName::Separable(RegSpec::L1),
                signal: sparse_signal(),
                tol: 1e-5,
                ..base
            },
            Preset::LadL1 => ExperimentConfig {
                n: 768,
                delta: 1.2,
                lambda_grid: grid(0.1, 3.0, 15),
                loss: LossName::Separable(LossSpec::Abs),
                reg: RegName::Separable(RegSpec::L1),
                noise: "mix(0.7*delta(0), 0.3*normal(0, 1))"
                    .parse()
                    .expect("literal"),
                signal: sparse_signal(),
                trials: 5,
                tol: 1e-5,
                notes: vec!["signal component read as N(0, 10), so that E[x0²] = 1".into()],
                ..base
            },
            Preset::HuberL1 => ExperimentConfig {
                n: 1024,
                delta: 0.7,
                lambda_grid: grid(0.2, 3.0, 15),
                loss: LossName::Separable(LossSpec::Huber { rho: 1.0 }),
                reg: RegName::Separable(RegSpec::L1),
                noise: "mix(0.9*delta(0), 0.1*cauchy(0, 1))"
                    .parse()
                    .expect("literal"),
                signal: sparse_signal(),
                trials: 5,
                tol: 1e-5,
                notes: vec!["signal component read as N(0, 10), so that E[x0²] = 1".into()],
                ..base
            },
            Preset::GroupLasso => ExperimentConfig {
                n: 1536,
                delta: 0.75,
                lambda_grid: grid(0.1, 2.0, 10),
                loss: LossName::SqrtL2,
                reg: RegName::Separable(RegSpec::BlockL2 { t: 3 }),
                noise: ScalarDist::normal(0.0, 0.09).expect("literal"),
                signal: Signal::Block(BlockSignalDist::new(3, 0.95, 1.0).expect("literal")),
                trials: 10,
                tol: 1e-5,
                notes: vec!["noise density 0.3·φ(z) read as N(0, 0.09)".into()],
                ..base
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s.to_ascii_lowercase())
            .ok_or_else(|| HarnessError::Config(format!("unknown preset `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> ExperimentConfig {
        ExperimentConfig {
            n,
            trials: 2,
            ..Preset::RidgeLs.config()
        }
    }

    #[test]
    fn gaussian_design_moments() {
        let cfg = small(512);
        let inst = gen_instance(&cfg, 0).unwrap();
        let a = inst.problem.a.data();
        let k = a.len() as f64;
        let mean = a.iter().sum::<f64>() / k;
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
        assert!(mean.abs() <= 4.0 / k.sqrt(), "{mean}");
        assert!((var * 512.0 - 1.0).abs() <= 0.05, "{var}");
    }

    #[test]
    fn bernoulli_design_support() {
        let cfg = ExperimentConfig {
            ensemble: Ensemble::Bernoulli,
            ..small(64)
        };
        let inst = gen_instance(&cfg, 3).unwrap();
        let s = 1.0 / 8.0;
        assert!(inst.problem.a.data().iter().all(|&v| v == s || v == -s));
    }

    #[test]
    fn instances_are_keyed_by_seed_and_trial() {
        let cfg = small(32);
        let a = gen_instance(&cfg, 1).unwrap();
        let b = gen_instance(&cfg, 1).unwrap();
        assert_eq!(a.problem.a, b.problem.a);
        assert_eq!(a.problem.y, b.problem.y);
        assert_eq!(a.x0, b.x0);
        let c = gen_instance(&cfg, 2).unwrap();
        assert_ne!(a.x0, c.x0);
    }

    #[test]
    fn lambda_sweep_emits_one_row_per_lambda() {
        let cfg = ExperimentConfig {
            trials: 1,
            ..small(64)
        };
        let r = sweep(&cfg, Axis::Lambda, &[0.5, 1.0, 2.0]).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert!(r
            .rows
            .iter()
            .all(|row| row.empirical_std == 0.0 && row.trials == 1));
    }

    #[test]
    fn delta_sweep_matches_least_squares_formula() {
        let cfg = ExperimentConfig {
            n: 64,
            trials: 1,
            ..Preset::Ls.config()
        };
        let deltas = [1.5, 2.0, 3.0];
        let r = sweep(&cfg, Axis::Delta, &deltas).unwrap();
        for (row, d) in r.rows.iter().zip(deltas) {
            let want = closed_ls(d, 1.0).unwrap();
            assert!(
                (row.predicted_alpha_sq.unwrap() - want).abs() <= 1e-8,
                "{row:?}"
            );
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = small(48);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn csv_and_json_carry_the_same_data() {
        let cfg = small(48);
        let r = run_experiment(&cfg).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("# config_hash="));
        let back = ExperimentResult::from_csv(&csv).unwrap();
        let json: ExperimentResult = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, json);
    }

    #[test]
    fn failures_stay_in_their_row() {
        // Square loss with Cauchy noise has no prediction, but the simulation still runs.
        let cfg = ExperimentConfig {
            noise: ScalarDist::cauchy(0.0, 1.0).unwrap(),
            ..small(32)
        };
        let r = run_experiment(&cfg).unwrap();
        assert!(r.rows[0].predicted_alpha_sq.is_none());
        assert!(r.rows[0].flags.contains("prediction failed"));
        assert!(r.rows[0].empirical_mean.is_finite());
    }

    #[test]
    fn validation() {
        assert!(small(4).validate().is_err());
        assert!(ExperimentConfig {
            trials: 0,
            ..small(16)
        }
        .validate()
        .is_err());
        assert!(ExperimentConfig {
            lambda_grid: vec![2.0, 1.0],
            ..small(16)
        }
        .validate()
        .is_err());
        assert!(ExperimentConfig {
            lambda_grid: vec![],
            ..small(16)
        }
        .validate()
        .is_err());
        assert!(Preset::ConeLs.config().validate().is_err());
        for p in Preset::ALL {
            if p != Preset::ConeLs {
                p.config().validate().unwrap();
            }
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
    }

    #[test]
    fn config_round_trips_through_json() {
        for p in Preset::ALL {
            let c = p.config();
            let back: ExperimentConfig =
                serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.config_hash(), c.config_hash());
        }
    }

    #[test]
    fn predictions_for_presets() {
        for p in Preset::ALL {
            let c = p.config();
            let s = predict(
                c.delta,
                c.lambda_grid[0],
                c.loss,
                c.reg,
                &c.noise,
                &c.signal,
            )
            .unwrap();
            assert!(s.alpha_sq.is_finite() && s.alpha_sq >= 0.0, "{p}: {s:?}");
        }
    }
}
