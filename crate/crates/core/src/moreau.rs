//! Proximal operators and Moreau envelopes for the loss/regularizer catalog.
//!
//! `env(x; τ) = min_v (x - v)²/(2τ) + f(v)` and `prox` is the minimizer. Every scalar entry
//! has closed forms for both, and the envelope derivatives follow from the prox:
//! `∂ₓenv = (x - prox)/τ`, `∂τ env = -½(∂ₓenv)²`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Below this τ the prox is the identity to working precision.
const TAU_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum MoreauError {
    #[error("envelope parameter must be positive (got τ = {0})")]
    Domain(f64),
    #[error("`{0}` has no scalar proximal operator")]
    NotSeparable(String),
    #[error("unknown catalog entry `{0}`")]
    UnknownName(String),
    #[error("invalid parameter for `{name}`: {msg}")]
    BadParameter { name: String, msg: String },
}

/// A convex scalar function with closed-form prox.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarFn {
    /// `½v²`
    Square,
    /// `|v|`
    Abs,
    /// `½v²` for `|v| ≤ ρ`, `ρ|v| - ½ρ²` beyond.
    Huber {
        rho: f64,
    },
    Zero,
}

impl ScalarFn {
    pub fn value(&self, v: f64) -> f64 {
        match *self {
            ScalarFn::Square => 0.5 * v * v,
            ScalarFn::Abs => v.abs(),
            ScalarFn::Huber { rho } => {
                if v.abs() <= rho {
                    0.5 * v * v
                } else {
                    rho * v.abs() - 0.5 * rho * rho
                }
            }
            ScalarFn::Zero => 0.0,
        }
    }

    pub fn prox(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        check_tau(tau)?;
        Ok(self.prox_unchecked(x, tau))
    }

    pub fn env(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        check_tau(tau)?;
        Ok(self.env_unchecked(x, tau))
    }

    pub fn env_dx(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        check_tau(tau)?;
        Ok(self.env_dx_unchecked(x, tau))
    }

    pub fn env_dtau(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        check_tau(tau)?;
        let d = self.env_dx_unchecked(x, tau);
        Ok(-0.5 * d * d)
    }

    pub(crate) fn prox_unchecked(&self, x: f64, tau: f64) -> f64 {
        if tau < TAU_FLOOR {
            return x;
        }
        match *self {
            ScalarFn::Square => x / (1.0 + tau),
            ScalarFn::Abs => soft_threshold(x, tau),
            ScalarFn::Huber { rho } => {
                if x.abs() <= rho * (1.0 + tau) {
                    x / (1.0 + tau)
                } else {
                    x - tau * rho * x.signum()
                }
            }
            ScalarFn::Zero => x,
        }
    }

    pub(crate) fn env_unchecked(&self, x: f64, tau: f64) -> f64 {
        if tau < TAU_FLOOR {
            return self.value(x);
        }
        match *self {
            ScalarFn::Square => x * x / (2.0 * (1.0 + tau)),
            ScalarFn::Abs => {
                if x.abs() <= tau {
                    x * x / (2.0 * tau)
                } else {
                    x.abs() - 0.5 * tau
                }
            }
            ScalarFn::Huber { rho } => {
                if x.abs() <= rho * (1.0 + tau) {
                    x * x / (2.0 * (1.0 + tau))
                } else {
                    rho * x.abs() - 0.5 * rho * rho * (1.0 + tau)
                }
            }
            ScalarFn::Zero => 0.0,
        }
    }

    /// `(x - prox(x;τ))/τ`, written per branch to avoid cancellation.
    pub(crate) fn env_dx_unchecked(&self, x: f64, tau: f64) -> f64 {
        match *self {
            ScalarFn::Square => x / (1.0 + tau),
            ScalarFn::Abs => {
                if x.abs() <= tau {
                    x / tau
                } else {
                    x.signum()
                }
            }
            ScalarFn::Huber { rho } => {
                if x.abs() <= rho * (1.0 + tau) {
                    x / (1.0 + tau)
                } else {
                    rho * x.signum()
                }
            }
            ScalarFn::Zero => 0.0,
        }
    }

    /// Points where the envelope at parameter `τ` switches branch.
    pub fn env_kinks(&self, tau: f64) -> Vec<f64> {
        match *self {
            ScalarFn::Abs => vec![-tau, tau],
            ScalarFn::Huber { rho } => vec![-rho * (1.0 + tau), rho * (1.0 + tau)],
            ScalarFn::Square | ScalarFn::Zero => Vec::new(),
        }
    }

    /// Points where the function itself is not smooth.
    pub fn value_kinks(&self) -> Vec<f64> {
        match *self {
            ScalarFn::Abs => vec![0.0],
            ScalarFn::Huber { rho } => vec![-rho, rho],
            ScalarFn::Square | ScalarFn::Zero => Vec::new(),
        }
    }

    /// Whether `f(v)` grows at most linearly.
    pub fn has_linear_growth(&self) -> bool {
        matches!(
            self,
            ScalarFn::Abs | ScalarFn::Huber { .. } | ScalarFn::Zero
        )
    }

    /// Envelope of the convex conjugate `f*`, written out independently of `env`.
    /// `None` where no separate closed form is provided.
    pub fn conjugate_env(&self, y: f64, sigma: f64) -> Option<f64> {
        match *self {
            // f* is the indicator of [-1, 1].
            ScalarFn::Abs => {
                let d = (y.abs() - 1.0).max(0.0);
                Some(d * d / (2.0 * sigma))
            }
            // f* = f.
            ScalarFn::Square => Some(y * y / (2.0 * (1.0 + sigma))),
            // f* is the indicator of {0}.
            ScalarFn::Zero => Some(y * y / (2.0 * sigma)),
            ScalarFn::Huber { .. } => None,
        }
    }
}

fn check_tau(tau: f64) -> Result<(), MoreauError> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(MoreauError::Domain(tau))
    }
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Envelope of the Euclidean norm on ℝᵗ at a point of radius `r`.
pub fn block_env(t: usize, r: f64, tau: f64) -> Result<f64, MoreauError> {
    check_tau(tau)?;
    if t == 0 || !(r >= 0.0) {
        return Err(MoreauError::BadParameter {
            name: "block_l2".into(),
            msg: format!("need t >= 1 and r >= 0 (got t = {t}, r = {r})"),
        });
    }
    Ok(if r <= tau {
        r * r / (2.0 * tau)
    } else {
        r - 0.5 * tau
    })
}

/// In-place prox of `τ‖·‖₂` on one block.
pub fn block_soft_threshold(v: &mut [f64], tau: f64) {
    let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = if r > tau { 1.0 - tau / r } else { 0.0 };
    v.iter_mut().for_each(|x| *x *= scale);
}

/// Separable losses `ℓ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossSpec {
    Square,
    Abs,
    Huber { rho: f64 },
}

impl LossSpec {
    pub fn huber(rho: f64) -> Result<Self, MoreauError> {
        if rho > 0.0 && rho.is_finite() {
            Ok(LossSpec::Huber { rho })
        } else {
            Err(MoreauError::BadParameter {
                name: "huber".into(),
                msg: format!("rho must be positive (got {rho})"),
            })
        }
    }

    pub fn scalar(&self) -> ScalarFn {
        match *self {
            LossSpec::Square => ScalarFn::Square,
            LossSpec::Abs => ScalarFn::Abs,
            LossSpec::Huber { rho } => ScalarFn::Huber { rho },
        }
    }

    pub fn prox(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar().prox(x, tau)
    }
    pub fn env(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar().env(x, tau)
    }
    pub fn env_dx(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar().env_dx(x, tau)
    }
    pub fn env_dtau(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar().env_dtau(x, tau)
    }
}

/// Regularizers `f`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegSpec {
    L1,
    HalfSquare,
    Zero,
    BlockL2 { t: usize },
}

impl RegSpec {
    pub fn block_l2(t: usize) -> Result<Self, MoreauError> {
        if t == 0 {
            return Err(MoreauError::BadParameter {
                name: "block_l2".into(),
                msg: "block length must be at least 1".into(),
            });
        }
        Ok(RegSpec::BlockL2 { t })
    }

    /// Scalar form of the regularizer; `BlockL2` qualifies only for `t = 1`.
    pub fn scalar(&self) -> Result<ScalarFn, MoreauError> {
        match *self {
            RegSpec::L1 | RegSpec::BlockL2 { t: 1 } => Ok(ScalarFn::Abs),
            RegSpec::HalfSquare => Ok(ScalarFn::Square),
            RegSpec::Zero => Ok(ScalarFn::Zero),
            RegSpec::BlockL2 { .. } => Err(MoreauError::NotSeparable(self.to_string())),
        }
    }

    pub fn prox(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar()?.prox(x, tau)
    }
    pub fn env(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar()?.env(x, tau)
    }
    pub fn env_dx(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar()?.env_dx(x, tau)
    }
    pub fn env_dtau(&self, x: f64, tau: f64) -> Result<f64, MoreauError> {
        self.scalar()?.env_dtau(x, tau)
    }
}

/// Cone constraint summarized by its statistical-dimension ratio `D̄ ∈ (0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeRegSpec {
    pub stat_dim_ratio: f64,
}

impl ConeRegSpec {
    pub fn new(stat_dim_ratio: f64) -> Result<Self, MoreauError> {
        if stat_dim_ratio > 0.0 && stat_dim_ratio < 1.0 {
            Ok(Self { stat_dim_ratio })
        } else {
            Err(MoreauError::BadParameter {
                name: "cone".into(),
                msg: format!(
                    "statistical dimension ratio must lie in (0, 1), got {stat_dim_ratio}"
                ),
            })
        }
    }
}

/// Any loss in the catalog, including the non-separable `√n‖v‖₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum LossName {
    Separable(LossSpec),
    SqrtL2,
}

/// Any regularizer in the catalog, including cone constraints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RegName {
    Separable(RegSpec),
    Cone(ConeRegSpec),
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Square => write!(f, "square"),
            LossSpec::Abs => write!(f, "abs"),
            LossSpec::Huber { rho } => write!(f, "huber({rho})"),
        }
    }
}

impl fmt::Display for RegSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegSpec::L1 => write!(f, "l1"),
            RegSpec::HalfSquare => write!(f, "ridge"),
            RegSpec::Zero => write!(f, "zero"),
            RegSpec::BlockL2 { t } => write!(f, "block_l2({t})"),
        }
    }
}

impl fmt::Display for LossName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossName::Separable(l) => l.fmt(f),
            LossName::SqrtL2 => write!(f, "sqrt_l2"),
        }
    }
}

impl fmt::Display for RegName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegName::Separable(r) => r.fmt(f),
            RegName::Cone(c) => write!(f, "cone({})", c.stat_dim_ratio),
        }
    }
}

/// Splits `name(arg)` into its lowercase name and optional argument text.
fn split_call(s: &str) -> Result<(String, Option<String>), MoreauError> {
    let s = s.trim();
    match s.find('(') {
        None => Ok((s.to_ascii_lowercase(), None)),
        Some(open) => {
            let inner = s[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| MoreauError::UnknownName(s.to_string()))?;
            Ok((
                s[..open].trim().to_ascii_lowercase(),
                Some(inner.trim().to_string()),
            ))
        }
    }
}

fn parse_arg<T: FromStr>(name: &str, arg: Option<String>) -> Result<T, MoreauError> {
    let arg = arg.ok_or_else(|| MoreauError::BadParameter {
        name: name.into(),
        msg: "missing argument".into(),
    })?;
    arg.parse().map_err(|_| MoreauError::BadParameter {
        name: name.into(),
        msg: format!("cannot parse `{arg}`"),
    })
}

impl FromStr for LossName {
    type Err = MoreauError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = split_call(s)?;
        let no_arg = |v: LossName| {
            if arg.is_some() {
                Err(MoreauError::BadParameter {
                    name: name.clone(),
                    msg: "takes no argument".into(),
                })
            } else {
                Ok(v)
            }
        };
        match name.as_str() {
            "square" => no_arg(LossName::Separable(LossSpec::Square)),
            "abs" => no_arg(LossName::Separable(LossSpec::Abs)),
            "sqrt_l2" => no_arg(LossName::SqrtL2),
            "huber" => Ok(LossName::Separable(LossSpec::huber(parse_arg(
                "huber", arg,
            )?)?)),
            _ => Err(MoreauError::UnknownName(s.trim().to_string())),
        }
    }
}

impl FromStr for RegName {
    type Err = MoreauError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = split_call(s)?;
        let no_arg = |v: RegName| {
            if arg.is_some() {
                Err(MoreauError::BadParameter {
                    name: name.clone(),
                    msg: "takes no argument".into(),
                })
            } else {
                Ok(v)
            }
        };
        match name.as_str() {
            "l1" => no_arg(RegName::Separable(RegSpec::L1)),
            "ridge" => no_arg(RegName::Separable(RegSpec::HalfSquare)),
            "zero" => no_arg(RegName::Separable(RegSpec::Zero)),
            "block_l2" => Ok(RegName::Separable(RegSpec::block_l2(parse_arg(
                "block_l2", arg,
            )?)?)),
            "cone" => Ok(RegName::Cone(ConeRegSpec::new(parse_arg("cone", arg)?)?)),
            _ => Err(MoreauError::UnknownName(s.trim().to_string())),
        }
    }
}

impl TryFrom<String> for LossName {
    type Error = MoreauError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<LossName> for String {
    fn from(l: LossName) -> Self {
        l.to_string()
    }
}

impl TryFrom<String> for RegName {
    type Error = MoreauError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<RegName> for String {
    fn from(r: RegName) -> Self {
        r.to_string()
    }
}
