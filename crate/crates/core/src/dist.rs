//! Scalar noise/signal distributions: finite mixtures of point masses, Gaussians and Cauchy
//! atoms, with sampling and numerical expectations over `c·G + Z`.
//!
//! Expectations are computed atom by atom. Point masses and Gaussians are folded together
//! with `c·G` into a single Gaussian and integrated with a panel Gauss-Legendre rule in
//! standardized coordinates (or Gauss-Hermite, on request). Cauchy atoms use an arctangent
//! substitution `z = loc + scale·tan(u)` nested inside a Gaussian rule over `G`.
//!
//! Integrands built from Moreau envelopes are only piecewise smooth. Callers that know where
//! the kinks are pass them as [`Kinks`]; every panel edge then sits on a kink and the rules
//! keep their spectral accuracy.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Cauchy, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{panel_edges, QuadRule};

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("mixture weights must be non-negative and sum to 1 (got sum {0})")]
    BadWeights(f64),
    #[error("invalid atom: {0}")]
    BadAtom(String),
    #[error("a mixture needs at least one component")]
    Empty,
    #[error("integrand grows too fast to be integrable against a Cauchy atom")]
    NonIntegrable,
    #[error("cannot parse distribution `{input}`: {msg}")]
    Parse { input: String, msg: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Atom {
    PointMass { value: f64 },
    Gaussian { mean: f64, variance: f64 },
    Cauchy { location: f64, scale: f64 },
}

impl Atom {
    fn validated(self) -> Result<Self, DistError> {
        match self {
            Atom::PointMass { value } if !value.is_finite() => {
                Err(DistError::BadAtom(format!("point mass at {value}")))
            }
            Atom::Gaussian { mean, variance } => {
                if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
                    Err(DistError::BadAtom(format!(
                        "normal({mean}, {variance}) needs a finite mean and variance >= 0"
                    )))
                } else if variance == 0.0 {
                    Ok(Atom::PointMass { value: mean })
                } else {
                    Ok(self)
                }
            }
            Atom::Cauchy { location, scale } => {
                if !location.is_finite() || !scale.is_finite() || scale <= 0.0 {
                    Err(DistError::BadAtom(format!(
                        "cauchy({location}, {scale}) needs scale > 0"
                    )))
                } else {
                    Ok(self)
                }
            }
            other => Ok(other),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Atom::PointMass { value } => value,
            Atom::Gaussian { mean, variance } => {
                let g: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * g
            }
            Atom::Cauchy { location, scale } => {
                Cauchy::new(location, scale).expect("validated").sample(rng)
            }
        }
    }

    pub fn is_heavy_tailed(&self) -> bool {
        matches!(self, Atom::Cauchy { .. })
    }

    /// Visits quadrature nodes for `E[h(c·G + Z)]`, `G ~ N(0,1)` independent of `Z ~ self`.
    ///
    /// Each node reports `x = c·G + Z`, the conditional mean `E[G | node]` (so that
    /// `E[h·G] = Σ w·h(x)·g`) and the noise value `z` whenever it is pinned down by the node.
    /// For Gaussian atoms `z` is integrated out and reported as `None`.
    pub fn visit(&self, c: f64, kinks: &Kinks<'_>, quad: &Quadrature, f: &mut impl FnMut(Node)) {
        match *self {
            Atom::PointMass { value } => {
                quad.visit_gaussian(value, 0.0, c, kinks.x, Some(value), f)
            }
            Atom::Gaussian { mean, variance } => {
                quad.visit_gaussian(mean, variance, c, kinks.x, None, f)
            }
            Atom::Cauchy { location, scale } => quad.visit_cauchy(location, scale, c, kinks, f),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::PointMass { value } => write!(f, "delta({value})"),
            Atom::Gaussian { mean, variance } => write!(f, "normal({mean}, {variance})"),
            Atom::Cauchy { location, scale } => write!(f, "cauchy({location}, {scale})"),
        }
    }
}

/// A quadrature node of `E[h(c·G + Z)]`.
#[derive(Clone, Copy, Debug)]
pub struct Node {
    pub weight: f64,
    pub x: f64,
    pub g: f64,
    pub z: Option<f64>,
}

/// Known breakpoints of an integrand, in terms of `x = c·G + Z` and, separately, of `Z`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kinks<'a> {
    pub x: &'a [f64],
    pub z: &'a [f64],
}

impl<'a> Kinks<'a> {
    pub const NONE: Kinks<'static> = Kinks { x: &[], z: &[] };

    pub fn in_x(x: &'a [f64]) -> Self {
        Self { x, z: &[] }
    }
}

/// Finite mixture `Σ wᵢ·atomᵢ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, Atom)>", into = "Vec<(f64, Atom)>")]
pub struct ScalarDist {
    components: Vec<(f64, Atom)>,
}

impl TryFrom<Vec<(f64, Atom)>> for ScalarDist {
    type Error = DistError;
    fn try_from(v: Vec<(f64, Atom)>) -> Result<Self, Self::Error> {
        Self::mixture(v)
    }
}

impl From<ScalarDist> for Vec<(f64, Atom)> {
    fn from(d: ScalarDist) -> Self {
        d.components
    }
}

impl ScalarDist {
    pub fn mixture(components: Vec<(f64, Atom)>) -> Result<Self, DistError> {
        if components.is_empty() {
            return Err(DistError::Empty);
        }
        let mut total = 0.0;
        let mut out = Vec::with_capacity(components.len());
        for (w, atom) in components {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(DistError::BadWeights(w));
            }
            total += w;
            out.push((w, atom.validated()?));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(DistError::BadWeights(total));
        }
        Ok(Self { components: out })
    }

    pub fn point(value: f64) -> Self {
        Self::single(Atom::PointMass { value })
    }

    pub fn normal(mean: f64, variance: f64) -> Result<Self, DistError> {
        Self::mixture(vec![(1.0, Atom::Gaussian { mean, variance })])
    }

    pub fn cauchy(location: f64, scale: f64) -> Result<Self, DistError> {
        Self::mixture(vec![(1.0, Atom::Cauchy { location, scale })])
    }

    /// `(1-p)·δ₀ + p·N(0, variance)`.
    pub fn sparse_gaussian(p: f64, variance: f64) -> Result<Self, DistError> {
        Self::mixture(vec![
            (1.0 - p, Atom::PointMass { value: 0.0 }),
            (
                p,
                Atom::Gaussian {
                    mean: 0.0,
                    variance,
                },
            ),
        ])
    }

    fn single(atom: Atom) -> Self {
        Self {
            components: vec![(1.0, atom)],
        }
    }

    pub fn components(&self) -> &[(f64, Atom)] {
        &self.components
    }

    pub fn has_heavy_tail(&self) -> bool {
        self.components
            .iter()
            .any(|(w, a)| *w > 0.0 && a.is_heavy_tailed())
    }

    /// Mean, or `None` when a Cauchy component makes it undefined.
    pub fn mean(&self) -> Option<f64> {
        let mut m = 0.0;
        for (w, a) in &self.components {
            m += w * match *a {
                Atom::PointMass { value } => value,
                Atom::Gaussian { mean, .. } => mean,
                Atom::Cauchy { .. } if *w == 0.0 => 0.0,
                Atom::Cauchy { .. } => return None,
            };
        }
        Some(m)
    }

    /// `E[Z²]`; `+∞` when a Cauchy component is present.
    pub fn second_moment(&self) -> f64 {
        self.components
            .iter()
            .map(|(w, a)| match *a {
                Atom::PointMass { value } => w * value * value,
                Atom::Gaussian { mean, variance } => w * (mean * mean + variance),
                Atom::Cauchy { .. } if *w == 0.0 => 0.0,
                Atom::Cauchy { .. } => f64::INFINITY,
            })
            .sum()
    }

    /// Probability of the exact value `v`.
    pub fn mass_at(&self, v: f64) -> f64 {
        self.components
            .iter()
            .filter(|(_, a)| matches!(a, Atom::PointMass { value } if *value == v))
            .map(|(w, _)| w)
            .sum()
    }

    /// A typical squared scale: the second moment, or the squared Cauchy scale for
    /// heavy-tailed components.
    pub fn scale_proxy(&self) -> f64 {
        self.components
            .iter()
            .map(|(w, a)| match *a {
                Atom::PointMass { value } => w * value * value,
                Atom::Gaussian { mean, variance } => w * (mean * mean + variance),
                Atom::Cauchy { location, scale } => w * (location * location + scale * scale),
            })
            .sum()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let atom = if self.components.len() == 1 {
            &self.components[0].1
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = &self.components.last().expect("non-empty").1;
            for (w, a) in &self.components {
                acc += w;
                if u < acc {
                    pick = a;
                    break;
                }
            }
            pick
        };
        atom.sample(rng)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<f64> {
        (0..count).map(|_| self.sample_one(rng)).collect()
    }

    /// `E[f(c·G + Z)]` with the default quadrature.
    pub fn expectation(&self, c: f64, f: impl Fn(f64) -> f64) -> Result<f64, DistError> {
        self.expectation_with(&Quadrature::default(), c, Kinks::NONE, |n| f(n.x))
    }

    /// General form of [`expectation`](Self::expectation): the integrand sees the whole node.
    pub fn expectation_with(
        &self,
        quad: &Quadrature,
        c: f64,
        kinks: Kinks<'_>,
        mut f: impl FnMut(&Node) -> f64,
    ) -> Result<f64, DistError> {
        if self.has_heavy_tail() {
            check_tail_growth(&mut f)?;
        }
        let mut acc = 0.0;
        for (w, atom) in &self.components {
            if *w == 0.0 {
                continue;
            }
            atom.visit(c, &kinks, quad, &mut |n| acc += w * n.weight * f(&n));
        }
        Ok(acc)
    }
}

/// Rejects integrands that grow polynomially; anything integrable against a Cauchy density
/// has to grow slower than `|x|`.
fn check_tail_growth(f: &mut impl FnMut(&Node) -> f64) -> Result<(), DistError> {
    for sign in [-1.0, 1.0] {
        let probe = |r: f64| Node {
            weight: 1.0,
            x: sign * r,
            g: 0.0,
            z: Some(sign * r),
        };
        let near = f(&probe(1e6)).abs();
        let far = f(&probe(1e12)).abs();
        if !far.is_finite() || far > 1e3 * (1.0 + near) {
            return Err(DistError::NonIntegrable);
        }
    }
    Ok(())
}

impl fmt::Display for ScalarDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.components.len() == 1 {
            return write!(f, "{}", self.components[0].1);
        }
        write!(f, "mix(")?;
        for (i, (w, a)) in self.components.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{w}*{a}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for ScalarDist {
    type Err = DistError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let comps = p.mixture_or_atom()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Self::mixture(comps)
    }
}

/// Block-sparse signal: each length-`t` block is zero with probability `zero_prob`,
/// otherwise its entries are i.i.d. `N(0, active_variance)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSignalDist {
    pub block_len: usize,
    pub zero_prob: f64,
    pub active_variance: f64,
}

impl BlockSignalDist {
    pub fn new(block_len: usize, zero_prob: f64, active_variance: f64) -> Result<Self, DistError> {
        if block_len == 0 {
            return Err(DistError::BadAtom("block length must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&zero_prob) {
            return Err(DistError::BadWeights(zero_prob));
        }
        if !(active_variance >= 0.0) || !active_variance.is_finite() {
            return Err(DistError::BadAtom(format!(
                "block variance {active_variance}"
            )));
        }
        Ok(Self {
            block_len,
            zero_prob,
            active_variance,
        })
    }

    /// Per-coordinate second moment.
    pub fn second_moment(&self) -> f64 {
        (1.0 - self.zero_prob) * self.active_variance
    }

    /// Draws `blocks` consecutive blocks.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, blocks: usize) -> Vec<f64> {
        let sd = self.active_variance.sqrt();
        let mut out = Vec::with_capacity(blocks * self.block_len);
        for _ in 0..blocks {
            let u: f64 = rng.random();
            let active = u >= self.zero_prob;
            for _ in 0..self.block_len {
                let g: f64 = rng.sample(StandardNormal);
                out.push(if active { sd * g } else { 0.0 });
            }
        }
        out
    }
}

impl FromStr for BlockSignalDist {
    type Err = DistError;
    /// `block(t, zero_prob, variance)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser::new(s);
        let name = p.ident();
        if name != "block" {
            return Err(p.error("expected block(t, zero_prob, variance)"));
        }
        let args = p.args()?;
        p.skip_ws();
        if args.len() != 3 || p.pos != p.src.len() {
            return Err(p.error("expected block(t, zero_prob, variance)"));
        }
        if args[0] < 1.0 || args[0].fract() != 0.0 {
            return Err(p.error("block length must be a positive integer"));
        }
        Self::new(args[0] as usize, args[1], args[2])
    }
}

impl fmt::Display for BlockSignalDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "block({}, {}, {})",
            self.block_len, self.zero_prob, self.active_variance
        )
    }
}

/// How Gaussian atoms are integrated.
#[derive(Clone, Debug)]
pub enum GaussianScheme {
    /// A single Gauss-Hermite rule; ignores kinks.
    Hermite(QuadRule),
    /// Gauss-Legendre panels over `[-span, span]` standard deviations, split at kinks.
    Panels {
        rule: QuadRule,
        span: f64,
        width: f64,
    },
}

/// Quadrature configuration for [`ScalarDist::expectation_with`].
#[derive(Clone, Debug)]
pub struct Quadrature {
    pub gaussian: GaussianScheme,
    /// Per-panel rule for the arctangent-mapped Cauchy integral.
    pub cauchy_rule: QuadRule,
    /// Number of equal-width panels on `(-π/2, π/2)` before kink splitting.
    pub cauchy_panels: usize,
    /// Outer rule over `G` when a Cauchy atom is mixed with `c·G`.
    pub cauchy_outer: GaussianScheme,
}

impl Default for Quadrature {
    fn default() -> Self {
        let panel = QuadRule::gauss_legendre(12);
        Self {
            gaussian: GaussianScheme::Panels {
                rule: panel.clone(),
                span: 10.0,
                width: 2.0,
            },
            cauchy_rule: panel.clone(),
            cauchy_panels: 24,
            cauchy_outer: GaussianScheme::Panels {
                rule: QuadRule::gauss_legendre(10),
                span: 9.0,
                width: 2.0,
            },
        }
    }
}

impl Quadrature {
    /// Gauss-Hermite for Gaussian atoms with `n` nodes.
    pub fn hermite(n: usize) -> Self {
        Self {
            gaussian: GaussianScheme::Hermite(QuadRule::gauss_hermite(n)),
            ..Self::default()
        }
    }

    /// Visits nodes of `E[h(μ + s·U)]`, `s² = c² + var`, reporting `E[G | U] = c·U/s`.
    fn visit_gaussian(
        &self,
        mean: f64,
        var: f64,
        c: f64,
        kinks: &[f64],
        z: Option<f64>,
        f: &mut impl FnMut(Node),
    ) {
        let s = (c * c + var).sqrt();
        if s == 0.0 {
            f(Node {
                weight: 1.0,
                x: mean,
                g: 0.0,
                z,
            });
            return;
        }
        let ratio = c / s;
        standard_normal_nodes(&self.gaussian, kinks, mean, s, &mut |w, u| {
            f(Node {
                weight: w,
                x: mean + s * u,
                g: ratio * u,
                z,
            })
        });
    }

    fn visit_cauchy(
        &self,
        loc: f64,
        scale: f64,
        c: f64,
        kinks: &Kinks<'_>,
        f: &mut impl FnMut(Node),
    ) {
        let mut cuts: Vec<f64> = Vec::with_capacity(kinks.x.len() + kinks.z.len());
        let mut edges = Vec::new();
        let mut inner = |g: f64, wg: f64, f: &mut dyn FnMut(Node)| {
            cuts.clear();
            cuts.extend(kinks.x.iter().map(|b| ((b - c * g - loc) / scale).atan()));
            cuts.extend(kinks.z.iter().map(|b| ((b - loc) / scale).atan()));
            let half = PI / 2.0;
            panel_edges(
                -half,
                half,
                PI / self.cauchy_panels.max(1) as f64,
                &cuts,
                &mut edges,
            );
            for win in edges.windows(2) {
                let (a, b) = (win[0], win[1]);
                let mid = 0.5 * (a + b);
                let h = 0.5 * (b - a);
                for (t, w) in self.cauchy_rule.nodes.iter().zip(&self.cauchy_rule.weights) {
                    let u = mid + h * t;
                    let zv = loc + scale * u.tan();
                    f(Node {
                        weight: wg * w * h / PI,
                        x: c * g + zv,
                        g,
                        z: Some(zv),
                    });
                }
            }
        };
        if c == 0.0 {
            inner(0.0, 1.0, f);
        } else {
            let mut outer = Vec::new();
            standard_normal_nodes(&self.cauchy_outer, &[], 0.0, 1.0, &mut |w, u| {
                outer.push((u, w))
            });
            for (g, wg) in outer {
                inner(g, wg, f);
            }
        }
    }
}

/// Nodes `(w, u)` of `E[h(mean + s·U)]`, `U ~ N(0,1)`, with cuts at `(kink - mean)/s`.
fn standard_normal_nodes(
    scheme: &GaussianScheme,
    kinks: &[f64],
    mean: f64,
    s: f64,
    f: &mut impl FnMut(f64, f64),
) {
    match scheme {
        GaussianScheme::Hermite(rule) => {
            for (u, w) in rule.nodes.iter().zip(&rule.weights) {
                f(*w, *u);
            }
        }
        GaussianScheme::Panels { rule, span, width } => {
            let cuts: Vec<f64> = kinks.iter().map(|b| (b - mean) / s).collect();
            let mut edges = Vec::new();
            panel_edges(-span, *span, *width, &cuts, &mut edges);
            let norm = 1.0 / (2.0 * PI).sqrt();
            for win in edges.windows(2) {
                let (a, b) = (win[0], win[1]);
                let mid = 0.5 * (a + b);
                let h = 0.5 * (b - a);
                for (t, w) in rule.nodes.iter().zip(&rule.weights) {
                    let u = mid + h * t;
                    f(w * h * norm * (-0.5 * u * u).exp(), u);
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn error(&self, msg: &str) -> DistError {
        DistError::Parse {
            input: self.src.to_string(),
            msg: format!("{msg} at offset {}", self.pos),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let r = self.rest();
        self.pos += r.len() - r.trim_start().len();
    }

    fn eat(&mut self, ch: char) -> bool {
        self.skip_ws();
        if self.rest().starts_with(ch) {
            self.pos += ch.len_utf8();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, ch: char) -> Result<(), DistError> {
        if self.eat(ch) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{ch}`")))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(r.len());
        self.pos += len;
        r[..len].to_ascii_lowercase()
    }

    fn number(&mut self) -> Result<f64, DistError> {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E')))
            .unwrap_or(r.len());
        let v = r[..len]
            .parse::<f64>()
            .map_err(|_| self.error("expected a number"))?;
        self.pos += len;
        Ok(v)
    }

    fn args(&mut self) -> Result<Vec<f64>, DistError> {
        self.expect('(')?;
        let mut out = vec![self.number()?];
        while self.eat(',') {
            out.push(self.number()?);
        }
        self.expect(')')?;
        Ok(out)
    }

    fn mixture_or_atom(&mut self) -> Result<Vec<(f64, Atom)>, DistError> {
        let save = self.pos;
        let name = self.ident();
        if name == "mix" {
            self.expect('(')?;
            let mut out = Vec::new();
            loop {
                let w = self.number()?;
                self.expect('*')?;
                for (wi, a) in self.mixture_or_atom()? {
                    out.push((w * wi, a));
                }
                if !self.eat(',') {
                    break;
                }
            }
            self.expect(')')?;
            Ok(out)
        } else {
            self.pos = save;
            Ok(vec![(1.0, self.atom()?)])
        }
    }

    fn atom(&mut self) -> Result<Atom, DistError> {
        let name = self.ident();
        let args = self.args()?;
        let arity = |n: usize| -> Result<(), DistError> {
            if args.len() == n {
                Ok(())
            } else {
                Err(self.error(&format!("`{name}` takes {n} argument(s)")))
            }
        };
        match name.as_str() {
            "delta" | "point" => {
                arity(1)?;
                Ok(Atom::PointMass { value: args[0] })
            }
            "normal" | "gaussian" => {
                arity(2)?;
                Ok(Atom::Gaussian {
                    mean: args[0],
                    variance: args[1],
                })
            }
            "cauchy" => {
                arity(2)?;
                Ok(Atom::Cauchy {
                    location: args[0],
                    scale: args[1],
                })
            }
            _ => Err(self.error(&format!("unknown distribution `{name}`"))),
        }
    }
}
