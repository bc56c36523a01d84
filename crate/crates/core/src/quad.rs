//! Fixed quadrature rules used by the expectation engine.

use std::f64::consts::PI;

/// Which family a [`QuadRule`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RuleKind {
    /// Probabilists' Gauss-Hermite: integrates against the standard normal density.
    GaussHermite,
    /// Gauss-Legendre on `u ∈ (-π/2, π/2)` with weights scaled by `1/π`, meant to be pushed
    /// through `z = loc + scale·tan(u)` so that it integrates against a Cauchy density.
    TailMapped,
    /// Plain Gauss-Legendre on `[-1, 1]`.
    GaussLegendre,
}

#[derive(Clone, Debug)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub kind: RuleKind,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Gauss-Legendre rule on `[-1, 1]` with `n` nodes.
    pub fn gauss_legendre(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self {
            nodes,
            weights,
            kind: RuleKind::GaussLegendre,
        }
    }

    /// Probabilists' Gauss-Hermite rule: `Σ wᵢ f(xᵢ) ≈ E[f(G)]`, `G ~ N(0,1)`. Weights sum to 1.
    pub fn gauss_hermite(n: usize) -> Self {
        assert!(n >= 1, "a quadrature rule needs at least one node");
        // Physicists' rule by Newton iteration on orthonormal Hermite functions, then rescaled.
        let pim4 = PI.powf(-0.25);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0_f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / (pp * pp);
        }
        // nodes[0..m] are descending positive physicists' nodes; mirror and rescale.
        let mut out_nodes = vec![0.0; n];
        let mut out_weights = vec![0.0; n];
        for i in 0..m {
            let x = nodes[i] * std::f64::consts::SQRT_2;
            let w = weights[i] / PI.sqrt();
            out_nodes[i] = -x;
            out_nodes[n - 1 - i] = x;
            out_weights[i] = w;
            out_weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            out_nodes[n / 2] = 0.0;
        }
        let total: f64 = out_weights.iter().sum();
        for w in &mut out_weights {
            *w /= total;
        }
        Self {
            nodes: out_nodes,
            weights: out_weights,
            kind: RuleKind::GaussHermite,
        }
    }

    /// Gauss-Legendre rule on `(-π/2, π/2)` whose weights sum to 1.
    pub fn tail_mapped(n: usize) -> Self {
        let gl = Self::gauss_legendre(n);
        let half = PI / 2.0;
        Self {
            nodes: gl.nodes.iter().map(|x| half * x).collect(),
            weights: gl.weights.iter().map(|w| w * half / PI).collect(),
            kind: RuleKind::TailMapped,
        }
    }

    /// Integrates `f` over `[a, b]`. Only meaningful for Gauss-Legendre rules.
    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        debug_assert_eq!(self.kind, RuleKind::GaussLegendre);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Legendre polynomial `P_n(x)` and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Splits `[a, b]` into consecutive panels at `cuts` (only those strictly inside) and at a
/// regular spacing of at most `max_width`. Returns the sorted panel endpoints.
pub(crate) fn panel_edges(a: f64, b: f64, max_width: f64, cuts: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let span = b - a;
    let k = (span / max_width).ceil().max(1.0) as usize;
    for i in 0..=k {
        out.push(a + span * i as f64 / k as f64);
    }
    out.extend(cuts.iter().copied().filter(|c| *c > a && *c < b));
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * (1.0 + y.abs()));
}
