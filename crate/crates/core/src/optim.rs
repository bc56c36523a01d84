//! One-dimensional searches: Brent minimization (golden section with parabolic steps) and
//! Brent-Dekker root bracketing.

const GOLD: f64 = 0.381_966_011_250_105_1;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Min1d {
    pub x: f64,
    pub f: f64,
    pub evals: usize,
}

/// Minimizes `f` on `[a, b]`. `xtol` is an absolute tolerance on the argument, combined
/// with a relative tolerance of `1e-12`.
pub(crate) fn brent(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, xtol: f64) -> Min1d {
    brent_from(&mut f, a, b, a + GOLD * (b - a), xtol, 500)
}

pub(crate) fn brent_from(
    f: &mut impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    start: f64,
    xtol: f64,
    max_iter: usize,
) -> Min1d {
    let mut x = start.clamp(a, b);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut evals = 1;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = 1e-12 * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Min1d { x, f: fx, evals }
}

/// Minimizes over `(0, ∞)` in log coordinates, starting from a geometric bracket
/// `[lo, hi]` that is widened while the minimum sits on an edge.
pub(crate) fn brent_log(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    floor: f64,
    ceil: f64,
    rel_tol: f64,
) -> Min1d {
    let mut g = |s: f64| f(s.exp());
    let mut total = 0;
    loop {
        let (a, b) = (lo.ln(), hi.ln());
        let r = brent_from(&mut g, a, b, 0.5 * (a + b), rel_tol, 500);
        total += r.evals;
        let span = b - a;
        let at_low = r.x - a < 1e-3 * span && lo > floor;
        let at_high = b - r.x < 1e-3 * span && hi < ceil;
        if at_low {
            hi = (r.x.exp() * 4.0).min(ceil);
            lo = (lo * 1e-3).max(floor);
        } else if at_high {
            lo = (r.x.exp() / 4.0).max(floor);
            hi = (hi * 1e3).min(ceil);
        } else {
            return Min1d {
                x: r.x.exp(),
                f: r.f,
                evals: total,
            };
        }
    }
}

/// Root of `f` in `[a, b]` given values of opposite sign at the ends (Brent-Dekker).
pub(crate) fn zeroin(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    xtol: f64,
) -> f64 {
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    b
}
