#![allow(dead_code)]

use spolab::dist::BlockSignalDist;
use spolab::{EmeProvider, LossSpec, RegSpec, ScalarDist, SpoProblem};

pub struct Case {
    pub name: &'static str,
    pub problem: SpoProblem,
}

fn normal(v: f64) -> ScalarDist {
    ScalarDist::normal(0.0, v).unwrap()
}

fn sparse() -> ScalarDist {
    ScalarDist::sparse_gaussian(0.1, 10.0).unwrap()
}

fn sparse_noise(p: f64) -> ScalarDist {
    ScalarDist::sparse_gaussian(p, 1.0).unwrap()
}

fn cauchy_mix() -> ScalarDist {
    "mix(0.9*delta(0), 0.1*cauchy(0, 1))".parse().unwrap()
}

fn case(name: &'static str, delta: f64, lambda: f64, loss: EmeProvider, reg: EmeProvider) -> Case {
    Case {
        name,
        problem: SpoProblem::new(delta, lambda, loss, reg).unwrap(),
    }
}

/// Eight problems covering the three separable losses against the four regularizer families.
pub fn suite() -> Vec<Case> {
    let sq = |d| EmeProvider::separable_loss(LossSpec::Square, d).unwrap();
    let abs = |d| EmeProvider::separable_loss(LossSpec::Abs, d).unwrap();
    let hub = |d| EmeProvider::separable_loss(LossSpec::huber(1.0).unwrap(), d).unwrap();
    let l1 = |d| EmeProvider::separable_reg(RegSpec::L1, d).unwrap();
    let ridge = |d| EmeProvider::separable_reg(RegSpec::HalfSquare, d).unwrap();
    let block = |t, z| EmeProvider::block(t, BlockSignalDist::new(t, z, 1.0).unwrap()).unwrap();
    vec![
        case("square-l1", 1.2, 1.0, sq(normal(1.0)), l1(sparse())),
        case("abs-l1", 1.2, 0.2, abs(sparse_noise(0.3)), l1(sparse())),
        case("huber-l1-cauchy", 0.7, 1.0, hub(cauchy_mix()), l1(sparse())),
        case(
            "square-ridge",
            0.8,
            0.5,
            sq(normal(0.5)),
            ridge(normal(1.0)),
        ),
        case("abs-ridge", 2.0, 1.0, abs(normal(1.0)), ridge(sparse())),
        case(
            "huber-cone",
            1.0,
            1.0,
            hub(cauchy_mix()),
            EmeProvider::cone(0.4).unwrap(),
        ),
        case("square-block", 0.75, 1.0, sq(normal(0.09)), block(3, 0.95)),
        case("huber-block", 1.0, 0.5, hub(normal(1.0)), block(2, 0.8)),
    ]
}

pub mod props {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use spolab::harness::{run_experiment, Preset};
    use spolab::spo::{
        solve_fixed_point, solve_minimax, FixedPointOptions, MinimaxOptions, Profile,
    };
    use spolab::{EmeProvider, LossSpec, ScalarDist};

    /// Loss providers whose expected envelope is strictly convex.
    pub fn strictly_convex_losses() -> Vec<(&'static str, EmeProvider)> {
        let mix: ScalarDist = "mix(0.9*delta(0), 0.1*cauchy(0, 1))".parse().unwrap();
        let abs = |d| EmeProvider::separable_loss(LossSpec::Abs, d).unwrap();
        let hub = |d| EmeProvider::separable_loss(LossSpec::huber(1.0).unwrap(), d).unwrap();
        vec![
            ("abs-normal", abs(ScalarDist::normal(0.0, 1.0).unwrap())),
            (
                "abs-sparse",
                abs(ScalarDist::sparse_gaussian(0.3, 1.0).unwrap()),
            ),
            ("abs-cauchy-mix", abs(mix)),
            ("huber-normal", hub(ScalarDist::normal(0.0, 1.0).unwrap())),
            ("huber-cauchy", hub(ScalarDist::cauchy(0.0, 1.0).unwrap())),
        ]
    }

    /// `L((p+q)/2) < (L(p)+L(q))/2 - 1e-12` at one pair of points.
    pub fn midpoint_gap(l: &EmeProvider, p: (f64, f64), q: (f64, f64)) -> Result<(), String> {
        let mid = l
            .value(0.5 * (p.0 + q.0), 0.5 * (p.1 + q.1))
            .map_err(|e| e.to_string())?;
        let avg = 0.5
            * (l.value(p.0, p.1).map_err(|e| e.to_string())?
                + l.value(q.0, q.1).map_err(|e| e.to_string())?);
        if mid < avg - 1e-12 {
            Ok(())
        } else {
            Err(format!("L(mid) = {mid}, average = {avg} at {p:?}, {q:?}"))
        }
    }

    pub fn convexity_probes(count: usize, seed: u64) -> Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, l) in strictly_convex_losses() {
            for _ in 0..count {
                let mut pt = || (rng.random_range(0.01..10.0), rng.random_range(0.01..10.0));
                let (p, q) = (pt(), pt());
                midpoint_gap(&l, p, q).map_err(|e| format!("{name}: {e}"))?;
            }
        }
        Ok(())
    }

    pub fn is_unimodal(values: &[f64]) -> bool {
        let tol = 1e-10 * values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let mut rising = false;
        values.windows(2).all(|w| {
            if w[1] > w[0] + tol {
                rising = true;
            } else if w[1] < w[0] - tol && rising {
                return false;
            }
            true
        })
    }

    /// `M(α)` on 200 points up to three times the minimizer.
    pub fn unimodal_profiles() -> Result<(), String> {
        for c in super::suite() {
            let s =
                solve_minimax(&c.problem, &MinimaxOptions::default()).map_err(|e| e.to_string())?;
            let top = 3.0 * s.alpha.max(0.1);
            let mut prof = Profile::new(&c.problem, MinimaxOptions::default().beta_max);
            let mut values = Vec::with_capacity(200);
            for i in 1..=200 {
                values.push(
                    prof.eval(top * i as f64 / 200.0)
                        .map_err(|e| e.to_string())?
                        .m,
                );
            }
            if !is_unimodal(&values) {
                return Err(format!("{}: profile is not unimodal", c.name));
            }
        }
        Ok(())
    }

    pub fn deterministic_reruns() -> Result<(), String> {
        for c in super::suite() {
            let a =
                solve_minimax(&c.problem, &MinimaxOptions::default()).map_err(|e| e.to_string())?;
            let b =
                solve_minimax(&c.problem, &MinimaxOptions::default()).map_err(|e| e.to_string())?;
            if a.to_json() != b.to_json() {
                return Err(format!("{}: solutions differ", c.name));
            }
        }
        let mut cfg = Preset::RidgeLs.config();
        cfg.n = 64;
        cfg.trials = 3;
        let first = run_experiment(&cfg).map_err(|e| e.to_string())?.to_csv();
        let second = run_experiment(&cfg).map_err(|e| e.to_string())?.to_csv();
        if first != second {
            return Err("experiment output differs between runs".into());
        }
        Ok(())
    }

    /// Constants added to `L` or `F` leave `α*` unchanged to 1e-9.
    pub fn offset_invariance() -> Result<(), String> {
        for c in super::suite() {
            let base =
                solve_minimax(&c.problem, &MinimaxOptions::default()).map_err(|e| e.to_string())?;
            let f0 = solve_fixed_point(&c.problem, &FixedPointOptions::default())
                .map_err(|e| e.to_string())?;
            for (dl, df) in [(0.5, 0.0), (-0.25, 0.0), (0.0, 0.7), (1.0, -1.0)] {
                let mut p = c.problem.clone();
                p.loss = p.loss.shifted(dl);
                p.reg = p.reg.shifted(df);
                let s = solve_minimax(&p, &MinimaxOptions::default()).map_err(|e| e.to_string())?;
                let f = solve_fixed_point(&p, &FixedPointOptions::default())
                    .map_err(|e| e.to_string())?;
                if (s.alpha - base.alpha).abs() > 1e-9 || (f.alpha - f0.alpha).abs() > 1e-9 {
                    return Err(format!("{}: α moved under offsets ({dl}, {df})", c.name));
                }
            }
        }
        Ok(())
    }
}
