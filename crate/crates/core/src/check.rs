//! Self-check suites: dynamic program against enumeration, analytic
//! gradient against finite differences, and structural invariants.
//!
//! Each suite returns a [`CheckResult`]; none of them panic on failure.

use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::ClassifierKind;
use crate::data::{Dataset, Session};
use crate::error::Result;
use crate::fixtures::{random_dataset, random_params, random_session, ProblemShape};
use crate::inference::{enumerate_joint, PosteriorTables};
use crate::learning::{fit, objective_and_gradient, FitConfig, GradientBundle, InitOptions, ModelParams};
use crate::math::rel_err;
use crate::observation::{CountParams, NoiseParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Worst observed error or the first failure.
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} ({:.2}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail,
            self.seconds
        )
    }
}

fn timed(name: &str, body: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Relative-error tolerance shared by the oracle comparisons.
pub const ORACLE_TOL: f64 = 1e-10;
pub const FORWARD_BACKWARD_TOL: f64 = 1e-9;
pub const GRADIENT_TOL: f64 = 1e-4;
pub const CONSERVATION_TOL: f64 = 1e-9;

/// Log marginal likelihood and every marginal against brute-force
/// enumeration on `trials` random problems with up to `max_instances`
/// instances and `max_events` events. Count limits cycle through 1..=2.
pub fn oracle_suite(trials: usize, max_instances: usize, max_events: usize, seed: u64) -> CheckResult {
    timed("oracle equivalence", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for trial in 0..trials {
            let c_max = 1 + trial % 2;
            let instances = rng.random_range(1..=max_instances);
            let events = rng.random_range(0..=max_events.min(instances * c_max));
            let dim = rng.random_range(1..=3);
            let kind = if trial % 3 == 2 {
                ClassifierKind::Mlp { hidden: 3 }
            } else {
                ClassifierKind::Logistic
            };
            let s = random_session(&mut rng, "o", ProblemShape { instances, events, dim });
            let p = random_params(&mut rng, dim, kind, c_max, 1 + trial % 2);
            let oracle = enumerate_joint(&s, &p)?;
            let tables = PosteriorTables::compute(&s, &p)?;
            let m = tables.marginals();
            let mut err = rel_err(tables.log_marginal(), oracle.log_likelihood);
            for i in 0..instances {
                err = err.max(rel_err(m.label[i], oracle.label[i]));
                for c in 0..=c_max {
                    for y in 0..2 {
                        err = err.max(rel_err(m.count[i][c][y], oracle.count[i][c][y]));
                    }
                }
                for l in 0..events {
                    err = err.max(rel_err(m.assignment.get(i, l), oracle.assignment[i][l]));
                }
            }
            if err > ORACLE_TOL {
                return Ok((false, format!("trial {trial}: relative error {err:.3e} (L={instances}, M={events}, C={c_max})")));
            }
            worst = worst.max(err);
        }
        Ok((true, format!("{trials} problems, worst relative error {worst:.3e}")))
    })
}

/// `a(L, M)` against `b(1, 1)` on random sessions plus one long session
/// with tight noise.
pub fn forward_backward_suite(trials: usize, stress: Option<(usize, usize)>, seed: u64) -> CheckResult {
    timed("forward/backward consistency", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        let mut cases: Vec<(Session, ModelParams)> = Vec::new();
        for trial in 0..trials {
            let c_max = 1 + trial % 3;
            let instances = rng.random_range(1..=60);
            let events = rng.random_range(0..=instances * c_max).min(instances + 10);
            let s = random_session(&mut rng, "f", ProblemShape { instances, events, dim: 2 });
            let p = random_params(&mut rng, 2, ClassifierKind::Logistic, c_max, 1 + trial % 2);
            cases.push((s, p));
        }
        if let Some((len, events)) = stress {
            cases.push(stress_case(&mut rng, len, events)?);
        }
        for (s, p) in &cases {
            let t = PosteriorTables::compute(s, p)?;
            let err = (t.log_marginal() - t.log_marginal_backward()).abs();
            if !(err <= FORWARD_BACKWARD_TOL) {
                return Ok((false, format!("L={} M={}: |a - b| = {err:.3e}", s.len(), s.num_events())));
            }
            worst = worst.max(err);
        }
        Ok((true, format!("{} sessions, worst |a - b| {worst:.3e}", cases.len())))
    })
}

/// A long unit-spaced session with events 0.003 after scattered instances
/// and sigma = 0.01.
pub fn stress_case(rng: &mut ChaCha8Rng, len: usize, events: usize) -> Result<(Session, ModelParams)> {
    let t: Vec<f64> = (0..len).map(|i| i as f64).collect();
    let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let stride = (len / events.max(1)).max(1);
    let z: Vec<f64> = (0..events).map(|k| (k * stride) as f64 + 0.003).collect();
    let s = Session::new("stress", 1, x, t, z, None)?;
    let classifier = crate::classifier::ClassifierParams::from_weights(ClassifierKind::Logistic, 1, vec![0.5, -2.0], 1.0)?;
    let p = ModelParams::new(classifier, CountParams::bernoulli(0.01, 0.9)?, NoiseParams::gaussian(0.0, 0.01)?);
    Ok((s, p))
}

/// Signature of a packed-gradient implementation under test.
pub type GradientFn<'a> = dyn Fn(&ModelParams, &Dataset) -> Result<GradientBundle> + Sync + 'a;

/// Analytic gradient against central differences of the objective on
/// `datasets` random datasets, alternating classifier kinds and K in {1, 2}.
pub fn gradient_suite(datasets: usize, seed: u64) -> CheckResult {
    gradient_suite_with(datasets, seed, &objective_and_gradient)
}

/// As [`gradient_suite`], with the gradient taken from `gradient`. The
/// objective value always comes from the library.
pub fn gradient_suite_with(datasets: usize, seed: u64, gradient: &GradientFn<'_>) -> CheckResult {
    timed("gradient vs finite differences", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for n in 0..datasets {
            let kind = if n % 2 == 0 {
                ClassifierKind::Logistic
            } else {
                ClassifierKind::Mlp { hidden: 3 }
            };
            let components = 1 + (n / 2) % 2;
            let c_max = 1 + n % 3;
            let dim = rng.random_range(1..=3);
            let data = random_dataset(&mut rng, 3, 8, dim, c_max);
            let params = random_params(&mut rng, dim, kind, c_max, components);
            let analytic = gradient(&params, &data)?.grads;
            let x = params.pack();
            for k in 0..x.len() {
                let h = 1e-5 * x[k].abs().max(1.0);
                let mut xp = x.clone();
                xp[k] += h;
                let mut xm = x.clone();
                xm[k] -= h;
                let fp = objective_and_gradient(&params.unpack(&xp)?, &data)?.objective;
                let fm = objective_and_gradient(&params.unpack(&xm)?, &data)?.objective;
                let numeric = (fp - fm) / (2.0 * h);
                // Scale floor: coordinates with a near-zero derivative are
                // compared absolutely against 1e-2.
                let err = (numeric - analytic[k]).abs() / numeric.abs().max(analytic[k].abs()).max(1e-2);
                if err > GRADIENT_TOL {
                    return Ok((
                        false,
                        format!("dataset {n}, coordinate {k}: analytic {} vs numeric {numeric} (rel {err:.2e})", analytic[k]),
                    ));
                }
                worst = worst.max(err);
            }
        }
        Ok((true, format!("{datasets} datasets, worst relative error {worst:.3e}")))
    })
}

/// Expected event counts sum to `M`; assignment columns sum to one.
pub fn conservation_suite(trials: usize, seed: u64) -> CheckResult {
    timed("conservation", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for trial in 0..trials {
            let c_max = 1 + trial % 3;
            let instances = rng.random_range(1..=50);
            let events = rng.random_range(0..=(instances * c_max).min(instances + 10));
            let s = random_session(&mut rng, "c", ProblemShape { instances, events, dim: 2 });
            let p = random_params(&mut rng, 2, ClassifierKind::Logistic, c_max, 1 + trial % 2);
            let m = PosteriorTables::compute(&s, &p)?.marginals();
            let expected: f64 = m
                .count
                .iter()
                .flat_map(|per| per.iter().enumerate().map(|(c, q)| c as f64 * (q[0] + q[1])))
                .sum();
            let mut err = (expected - events as f64).abs();
            for l in 0..events {
                let col: f64 = (0..instances).map(|i| m.assignment.get(i, l)).sum();
                err = err.max((col - 1.0).abs());
            }
            if err > CONSERVATION_TOL {
                return Ok((false, format!("trial {trial}: deviation {err:.3e}")));
            }
            worst = worst.max(err);
        }
        Ok((true, format!("{trials} sessions, worst deviation {worst:.3e}")))
    })
}

/// Accepted objective values never decrease during a fit.
pub fn monotone_trace_suite(seed: u64) -> CheckResult {
    timed("objective trace monotone", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in [ClassifierKind::Logistic, ClassifierKind::Mlp { hidden: 4 }] {
            let data = random_dataset(&mut rng, 5, 30, 2, 1);
            let init = ModelParams::initial(&data, kind, &InitOptions { seed, ..InitOptions::default() })?;
            let out = fit(&data, &init, &FitConfig { max_iterations: 60, ..FitConfig::default() })?;
            if let Some(w) = out.trace.windows(2).find(|w| w[1] < w[0]) {
                return Ok((false, format!("{}: {} followed by {}", kind.name(), w[0], w[1])));
            }
        }
        Ok((true, "both classifier kinds".into()))
    })
}

/// Reordering sessions changes nothing beyond summation rounding.
pub fn permutation_suite(seed: u64) -> CheckResult {
    timed("session-order invariance", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = random_dataset(&mut rng, 15, 25, 2, 2);
        let params = random_params(&mut rng, 2, ClassifierKind::Logistic, 2, 2);
        let a = objective_and_gradient(&params, &data)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let b = objective_and_gradient(&params, &data.subset(&order)?)?;
        let mut err = rel_err(a.objective, b.objective);
        for (x, y) in a.grads.iter().zip(&b.grads) {
            err = err.max(rel_err(*x, *y));
        }
        Ok((err <= 1e-9, format!("worst relative difference {err:.3e}")))
    })
}

/// Every suite at its default size.
pub fn run_all(seed: u64) -> Vec<CheckResult> {
    vec![
        oracle_suite(500, 8, 3, seed),
        forward_backward_suite(50, Some((10_000, 100)), seed),
        gradient_suite(20, seed),
        conservation_suite(100, seed),
        monotone_trace_suite(seed),
        permutation_suite(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suites_pass() {
        assert!(oracle_suite(40, 6, 3, 1).passed);
        assert!(forward_backward_suite(10, Some((500, 20)), 1).passed);
        assert!(conservation_suite(10, 1).passed);
        assert!(permutation_suite(1).passed);
        let g = gradient_suite(4, 1);
        assert!(g.passed, "{g}");
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let broken = |p: &ModelParams, d: &Dataset| -> Result<GradientBundle> {
            let mut b = objective_and_gradient(p, d)?;
            // Drop the noise-scale term, as if its expectation were forgotten.
            let last = b.grads.len() - 1;
            b.grads[last] *= 0.5;
            Ok(b)
        };
        let r = gradient_suite_with(4, 1, &broken);
        assert!(!r.passed, "{r}");
    }
}
