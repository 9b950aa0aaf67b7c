//! Monotone ascent with a backtracking (Armijo) line search.
//!
//! The search direction is either the raw gradient or an L-BFGS direction
//! built from recent gradient differences. Only steps that satisfy the
//! sufficient-increase condition are accepted, so the objective trace is
//! non-decreasing whichever direction is used.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Something to maximize. A value of `-inf` marks an inadmissible point;
/// the line search backs off from it.
pub trait Objective {
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

impl<F> Objective for F
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn value_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Direction {
    Gradient,
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    pub max_iterations: usize,
    /// Length of the first trial step (and the initial step for plain gradient ascent).
    pub step_size: f64,
    /// Step shrink factor on a rejected trial, in `(0, 1)`.
    pub backtrack: f64,
    /// Stop once `(f_new - f_old) / max(|f_old|, 1)` drops below this.
    pub convergence_tol: f64,
    pub direction: Direction,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_size: 1.0,
            backtrack: 0.5,
            convergence_tol: 1e-9,
            direction: Direction::Lbfgs { memory: 10 },
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iterations > 0
            && self.step_size > 0.0
            && self.backtrack > 0.0
            && self.backtrack < 1.0
            && self.convergence_tol > 0.0
            && self.convergence_tol < 1.0
            && !matches!(self.direction, Direction::Lbfgs { memory: 0 });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid ascent configuration: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No trial step along the gradient increased the objective.
    NoAscentStep,
}

#[derive(Debug, Clone)]
pub struct AscentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub stop: StopReason,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct History {
    memory: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl History {
    fn new(memory: usize) -> Self {
        Self {
            memory,
            pairs: VecDeque::with_capacity(memory),
        }
    }

    /// `s` is the step, `y` the decrease in gradient (the gradient change of `-f`).
    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if self.pairs.len() == self.memory {
                self.pairs.pop_front();
            }
            self.pairs.push_back((s, y, 1.0 / sy));
        }
    }

    /// Two-loop recursion applied to the ascent gradient.
    fn direction(&self, g: &[f64]) -> Option<Vec<f64>> {
        let (s_last, y_last, _) = self.pairs.back()?;
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let gamma = dot(s_last, y_last) / dot(y_last, y_last);
        for qi in &mut q {
            *qi *= gamma;
        }
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        Some(q)
    }

    fn clear(&mut self) {
        self.pairs.clear();
    }
}

/// Maximizes `objective` from `x0`.
pub fn maximize<O: Objective + ?Sized>(
    objective: &O,
    x0: Vec<f64>,
    config: &AscentConfig,
) -> Result<AscentOutcome> {
    config.validate()?;
    let (mut f, mut g) = objective.value_and_grad(&x0)?;
    if !f.is_finite() {
        return Err(Error::numeric("objective is not finite at the starting point", &x0));
    }
    let mut x = x0;
    let mut trace = vec![f];
    let mut history = match config.direction {
        Direction::Lbfgs { memory } => Some(History::new(memory)),
        Direction::Gradient => None,
    };
    let mut gradient_step = config.step_size;
    let mut stop = StopReason::MaxIterations;

    for _ in 0..config.max_iterations {
        let gnorm = norm(&g);
        if gnorm == 0.0 {
            stop = StopReason::Converged;
            break;
        }
        let mut accepted = None;
        // Try the quasi-Newton direction first, fall back to the gradient.
        for attempt in 0..2 {
            let (dir, mut alpha) = match history.as_ref().and_then(|h| h.direction(&g)) {
                Some(d) if attempt == 0 && dot(&d, &g) > 0.0 => (d, 1.0),
                _ => match config.direction {
                    Direction::Gradient => (g.clone(), gradient_step),
                    Direction::Lbfgs { .. } => (g.clone(), config.step_size / gnorm),
                },
            };
            let slope = dot(&dir, &g);
            for _ in 0..MAX_BACKTRACKS {
                let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
                if trial.iter().all(|v| v.is_finite()) {
                    if let Ok((ft, gt)) = objective.value_and_grad(&trial) {
                        if ft.is_finite() && ft >= f + ARMIJO * alpha * slope && ft > f {
                            accepted = Some((trial, ft, gt, alpha));
                            break;
                        }
                    }
                }
                alpha *= config.backtrack;
            }
            if accepted.is_some() {
                break;
            }
            match history.as_mut() {
                Some(h) if attempt == 0 => h.clear(),
                _ => break,
            }
        }
        let Some((x_new, f_new, g_new, alpha)) = accepted else {
            stop = StopReason::NoAscentStep;
            break;
        };
        if let Some(h) = history.as_mut() {
            let s = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
            h.push(s, y);
        } else {
            gradient_step = alpha / config.backtrack;
        }
        let improvement = (f_new - f) / f.abs().max(1.0);
        x = x_new;
        f = f_new;
        g = g_new;
        trace.push(f);
        if improvement < config.convergence_tol {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(AscentOutcome {
        x,
        value: f,
        grad: g,
        trace,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Concave quadratic with condition number 1e4.
    fn quad(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let scales = [1.0, 100.0, 1e4];
        let centers = [1.0, -2.0, 0.5];
        let mut f = 0.0;
        let mut g = vec![0.0; 3];
        for j in 0..3 {
            let d = x[j] - centers[j];
            f -= 0.5 * scales[j] * d * d;
            g[j] = -scales[j] * d;
        }
        Ok((f, g))
    }

    #[test]
    fn lbfgs_finds_ill_conditioned_optimum() {
        let cfg = AscentConfig {
            convergence_tol: 1e-14,
            ..AscentConfig::default()
        };
        let out = maximize(&quad, vec![0.0; 3], &cfg).unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-5);
        assert!((out.x[1] + 2.0).abs() < 1e-5);
        assert!((out.x[2] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn traces_never_decrease() {
        for direction in [Direction::Gradient, Direction::Lbfgs { memory: 3 }] {
            let cfg = AscentConfig {
                direction,
                max_iterations: 200,
                ..AscentConfig::default()
            };
            let out = maximize(&quad, vec![5.0, 5.0, 5.0], &cfg).unwrap();
            assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = AscentConfig {
            backtrack: 1.0,
            ..AscentConfig::default()
        };
        assert!(maximize(&quad, vec![0.0; 3], &cfg).is_err());
    }

    #[test]
    fn infinite_start_is_an_error() {
        let f = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NEG_INFINITY, vec![0.0])) };
        assert!(maximize(&f, vec![0.0], &AscentConfig::default()).is_err());
    }

    #[test]
    fn backs_off_inadmissible_region() {
        // Maximum of -(x-3)^2 but everything above x = 2 is inadmissible.
        let f = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 2.0 {
                Ok((f64::NEG_INFINITY, vec![0.0]))
            } else {
                Ok((-(x[0] - 3.0).powi(2), vec![-2.0 * (x[0] - 3.0)]))
            }
        };
        let out = maximize(&f, vec![0.0], &AscentConfig::default()).unwrap();
        assert!(out.x[0] <= 2.0 && out.x[0] > 1.9);
    }
}
