//! Base classifiers `p(y | x)`: logistic regression and a one-hidden-layer
//! tanh network with a sigmoid output.
//!
//! Weight layouts:
//! - logistic: `D` weights followed by the bias;
//! - mlp: the `H x D` input matrix (row per hidden unit), `H` hidden biases,
//!   `H` output weights, then the output bias.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{log_sigmoid, sigmoid, HALF_LN_2PI};

pub const DEFAULT_HIDDEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    Logistic,
    Mlp { hidden: usize },
}

impl ClassifierKind {
    pub fn name(&self) -> &'static str {
        match self {
            ClassifierKind::Logistic => "logistic",
            ClassifierKind::Mlp { .. } => "mlp",
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            ClassifierKind::Logistic => 0,
            ClassifierKind::Mlp { hidden } => *hidden,
        }
    }

    pub fn num_weights(&self, dim: usize) -> usize {
        match self {
            ClassifierKind::Logistic => dim + 1,
            ClassifierKind::Mlp { hidden } => dim * hidden + 2 * hidden + 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    kind: ClassifierKind,
    dim: usize,
    weights: Vec<f64>,
    prior_variance: f64,
}

impl ClassifierParams {
    /// Logistic regression with every weight at zero.
    pub fn logistic(dim: usize, prior_variance: f64) -> Result<Self> {
        let kind = ClassifierKind::Logistic;
        Self::from_weights(kind, dim, vec![0.0; kind.num_weights(dim)], prior_variance)
    }

    /// Network with weights drawn from `U(-0.1, 0.1)` using `seed`.
    pub fn mlp(dim: usize, hidden: usize, prior_variance: f64, seed: u64) -> Result<Self> {
        let kind = ClassifierKind::Mlp { hidden };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..kind.num_weights(dim))
            .map(|_| rng.random_range(-0.1..0.1))
            .collect();
        Self::from_weights(kind, dim, weights, prior_variance)
    }

    pub fn from_weights(
        kind: ClassifierKind,
        dim: usize,
        weights: Vec<f64>,
        prior_variance: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParam("classifier dimension must be >= 1".into()));
        }
        if let ClassifierKind::Mlp { hidden: 0 } = kind {
            return Err(Error::InvalidParam("mlp hidden width must be >= 1".into()));
        }
        let expected = kind.num_weights(dim);
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParam("classifier weights must be finite".into()));
        }
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "prior variance must be positive, got {prior_variance}"
            )));
        }
        Ok(Self {
            kind,
            dim,
            weights,
            prior_variance,
        })
    }

    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    pub fn with_prior_variance(mut self, prior_variance: f64) -> Result<Self> {
        if !(prior_variance > 0.0 && prior_variance.is_finite()) {
            return Err(Error::InvalidParam(format!(
                "prior variance must be positive, got {prior_variance}"
            )));
        }
        self.prior_variance = prior_variance;
        Ok(self)
    }

    pub fn num_weights(&self) -> usize {
        self.weights.len()
    }

    /// Replaces the weights in place without validation; used by optimizers
    /// that have already checked finiteness of the packed vector.
    pub(crate) fn set_weights(&mut self, w: &[f64]) {
        self.weights.copy_from_slice(w);
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-sigmoid output. `x` must have length `D`.
    pub fn margin(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let d = self.dim;
        match self.kind {
            ClassifierKind::Logistic => {
                dot(&self.weights[..d], x) + self.weights[d]
            }
            ClassifierKind::Mlp { hidden } => {
                let (w1, rest) = self.weights.split_at(d * hidden);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut m = b2[0];
                for h in 0..hidden {
                    let a = dot(&w1[h * d..(h + 1) * d], x) + b1[h];
                    m += w2[h] * a.tanh();
                }
                m
            }
        }
    }

    /// Returns the margin and writes `d margin / d weights` into `grad`.
    pub fn margin_and_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.weights.len());
        let d = self.dim;
        match self.kind {
            ClassifierKind::Logistic => {
                grad[..d].copy_from_slice(x);
                grad[d] = 1.0;
                self.margin(x)
            }
            ClassifierKind::Mlp { hidden } => {
                let (w1, rest) = self.weights.split_at(d * hidden);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let (g_w1, g_rest) = grad.split_at_mut(d * hidden);
                let (g_b1, g_rest) = g_rest.split_at_mut(hidden);
                let (g_w2, g_b2) = g_rest.split_at_mut(hidden);
                let mut m = b2[0];
                for h in 0..hidden {
                    let act = (dot(&w1[h * d..(h + 1) * d], x) + b1[h]).tanh();
                    m += w2[h] * act;
                    g_w2[h] = act;
                    let back = w2[h] * (1.0 - act * act);
                    g_b1[h] = back;
                    for (g, xv) in g_w1[h * d..(h + 1) * d].iter_mut().zip(x) {
                        *g = back * xv;
                    }
                }
                g_b2[0] = 1.0;
                m
            }
        }
    }

    /// `p(y = 1 | x)`.
    pub fn predict_prob(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(sigmoid(self.margin(x)))
    }

    /// `log p(y | x)`.
    pub fn log_prob(&self, x: &[f64], y: u8) -> Result<f64> {
        self.check_dim(x)?;
        Ok(log_prob_from_margin(self.margin(x), y))
    }

    /// `log p(y | x)` and its gradient with respect to the weights.
    pub fn log_prob_and_grad(&self, x: &[f64], y: u8) -> Result<(f64, Vec<f64>)> {
        self.check_dim(x)?;
        let mut grad = vec![0.0; self.weights.len()];
        let m = self.margin_and_grad(x, &mut grad);
        let lp = log_prob_from_margin(m, y);
        let score = f64::from(y) - sigmoid(m);
        for g in &mut grad {
            *g *= score;
        }
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite classifier log-probability", &self.weights));
        }
        Ok((lp, grad))
    }

    /// Adds `E_q[grad log p(y | x)] * weight` to `out`, where `q = q(y = 1)`.
    /// `scratch` must have the weight-vector length. Returns the margin.
    pub fn accumulate_expected_grad(
        &self,
        x: &[f64],
        q: f64,
        weight: f64,
        scratch: &mut [f64],
        out: &mut [f64],
    ) -> f64 {
        let m = self.margin_and_grad(x, scratch);
        let score = weight * (q - sigmoid(m));
        for (o, g) in out.iter_mut().zip(scratch.iter()) {
            *o += score * g;
        }
        m
    }

    /// Zero-mean Gaussian log prior on every weight and its gradient.
    pub fn log_prior(&self) -> (f64, Vec<f64>) {
        let var = self.prior_variance;
        let n = self.weights.len() as f64;
        let sq: f64 = self.weights.iter().map(|w| w * w).sum();
        let value = -0.5 * sq / var - n * (HALF_LN_2PI + 0.5 * var.ln());
        let grad = self.weights.iter().map(|w| -w / var).collect();
        (value, grad)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "classifier kind={} D={} H={}",
            self.kind.name(),
            self.dim,
            self.kind.hidden()
        );
        for w in &self.weights {
            let _ = writeln!(out, "{w}");
        }
        out
    }

    /// Parses a classifier block from the front of `lines`, consuming it.
    /// The prior variance is not part of the block and is set to `prior_variance`.
    pub(crate) fn parse_block<'a, I>(
        header: &str,
        lines: &mut I,
        prior_variance: f64,
    ) -> std::result::Result<Self, String>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let fields = crate::model_io::key_values(header, "classifier")?;
        let kind = crate::model_io::field(&fields, "kind")?;
        let dim: usize = crate::model_io::parse_field(&fields, "D")?;
        let hidden: usize = crate::model_io::parse_field(&fields, "H")?;
        let kind = match kind {
            "logistic" => ClassifierKind::Logistic,
            "mlp" => ClassifierKind::Mlp { hidden },
            other => return Err(format!("unknown classifier kind `{other}`")),
        };
        let n = kind.num_weights(dim);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| format!("classifier block needs {n} weights"))?;
            weights.push(
                line.parse::<f64>()
                    .map_err(|_| format!("line {ln}: malformed weight `{line}`"))?,
            );
        }
        Self::from_weights(kind, dim, weights, prior_variance).map_err(|e| e.to_string())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn log_prob_from_margin(m: f64, y: u8) -> f64 {
    if y == 1 {
        log_sigmoid(m)
    } else {
        log_sigmoid(-m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_params(kind: ClassifierKind, dim: usize, rng: &mut impl Rng) -> ClassifierParams {
        let w = (0..kind.num_weights(dim))
            .map(|_| rng.random_range(-1.5..1.5))
            .collect();
        ClassifierParams::from_weights(kind, dim, w, 2.0).unwrap()
    }

    #[test]
    fn zero_logistic_is_half() {
        let c = ClassifierParams::logistic(3, 1.0).unwrap();
        assert_eq!(c.predict_prob(&[4.0, -1.0, 9.0]).unwrap(), 0.5);
    }

    #[test]
    fn orthogonal_feature_has_no_effect() {
        let c = ClassifierParams::from_weights(ClassifierKind::Logistic, 2, vec![1.0, 0.0, 0.0], 1.0)
            .unwrap();
        assert_eq!(c.predict_prob(&[0.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn zero_network_is_half() {
        let kind = ClassifierKind::Mlp { hidden: 4 };
        let c = ClassifierParams::from_weights(kind, 3, vec![0.0; kind.num_weights(3)], 1.0).unwrap();
        assert_eq!(c.predict_prob(&[1.0, 2.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = ClassifierParams::logistic(3, 1.0).unwrap();
        assert!(matches!(
            c.predict_prob(&[1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 1 })
        ));
    }

    #[test]
    fn zero_logistic_gradient_closed_form() {
        let c = ClassifierParams::logistic(2, 1.0).unwrap();
        let x = [2.0, -3.0];
        let (lp, g) = c.log_prob_and_grad(&x, 1).unwrap();
        assert!((lp - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(g, vec![1.0, -1.5, 0.5]);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [ClassifierKind::Logistic, ClassifierKind::Mlp { hidden: DEFAULT_HIDDEN }] {
            for _ in 0..100 {
                let dim = rng.random_range(1..5);
                let c = random_params(kind, dim, &mut rng);
                let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y = rng.random_range(0..2u8);
                let (_, g) = c.log_prob_and_grad(&x, y).unwrap();
                let h = 1e-5;
                for j in 0..g.len() {
                    let mut plus = c.weights.clone();
                    plus[j] += h;
                    let mut minus = c.weights.clone();
                    minus[j] -= h;
                    let fp = ClassifierParams::from_weights(kind, dim, plus, 2.0).unwrap();
                    let fm = ClassifierParams::from_weights(kind, dim, minus, 2.0).unwrap();
                    let fd = (fp.log_prob(&x, y).unwrap() - fm.log_prob(&x, y).unwrap()) / (2.0 * h);
                    let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1e-3);
                    assert!(rel <= 1e-5, "{kind:?} coord {j}: fd {fd} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn probabilities_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for kind in [ClassifierKind::Logistic, ClassifierKind::Mlp { hidden: 3 }] {
            for _ in 0..200 {
                let c = random_params(kind, 3, &mut rng);
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
                let s = c.log_prob(&x, 1).unwrap().exp() + c.log_prob(&x, 0).unwrap().exp();
                assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn logistic_depends_only_on_margin() {
        let c = ClassifierParams::from_weights(ClassifierKind::Logistic, 2, vec![0.5, -2.0, 0.25], 1.0)
            .unwrap();
        // Two inputs with the same w.x give the same probability.
        let a = c.predict_prob(&[4.0, 1.0]).unwrap();
        let b = c.predict_prob(&[0.0, 0.0]).unwrap();
        assert_eq!(a, b);
        // Shifting x by a constant changes it unless the bias absorbs w.shift.
        let shifted = c.predict_prob(&[1.0, 1.0]).unwrap();
        assert_ne!(shifted, b);
        let retrained =
            ClassifierParams::from_weights(ClassifierKind::Logistic, 2, vec![0.5, -2.0, 0.25 + 1.5], 1.0)
                .unwrap();
        assert!((retrained.predict_prob(&[1.0, 1.0]).unwrap() - b).abs() < 1e-15);
    }

    #[test]
    fn prior_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random_params(ClassifierKind::Mlp { hidden: 2 }, 2, &mut rng).with_prior_variance(0.7).unwrap();
        let (_, g) = c.log_prior();
        for j in 0..g.len() {
            let h = 1e-5;
            let mut p = c.clone();
            p.weights[j] += h;
            let mut m = c.clone();
            m.weights[j] -= h;
            let fd = (p.log_prior().0 - m.log_prior().0) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn mlp_init_is_seeded_and_bounded() {
        let a = ClassifierParams::mlp(3, 8, 1.0, 42).unwrap();
        let b = ClassifierParams::mlp(3, 8, 1.0, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.weights().iter().all(|w| w.abs() < 0.1));
        assert_eq!(a.num_weights(), 3 * 8 + 8 + 8 + 1);
    }
}
