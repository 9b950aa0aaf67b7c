//! Observation-count distribution `p(o | y)` and timestamp noise density
//! `p(z | t)`, both in unconstrained parameterizations.
//!
//! The count model is a binomial with `c_max` trials and success
//! probability `pi_y`; `c_max = 1` is the Bernoulli miss/false-alarm model.
//! Probabilities are stored as logits and clamped to `[PI_MIN, PI_MAX]`
//! after the transform; the clamped region has zero gradient.
//!
//! The noise density is a Gaussian mixture over the offset `z - t` with
//! softmax mixture weights, free means and log standard deviations.

use std::fmt::Write as _;

use crate::classifier::ClassifierParams;
use crate::error::{Error, Result};
use crate::math::{ln_beta, ln_choose, log_sum_exp, logit, sigmoid, HALF_LN_2PI, NEG_INF};

pub const PI_MIN: f64 = 1e-6;
pub const PI_MAX: f64 = 1.0 - 1e-6;

/// Beta prior parameters `(alpha, beta)` for `pi_0` and `pi_1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaPrior {
    pub alpha0: f64,
    pub beta0: f64,
    pub alpha1: f64,
    pub beta1: f64,
}

impl Default for BetaPrior {
    fn default() -> Self {
        Self {
            alpha0: 1.0,
            beta0: 1.0,
            alpha1: 1.0,
            beta1: 1.0,
        }
    }
}

impl BetaPrior {
    fn for_label(&self, y: usize) -> (f64, f64) {
        if y == 0 {
            (self.alpha0, self.beta0)
        } else {
            (self.alpha1, self.beta1)
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.alpha0, self.beta0, self.alpha1, self.beta1];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("beta prior parameters must be positive: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountParams {
    logits: [f64; 2],
    c_max: usize,
    beta_prior: BetaPrior,
}

impl CountParams {
    /// Bernoulli count model with `p(o=1|y=0) = pi0`, `p(o=1|y=1) = pi1`.
    pub fn bernoulli(pi0: f64, pi1: f64) -> Result<Self> {
        Self::binomial(pi0, pi1, 1)
    }

    pub fn binomial(pi0: f64, pi1: f64, c_max: usize) -> Result<Self> {
        for p in [pi0, pi1] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam(format!("count probability {p} outside [0, 1]")));
            }
        }
        if c_max == 0 {
            return Err(Error::InvalidParam("c_max must be >= 1".into()));
        }
        Ok(Self {
            logits: [
                logit(pi0.clamp(PI_MIN, PI_MAX)),
                logit(pi1.clamp(PI_MIN, PI_MAX)),
            ],
            c_max,
            beta_prior: BetaPrior::default(),
        })
    }

    pub fn from_logits(logits: [f64; 2], c_max: usize) -> Result<Self> {
        if logits.iter().any(|l| l.is_nan()) || c_max == 0 {
            return Err(Error::InvalidParam("count logits must be numbers and c_max >= 1".into()));
        }
        Ok(Self {
            logits,
            c_max,
            beta_prior: BetaPrior::default(),
        })
    }

    pub fn with_beta_prior(mut self, prior: BetaPrior) -> Result<Self> {
        prior.validate()?;
        self.beta_prior = prior;
        Ok(self)
    }

    pub fn with_c_max(mut self, c_max: usize) -> Result<Self> {
        if c_max == 0 {
            return Err(Error::InvalidParam("c_max must be >= 1".into()));
        }
        self.c_max = c_max;
        Ok(self)
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn logits(&self) -> [f64; 2] {
        self.logits
    }

    pub(crate) fn set_logits(&mut self, logits: [f64; 2]) {
        self.logits = logits;
    }

    pub fn beta_prior(&self) -> BetaPrior {
        self.beta_prior
    }

    /// The clamped success probability `pi_y`.
    pub fn pi(&self, y: u8) -> f64 {
        sigmoid(self.logits[usize::from(y)]).clamp(PI_MIN, PI_MAX)
    }

    /// `d pi_y / d logit_y`, zero inside the clamped region.
    fn dpi_dlogit(&self, y: u8) -> f64 {
        let raw = sigmoid(self.logits[usize::from(y)]);
        if raw <= PI_MIN || raw >= PI_MAX {
            0.0
        } else {
            raw * (1.0 - raw)
        }
    }

    /// `log p(o = c | y)`; `-inf` for `c > c_max`.
    pub fn log_prob(&self, c: usize, y: u8) -> f64 {
        if c > self.c_max {
            return NEG_INF;
        }
        let p = self.pi(y);
        let n = self.c_max;
        let combinatorial = if n == 1 { 0.0 } else { ln_choose(n, c) };
        combinatorial + c as f64 * p.ln() + (n - c) as f64 * (1.0 - p).ln()
    }

    /// Gradient of `log p(o = c | y)` with respect to `logit_y`.
    pub fn log_prob_grad(&self, c: usize, y: u8) -> f64 {
        let p = self.pi(y);
        let n = self.c_max as f64;
        let c = c as f64;
        (c / p - (n - c) / (1.0 - p)) * self.dpi_dlogit(y)
    }

    /// Beta log prior on `pi_0, pi_1` and its gradient in logit coordinates.
    pub fn log_prior(&self) -> (f64, [f64; 2]) {
        let mut value = 0.0;
        let mut grad = [0.0; 2];
        for y in 0..2u8 {
            let (a, b) = self.beta_prior.for_label(usize::from(y));
            let p = self.pi(y);
            value += (a - 1.0) * p.ln() + (b - 1.0) * (1.0 - p).ln() - ln_beta(a, b);
            grad[usize::from(y)] = ((a - 1.0) / p - (b - 1.0) / (1.0 - p)) * self.dpi_dlogit(y);
        }
        (value, grad)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("count pi0={} pi1={}", self.pi(0), self.pi(1));
        if self.c_max != 1 {
            let _ = write!(s, " c_max={}", self.c_max);
        }
        s.push('\n');
        s
    }

    pub(crate) fn parse_line(line: &str) -> std::result::Result<Self, String> {
        let fields = crate::model_io::key_values(line, "count")?;
        let pi0: f64 = crate::model_io::parse_field(&fields, "pi0")?;
        let pi1: f64 = crate::model_io::parse_field(&fields, "pi1")?;
        let c_max = match fields.iter().find(|(k, _)| *k == "c_max") {
            Some((_, v)) => v.parse().map_err(|_| format!("bad c_max `{v}`"))?,
            None => 1,
        };
        Self::binomial(pi0, pi1, c_max).map_err(|e| e.to_string())
    }
}

/// Gaussian-mixture timestamp noise, `sum_k gamma_k N(z; t + mu_k, sigma_k^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseParams {
    gamma_logits: Vec<f64>,
    mu: Vec<f64>,
    log_sigma: Vec<f64>,
}

/// Standard deviation of the normal prior on each offset `mu_k`.
pub const MU_PRIOR_SD: f64 = 1.0;
/// Inverse-gamma shape and scale on each `sigma_k^2`.
pub const SIGMA2_PRIOR_SHAPE: f64 = 1.0;
pub const SIGMA2_PRIOR_SCALE: f64 = 1.0;

impl NoiseParams {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        Self::mixture(&[1.0], &[mu], &[sigma])
    }

    pub fn mixture(gamma: &[f64], mu: &[f64], sigma: &[f64]) -> Result<Self> {
        let k = gamma.len();
        if k == 0 || mu.len() != k || sigma.len() != k {
            return Err(Error::InvalidParam(
                "mixture needs K >= 1 components with matching gamma/mu/sigma".into(),
            ));
        }
        let total: f64 = gamma.iter().sum();
        if gamma.iter().any(|g| !(*g > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "mixture weights must be positive and sum to 1, got {gamma:?}"
            )));
        }
        if sigma.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidParam("noise offsets must be finite and scales positive".into()));
        }
        Ok(Self {
            gamma_logits: gamma.iter().map(|g| g.ln()).collect(),
            mu: mu.to_vec(),
            log_sigma: sigma.iter().map(|s| s.ln()).collect(),
        })
    }

    /// Unconstrained construction; `gamma_logits` need not be normalized.
    pub fn from_unconstrained(gamma_logits: Vec<f64>, mu: Vec<f64>, log_sigma: Vec<f64>) -> Result<Self> {
        let k = gamma_logits.len();
        if k == 0 || mu.len() != k || log_sigma.len() != k {
            return Err(Error::InvalidParam("mismatched mixture component vectors".into()));
        }
        if gamma_logits.iter().chain(&mu).chain(&log_sigma).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("noise parameters must be finite".into()));
        }
        Ok(Self {
            gamma_logits,
            mu,
            log_sigma,
        })
    }

    pub fn components(&self) -> usize {
        self.mu.len()
    }

    /// Number of unconstrained coordinates, `3K`.
    pub fn num_params(&self) -> usize {
        3 * self.components()
    }

    pub fn gamma(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.gamma_logits);
        self.gamma_logits.iter().map(|l| (l - lse).exp()).collect()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|s| s.exp()).collect()
    }

    /// Packed unconstrained coordinates: gamma logits, offsets, log scales.
    pub fn unconstrained(&self) -> Vec<f64> {
        let mut v = self.gamma_logits.clone();
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.log_sigma);
        v
    }

    pub(crate) fn set_unconstrained(&mut self, v: &[f64]) {
        let k = self.components();
        self.gamma_logits.copy_from_slice(&v[..k]);
        self.mu.copy_from_slice(&v[k..2 * k]);
        self.log_sigma.copy_from_slice(&v[2 * k..3 * k]);
    }

    fn log_gamma(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.gamma_logits);
        self.gamma_logits.iter().map(|l| l - lse).collect()
    }

    /// Precomputed per-component constants for repeated density evaluation.
    pub fn evaluator(&self) -> NoiseEvaluator {
        let log_gamma = self.log_gamma();
        let comps = (0..self.components())
            .map(|k| {
                let inv_sigma = (-self.log_sigma[k]).exp();
                Component {
                    mu: self.mu[k],
                    inv_sigma,
                    log_norm: log_gamma[k] - HALF_LN_2PI - self.log_sigma[k],
                    gamma: log_gamma[k].exp(),
                }
            })
            .collect();
        NoiseEvaluator { comps }
    }

    /// `log p(z | t)`. Depends on `z` and `t` only through `z - t`.
    pub fn log_density(&self, z: f64, t: f64) -> f64 {
        self.evaluator().log_density(z - t)
    }

    /// `log p(z | t)` and its gradient over the `3K` unconstrained coordinates.
    pub fn log_density_and_grad(&self, z: f64, t: f64) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.num_params()];
        let lp = self.evaluator().accumulate_grad(z - t, 1.0, &mut grad);
        if !lp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite noise log-density", &self.unconstrained()));
        }
        Ok((lp, grad))
    }

    /// Normal prior on each `mu_k` and inverse-gamma prior on each
    /// `sigma_k^2`, with gradients in `(gamma logit, mu, log sigma)` order.
    pub fn log_prior(&self) -> (f64, Vec<f64>) {
        let k = self.components();
        let mut grad = vec![0.0; 3 * k];
        let mut value = 0.0;
        let (a, b) = (SIGMA2_PRIOR_SHAPE, SIGMA2_PRIOR_SCALE);
        let sd = MU_PRIOR_SD;
        for j in 0..k {
            let m = self.mu[j];
            value += -HALF_LN_2PI - sd.ln() - 0.5 * (m / sd) * (m / sd);
            grad[k + j] = -m / (sd * sd);
            // log IG(s2; a, b) = a ln b - lnG(a) - (a+1) ln s2 - b / s2, with s2 = exp(2 ls).
            let ls = self.log_sigma[j];
            let inv_s2 = (-2.0 * ls).exp();
            value += a * b.ln() - crate::math::ln_gamma(a) - (a + 1.0) * 2.0 * ls - b * inv_s2;
            grad[2 * k + j] = -2.0 * (a + 1.0) + 2.0 * b * inv_s2;
        }
        (value, grad)
    }

    /// Components sorted by offset.
    pub fn to_text(&self) -> String {
        let gamma = self.gamma();
        let sigma = self.sigma();
        let mut order: Vec<usize> = (0..self.components()).collect();
        order.sort_by(|&a, &b| self.mu[a].total_cmp(&self.mu[b]));
        let mut out = format!("noise K={}\n", self.components());
        for k in order {
            let _ = writeln!(out, "gamma={} mu={} sigma={}", gamma[k], self.mu[k], sigma[k]);
        }
        out
    }

    pub(crate) fn parse_block<'a, I>(header: &str, lines: &mut I) -> std::result::Result<Self, String>
    where
        I: Iterator<Item = (usize, &'a str)>,
    {
        let fields = crate::model_io::key_values(header, "noise")?;
        let k: usize = crate::model_io::parse_field(&fields, "K")?;
        let (mut g, mut m, mut s) = (Vec::new(), Vec::new(), Vec::new());
        for _ in 0..k {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| format!("noise block needs {k} component lines"))?;
            let fields = crate::model_io::bare_key_values(line)
                .map_err(|e| format!("line {ln}: {e}"))?;
            g.push(crate::model_io::parse_field::<f64>(&fields, "gamma")?);
            m.push(crate::model_io::parse_field::<f64>(&fields, "mu")?);
            s.push(crate::model_io::parse_field::<f64>(&fields, "sigma")?);
        }
        // Serialized weights are rounded; renormalize before validating.
        let total: f64 = g.iter().sum();
        let g: Vec<f64> = g.iter().map(|v| v / total).collect();
        Self::mixture(&g, &m, &s).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy)]
struct Component {
    mu: f64,
    inv_sigma: f64,
    log_norm: f64,
    gamma: f64,
}

/// Noise density with the per-component constants hoisted out.
#[derive(Debug, Clone)]
pub struct NoiseEvaluator {
    comps: Vec<Component>,
}

impl NoiseEvaluator {
    #[inline]
    fn component_log(c: &Component, offset: f64) -> f64 {
        let u = (offset - c.mu) * c.inv_sigma;
        c.log_norm - 0.5 * u * u
    }

    /// Log density at `offset = z - t`.
    #[inline]
    pub fn log_density(&self, offset: f64) -> f64 {
        if let [c] = self.comps.as_slice() {
            return Self::component_log(c, offset);
        }
        let mut max = NEG_INF;
        for c in &self.comps {
            max = max.max(Self::component_log(c, offset));
        }
        let s: f64 = self
            .comps
            .iter()
            .map(|c| (Self::component_log(c, offset) - max).exp())
            .sum();
        max + s.ln()
    }

    /// Adds `weight * grad log p(offset)` into `out` (length `3K`); returns the log density.
    pub fn accumulate_grad(&self, offset: f64, weight: f64, out: &mut [f64]) -> f64 {
        let k = self.comps.len();
        if let [c] = self.comps.as_slice() {
            let u = (offset - c.mu) * c.inv_sigma;
            out[1] += weight * u * c.inv_sigma;
            out[2] += weight * (u * u - 1.0);
            return c.log_norm - 0.5 * u * u;
        }
        let mut logs = [0.0f64; 8];
        let mut heap;
        let logs: &mut [f64] = if k <= 8 {
            &mut logs[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        let mut max = NEG_INF;
        for (l, c) in logs.iter_mut().zip(&self.comps) {
            *l = Self::component_log(c, offset);
            max = max.max(*l);
        }
        let total = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for (j, c) in self.comps.iter().enumerate() {
            let r = (logs[j] - total).exp();
            let u = (offset - c.mu) * c.inv_sigma;
            out[j] += weight * (r - c.gamma);
            out[k + j] += weight * r * u * c.inv_sigma;
            out[2 * k + j] += weight * r * (u * u - 1.0);
        }
        total
    }
}

/// Per-observation gradients of the count and noise log terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGrads {
    /// `d log p(o=c|y) / d (logit_0, logit_1)`.
    pub count: [f64; 2],
    /// `d log p(z|t) / d (gamma logits, mu, log sigma)`.
    pub noise: Vec<f64>,
}

pub fn observation_grads(
    count: &CountParams,
    noise: &NoiseParams,
    c: usize,
    y: u8,
    z: f64,
    t: f64,
) -> Result<ObservationGrads> {
    let mut g = [0.0; 2];
    g[usize::from(y)] = count.log_prob_grad(c, y);
    let (_, noise_grad) = noise.log_density_and_grad(z, t)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite count gradient", &count.logits));
    }
    Ok(ObservationGrads {
        count: g,
        noise: noise_grad,
    })
}

/// Sum of all log-prior terms with per-block gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorTerms {
    pub value: f64,
    pub classifier: Vec<f64>,
    pub count: [f64; 2],
    pub noise: Vec<f64>,
}

pub fn log_prior(count: &CountParams, noise: &NoiseParams, classifier: &ClassifierParams) -> PriorTerms {
    let (vc, gc) = classifier.log_prior();
    let (vp, gp) = count.log_prior();
    let (vn, gn) = noise.log_prior();
    PriorTerms {
        value: vc + vp + vn,
        classifier: gc,
        count: gp,
        noise: gn,
    }
}
