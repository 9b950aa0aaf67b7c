//! Penalized marginal-likelihood objective and the fit loop.
//!
//! The gradient is assembled from posterior expectations rather than by
//! differentiating through the dynamic program:
//!
//! - classifier weights: `sum_i E[y_i] grad log p(y_i | x_i)`;
//! - noise parameters: `sum_{i,l} p(w(i,l)) grad log p(z_l | t_i)`;
//! - count logits: `sum_{i,c,y} p(o_i = c, y_i = y) grad log p(c | y)`;
//!
//! plus the log-prior gradients.

pub mod optimize;

use std::ops::Range;

use rayon::prelude::*;

use crate::classifier::{ClassifierKind, ClassifierParams, DEFAULT_HIDDEN};
use crate::data::{Dataset, Session};
use crate::error::{Error, Result};
use crate::inference::PosteriorTables;
use crate::math::{CompensatedSum, CompensatedVec, NEG_INF};
use crate::observation::{self, BetaPrior, CountParams, NoiseParams};

pub use optimize::{AscentConfig, AscentOutcome, Direction, StopReason};

/// The complete parameter set: classifier, timestamp noise and count model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub classifier: ClassifierParams,
    pub count: CountParams,
    pub noise: NoiseParams,
}

/// Index ranges of each block inside the packed vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub classifier: Range<usize>,
    pub count: Range<usize>,
    pub noise: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitOptions {
    pub prior_variance: f64,
    pub components: usize,
    pub c_max: usize,
    pub beta_prior: BetaPrior,
    pub pi0: f64,
    pub pi1: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            prior_variance: 1.0,
            components: 1,
            c_max: 1,
            beta_prior: BetaPrior::default(),
            pi0: 0.01,
            pi1: 0.9,
            hidden: DEFAULT_HIDDEN,
            seed: 0,
        }
    }
}

impl ModelParams {
    pub fn new(classifier: ClassifierParams, count: CountParams, noise: NoiseParams) -> Self {
        Self {
            classifier,
            count,
            noise,
        }
    }

    /// Default starting point for a dataset: zero (or small random) classifier
    /// weights, `pi = (pi0, pi1)`, unit-weight noise components centred near
    /// zero with scale equal to the median instance spacing.
    pub fn initial(data: &Dataset, kind: ClassifierKind, opts: &InitOptions) -> Result<Self> {
        let dim = data.feature_dim();
        let classifier = match kind {
            ClassifierKind::Logistic => ClassifierParams::logistic(dim, opts.prior_variance)?,
            ClassifierKind::Mlp { hidden } => {
                ClassifierParams::mlp(dim, hidden, opts.prior_variance, opts.seed)?
            }
        };
        let count = CountParams::binomial(opts.pi0, opts.pi1, opts.c_max)?
            .with_beta_prior(opts.beta_prior)?;
        let spacing = data.median_spacing();
        let k = opts.components.max(1);
        // Identical components never separate under gradient ascent, so
        // spread the offsets over +-spacing/2 when K > 1.
        let mu: Vec<f64> = (0..k)
            .map(|j| {
                if k == 1 {
                    0.0
                } else {
                    spacing * (j as f64 / (k - 1) as f64 - 0.5)
                }
            })
            .collect();
        let noise = NoiseParams::mixture(&vec![1.0 / k as f64; k], &mu, &vec![spacing; k])?;
        Ok(Self::new(classifier, count, noise))
    }

    pub fn layout(&self) -> ParamLayout {
        let nc = self.classifier.num_weights();
        ParamLayout {
            classifier: 0..nc,
            count: nc..nc + 2,
            noise: nc + 2..nc + 2 + self.noise.num_params(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().noise.end
    }

    /// Flattens all unconstrained coordinates: classifier weights, the two
    /// count logits, then the noise block.
    pub fn pack(&self) -> Vec<f64> {
        let mut v = self.classifier.weights().to_vec();
        v.extend_from_slice(&self.count.logits());
        v.extend(self.noise.unconstrained());
        v
    }

    /// A copy with coordinates taken from `packed`.
    pub fn unpack(&self, packed: &[f64]) -> Result<Self> {
        if packed.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: packed.len(),
            });
        }
        if packed.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("packed parameters must be finite", packed));
        }
        let layout = self.layout();
        let mut out = self.clone();
        out.classifier.set_weights(&packed[layout.classifier]);
        out.count
            .set_logits([packed[layout.count.start], packed[layout.count.start + 1]]);
        out.noise.set_unconstrained(&packed[layout.noise]);
        Ok(out)
    }

    pub fn log_prior(&self) -> observation::PriorTerms {
        observation::log_prior(&self.count, &self.noise, &self.classifier)
    }
}

/// Objective value and packed gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// Sum of session log marginal likelihoods plus log priors.
    pub objective: f64,
    pub grads: Vec<f64>,
    /// First infeasible session, when the objective is `-inf`.
    pub infeasible_session: Option<String>,
}

impl GradientBundle {
    pub fn is_valid(&self) -> bool {
        self.infeasible_session.is_none() && self.objective.is_finite()
    }
}

struct SessionTerms {
    log_lik: f64,
    grads: Vec<f64>,
}

fn session_terms(session: &Session, params: &ModelParams, layout: &ParamLayout) -> Result<SessionTerms> {
    let tables = PosteriorTables::compute(session, params)?;
    let marg = tables.marginals();
    let mut grads = vec![0.0; layout.noise.end];

    let classifier = &params.classifier;
    let mut scratch = vec![0.0; classifier.num_weights()];
    {
        let g_theta = &mut grads[layout.classifier.clone()];
        for (i, &q) in marg.label.iter().enumerate() {
            classifier.accumulate_expected_grad(session.feature(i), q, 1.0, &mut scratch, g_theta);
        }
    }

    let c_max = params.count.c_max();
    let count_scores: Vec<[f64; 2]> = (0..=c_max)
        .map(|c| [params.count.log_prob_grad(c, 0), params.count.log_prob_grad(c, 1)])
        .collect();
    let mut g_count = [0.0; 2];
    for per_instance in &marg.count {
        for (c, p) in per_instance.iter().enumerate() {
            g_count[0] += p[0] * count_scores[c][0];
            g_count[1] += p[1] * count_scores[c][1];
        }
    }
    grads[layout.count.start] = g_count[0];
    grads[layout.count.start + 1] = g_count[1];

    let eval = params.noise.evaluator();
    let g_noise = &mut grads[layout.noise.clone()];
    let t = session.instance_times();
    let z = session.event_times();
    for (i, &ti) in t.iter().enumerate() {
        for (l, &zl) in z.iter().enumerate() {
            let w = marg.assignment.get(i, l);
            if w > 0.0 {
                eval.accumulate_grad(zl - ti, w, g_noise);
            }
        }
    }
    Ok(SessionTerms {
        log_lik: tables.log_marginal(),
        grads,
    })
}

/// Penalized log marginal likelihood of the dataset and its gradient.
///
/// Sessions are processed in parallel; contributions are reduced in
/// session order with compensated summation.
pub fn objective_and_gradient(params: &ModelParams, data: &Dataset) -> Result<GradientBundle> {
    let layout = params.layout();
    let n = layout.noise.end;
    let c_max = params.count.c_max();
    if let Some(id) = data.infeasible_sessions(c_max).first() {
        return Ok(GradientBundle {
            objective: NEG_INF,
            grads: vec![0.0; n],
            infeasible_session: Some(id.to_string()),
        });
    }
    let parts: Vec<SessionTerms> = data
        .sessions()
        .par_iter()
        .map(|s| session_terms(s, params, &layout))
        .collect::<Result<_>>()?;

    let mut objective = CompensatedSum::new();
    let mut grads = CompensatedVec::zeros(n);
    for p in &parts {
        objective.add(p.log_lik);
        grads.add(&p.grads);
    }
    let prior = params.log_prior();
    objective.add(prior.value);
    let mut prior_grad = prior.classifier;
    prior_grad.extend_from_slice(&prior.count);
    prior_grad.extend_from_slice(&prior.noise);
    grads.add(&prior_grad);

    let grads = grads.values();
    let objective = objective.value();
    if !objective.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite objective or gradient", &params.pack()));
    }
    Ok(GradientBundle {
        objective,
        grads,
        infeasible_session: None,
    })
}

/// Configuration of [`fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub step_size: f64,
    pub backtrack: f64,
    pub convergence_tol: f64,
    /// Seeds random classifier initialization in the training harnesses.
    pub seed: u64,
    pub c_max: usize,
    pub direction: Direction,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            step_size: 1.0,
            backtrack: 0.5,
            convergence_tol: 1e-9,
            seed: 0,
            c_max: 1,
            direction: Direction::Lbfgs { memory: 10 },
        }
    }
}

impl FitConfig {
    pub fn ascent(&self) -> AscentConfig {
        AscentConfig {
            max_iterations: self.max_iterations,
            step_size: self.step_size,
            backtrack: self.backtrack,
            convergence_tol: self.convergence_tol,
            direction: self.direction,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_max == 0 {
            return Err(Error::InvalidParam("c_max must be >= 1".into()));
        }
        self.ascent().validate()
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    /// Objective at the start and after every accepted step; non-decreasing.
    pub trace: Vec<f64>,
    pub stop: StopReason,
    pub final_gradient: Vec<f64>,
}

/// Maximizes the penalized marginal likelihood starting from `init`.
pub fn fit(data: &Dataset, init: &ModelParams, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    let mut start = init.clone();
    if start.count.c_max() != config.c_max {
        start.count = start.count.with_c_max(config.c_max)?;
    }
    let first = objective_and_gradient(&start, data)?;
    if let Some(session) = first.infeasible_session {
        let s = data.sessions().iter().find(|s| s.id() == session).expect("session exists");
        return Err(Error::Infeasible {
            events: s.num_events(),
            instances: s.len(),
            session,
            c_max: config.c_max,
        });
    }
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let p = start.unpack(x)?;
        match objective_and_gradient(&p, data) {
            Ok(b) if b.is_valid() => Ok((b.objective, b.grads)),
            Ok(b) => Ok((NEG_INF, b.grads)),
            // Numeric blow-ups at trial points are rejected by the line search.
            Err(Error::Numeric { .. }) => Ok((NEG_INF, vec![0.0; x.len()])),
            Err(e) => Err(e),
        }
    };
    let out = optimize::maximize(&objective, start.pack(), &config.ascent())?;
    Ok(FitResult {
        params: start.unpack(&out.x)?,
        trace: out.trace,
        stop: out.stop,
        final_gradient: out.grad,
    })
}

/// Test-time labels from the classifier alone: `p(y=1|x) >= threshold`.
pub fn predict_labels(params: &ModelParams, session: &Session, threshold: f64) -> Result<Vec<u8>> {
    predict_with_classifier(&params.classifier, session, threshold)
}

pub fn predict_with_classifier(
    classifier: &ClassifierParams,
    session: &Session,
    threshold: f64,
) -> Result<Vec<u8>> {
    (0..session.len())
        .map(|i| Ok(u8::from(classifier.predict_prob(session.feature(i))? >= threshold)))
        .collect()
}

#[cfg(test)]
mod tests;
