//! Synthetic labeled sessions and the timestamp observation process.
//!
//! Labels follow a two-state Markov chain so positives arrive in bursts;
//! features are class-conditional Gaussians with identity covariance whose
//! means differ by `class_separation` along the all-ones direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::naive_align;
use crate::data::{Dataset, Session};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    /// Every gap equals `instance_spacing`.
    Fixed,
    /// Exponential gaps with mean `instance_spacing`.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub sessions: usize,
    /// Inclusive range of instances per session.
    pub min_instances: usize,
    pub max_instances: usize,
    pub instance_spacing: f64,
    pub spacing: Spacing,
    pub positive_rate: f64,
    pub feature_dim: usize,
    pub class_separation: f64,
    /// Mean length of a run of consecutive positives.
    pub burst_length: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    /// Roughly the size and imbalance of a small wearable-sensor corpus:
    /// 30 sessions of about 260 instances, 4% positive.
    fn default() -> Self {
        Self {
            sessions: 30,
            min_instances: 230,
            max_instances: 290,
            instance_spacing: 1.0,
            spacing: Spacing::Fixed,
            positive_rate: 0.04,
            feature_dim: 4,
            class_separation: 2.0,
            burst_length: 2.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Well separated classes for noise-free recovery checks.
    pub fn separable() -> Self {
        Self {
            class_separation: 6.0,
            ..Self::default()
        }
    }

    /// Positives in long runs. Inside a run of unit-spaced positives, Gaussian
    /// jitter with sigma = 2 leaves about 65% of them nearest to some event,
    /// the retention rate seen on annotated smoking sessions. Short runs lose
    /// more positives to their edges.
    pub fn long_bursts() -> Self {
        Self {
            burst_length: 30.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("generator: {m}")));
        if self.sessions == 0 {
            return bad("sessions must be >= 1");
        }
        if self.min_instances == 0 || self.min_instances > self.max_instances {
            return bad("need 1 <= min_instances <= max_instances");
        }
        if !(self.instance_spacing > 0.0 && self.instance_spacing.is_finite()) {
            return bad("instance_spacing must be positive");
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return bad("positive_rate must lie in (0, 1)");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1");
        }
        if !(self.class_separation >= 0.0 && self.class_separation.is_finite()) {
            return bad("class_separation must be >= 0");
        }
        if !(self.burst_length >= 1.0 && self.burst_length.is_finite()) {
            return bad("burst_length must be >= 1");
        }
        if self.enter_probability() > 1.0 {
            return bad("positive_rate too high for this burst_length");
        }
        Ok(())
    }

    /// `P(0 -> 1)` giving the stationary rate `positive_rate`.
    fn enter_probability(&self) -> f64 {
        let r = self.positive_rate;
        r / (1.0 - r) / self.burst_length
    }
}

fn session_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gen_session(cfg: &GenConfig, index: usize) -> Result<Session> {
    let mut rng = session_rng(cfg.seed, index as u64);
    let len = rng.random_range(cfg.min_instances..=cfg.max_instances);
    let enter = cfg.enter_probability();
    let leave = 1.0 / cfg.burst_length;

    let mut labels = Vec::with_capacity(len);
    let mut state = rng.random_bool(cfg.positive_rate);
    for _ in 0..len {
        labels.push(u8::from(state));
        state = if state {
            !rng.random_bool(leave)
        } else {
            rng.random_bool(enter)
        };
    }

    let gap = Exp::new(1.0 / cfg.instance_spacing).expect("positive rate");
    let mut times = Vec::with_capacity(len);
    let mut now = 0.0;
    for i in 0..len {
        if i > 0 {
            now += match cfg.spacing {
                Spacing::Fixed => cfg.instance_spacing,
                // Keep strictly increasing even for a zero draw.
                Spacing::Exponential => gap.sample(&mut rng).max(1e-9),
            };
        }
        times.push(now);
    }

    let d = cfg.feature_dim;
    let offset = 0.5 * cfg.class_separation / (d as f64).sqrt();
    let mut features = Vec::with_capacity(len * d);
    for &y in &labels {
        let mean = if y == 1 { offset } else { -offset };
        for _ in 0..d {
            let e: f64 = StandardNormal.sample(&mut rng);
            features.push(mean + e);
        }
    }
    let events = times
        .iter()
        .zip(&labels)
        .filter(|(_, &y)| y == 1)
        .map(|(t, _)| *t)
        .collect();
    Session::new(format!("synth{index:04}"), d, features, times, events, Some(labels))
}

/// Labeled sessions whose events sit exactly on the positive instances.
pub fn gen_sessions(cfg: &GenConfig) -> Result<Dataset> {
    cfg.validate()?;
    let sessions = (0..cfg.sessions)
        .into_par_iter()
        .map(|i| gen_session(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sessions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of emitted times around their instance.
    pub sigma: f64,
    /// Probability that a positive emits an event.
    pub pi_pos: f64,
    /// Probability that a negative emits a spurious event.
    pub pi_neg: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            pi_pos: 1.0,
            pi_neg: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// Near-exact timestamps, every positive reported, no false alarms.
    pub fn noiseless(spacing: f64) -> Self {
        Self {
            sigma: 0.01 * spacing,
            ..Self::default()
        }
    }

    /// The single-parameter form where a negative emits with probability
    /// `1 - pi`.
    pub fn coupled(sigma: f64, pi: f64, seed: u64) -> Self {
        Self {
            sigma,
            pi_pos: pi,
            pi_neg: 1.0 - pi,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParam("noise sigma must be positive".into()));
        }
        for p in [self.pi_pos, self.pi_neg] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam(format!("emission probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Replaces the events of a labeled session by noisy emissions. `stream`
/// selects an independent random stream so sessions can be processed in
/// any order.
pub fn inject_noise(session: &Session, cfg: &NoiseConfig, stream: u64) -> Result<Session> {
    cfg.validate()?;
    let labels = session.require_labels()?;
    let mut rng = session_rng(cfg.seed, stream);
    let jitter = Normal::new(0.0, cfg.sigma).expect("valid sigma");
    let mut events = Vec::new();
    for (&t, &y) in session.instance_times().iter().zip(labels) {
        let p = if y == 1 { cfg.pi_pos } else { cfg.pi_neg };
        // Both draws are made unconditionally so runs that differ only in
        // sigma or pi share their random numbers.
        let u: f64 = rng.random();
        let emits = u < p;
        let dz = jitter.sample(&mut rng);
        if emits {
            events.push(t + dz);
        }
    }
    // Sorted regardless of emitter order; Session::with_events sorts.
    session.with_events(events)
}

pub fn inject_noise_dataset(data: &Dataset, cfg: &NoiseConfig) -> Result<Dataset> {
    cfg.validate()?;
    let sessions = data
        .sessions()
        .par_iter()
        .enumerate()
        .map(|(i, s)| inject_noise(s, cfg, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(sessions)
}

/// Fraction of true positives that also carry a positive naive label.
pub fn naive_recall(data: &Dataset) -> Result<f64> {
    let mut kept = 0usize;
    let mut total = 0usize;
    for s in data.sessions() {
        let truth = s.require_labels()?;
        let naive = naive_align(s.instance_times(), s.event_times());
        for (&y, &n) in truth.iter().zip(&naive) {
            if y == 1 {
                total += 1;
                kept += usize::from(n == 1);
            }
        }
    }
    Ok(if total == 0 { 0.0 } else { kept as f64 / total as f64 })
}
