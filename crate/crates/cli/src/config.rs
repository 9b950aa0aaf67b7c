//! The TOML run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use imprecise::eval::{CvConfig, Method, TrainSpec};
use imprecise::learning::{Direction, FitConfig, InitOptions};
use imprecise::observation::BetaPrior;
use imprecise::sweep::SweepConfig;
use imprecise::synth::{GenConfig, NoiseConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GenConfig,
    pub noise: NoiseConfig,
    pub fit: FitSection,
    pub model: ModelSection,
    pub methods: Vec<Method>,
    pub sweep: SweepSection,
    pub cv: CvConfig,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            generator: GenConfig::default(),
            noise: NoiseConfig::default(),
            fit: FitSection::default(),
            model: ModelSection::default(),
            methods: vec![Method::Lrm, Method::Lrn],
            sweep: SweepSection::default(),
            cv: CvConfig::default(),
            paths: PathsSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DirectionName {
    Lbfgs,
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub max_iterations: usize,
    pub step_size: f64,
    pub backtrack: f64,
    pub convergence_tol: f64,
    pub c_max: usize,
    pub direction: DirectionName,
    pub lbfgs_memory: usize,
    pub seed: u64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            max_iterations: f.max_iterations,
            step_size: f.step_size,
            backtrack: f.backtrack,
            convergence_tol: f.convergence_tol,
            c_max: f.c_max,
            direction: DirectionName::Lbfgs,
            lbfgs_memory: 10,
            seed: f.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Variance of the Gaussian prior on classifier weights.
    pub prior_variance: f64,
    pub hidden: usize,
    /// Noise mixture components.
    pub components: usize,
    pub pi0: f64,
    pub pi1: f64,
    /// Beta prior on the two count probabilities, `[alpha0, beta0, alpha1, beta1]`.
    pub beta_prior: [f64; 4],
    pub bag_size: usize,
    pub threshold: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let init = InitOptions::default();
        Self {
            prior_variance: init.prior_variance,
            hidden: init.hidden,
            components: init.components,
            pi0: init.pi0,
            pi1: init.pi1,
            beta_prior: [1.0; 4],
            bag_size: 3,
            threshold: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub sigmas: Vec<f64>,
    pub pis: Vec<f64>,
    pub coupled: bool,
    pub pi_neg: f64,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        let s = SweepConfig::default();
        Self {
            sigmas: s.sigmas,
            pis: s.pis,
            coupled: s.coupled,
            pi_neg: s.pi_neg,
            seeds: s.seeds,
        }
    }
}

/// Optional default locations; relative paths resolve against the
/// directory holding the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.data, &mut cfg.paths.model, &mut cfg.paths.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Replaces every seed with `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.generator.seed = seed;
        self.noise.seed = seed;
        self.fit.seed = seed;
        self.cv.seed = seed;
        self.sweep.seeds = vec![seed];
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn fit_config(&self) -> FitConfig {
        let f = &self.fit;
        FitConfig {
            max_iterations: f.max_iterations,
            step_size: f.step_size,
            backtrack: f.backtrack,
            convergence_tol: f.convergence_tol,
            seed: f.seed,
            c_max: f.c_max,
            direction: match f.direction {
                DirectionName::Lbfgs => Direction::Lbfgs { memory: f.lbfgs_memory },
                DirectionName::Gradient => Direction::Gradient,
            },
        }
    }

    pub fn train_spec(&self) -> TrainSpec {
        let m = &self.model;
        let [alpha0, beta0, alpha1, beta1] = m.beta_prior;
        TrainSpec {
            prior_variance: m.prior_variance,
            bag_size: m.bag_size,
            hidden: m.hidden,
            init: InitOptions {
                prior_variance: m.prior_variance,
                components: m.components,
                c_max: self.fit.c_max,
                beta_prior: BetaPrior {
                    alpha0,
                    beta0,
                    alpha1,
                    beta1,
                },
                pi0: m.pi0,
                pi1: m.pi1,
                hidden: m.hidden,
                seed: self.fit.seed,
            },
            fit: self.fit_config(),
        }
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            generator: self.generator.clone(),
            sigmas: self.sweep.sigmas.clone(),
            pis: self.sweep.pis.clone(),
            coupled: self.sweep.coupled,
            pi_neg: self.sweep.pi_neg,
            seeds: self.sweep.seeds.clone(),
            methods: self.methods.clone(),
            cv: self.cv.clone(),
            train: self.train_spec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[fit]\nmax_iter = 3").is_err());
        let ok: RunConfig = toml::from_str("methods = [\"mi\"]\n[fit]\nmax_iterations = 3").unwrap();
        assert_eq!(ok.fit.max_iterations, 3);
        assert_eq!(ok.methods, vec![Method::Mi]);
    }
}
