//! Random small problems for oracle comparisons and gradient checks.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::classifier::{ClassifierKind, ClassifierParams};
use crate::data::{Dataset, Session};
use crate::learning::ModelParams;
use crate::observation::{CountParams, NoiseParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemShape {
    pub instances: usize,
    pub events: usize,
    pub dim: usize,
}

/// A labeled session with unit-ish spacing and events near random instances.
pub fn random_session<R: Rng>(rng: &mut R, id: &str, shape: ProblemShape) -> Session {
    let ProblemShape {
        instances,
        events,
        dim,
    } = shape;
    let mut t = Vec::with_capacity(instances);
    let mut now = 0.0;
    for _ in 0..instances {
        now += rng.random_range(0.5..1.5);
        t.push(now);
    }
    let features: Vec<f64> = (0..instances * dim).map(|_| StandardNormal.sample(rng)).collect();
    let z: Vec<f64> = (0..events)
        .map(|_| {
            let anchor = t[rng.random_range(0..instances)];
            let jitter: f64 = StandardNormal.sample(rng);
            anchor + 0.7 * jitter
        })
        .collect();
    let labels = (0..instances).map(|_| u8::from(rng.random_bool(0.3))).collect();
    Session::new(id, dim, features, t, z, Some(labels)).expect("generated session is valid")
}

/// Random parameters with moderate magnitudes so every term is well inside
/// the floating-point range.
pub fn random_params<R: Rng>(
    rng: &mut R,
    dim: usize,
    kind: ClassifierKind,
    c_max: usize,
    components: usize,
) -> ModelParams {
    let n = kind.num_weights(dim);
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
    let classifier = ClassifierParams::from_weights(kind, dim, weights, rng.random_range(0.5..4.0))
        .expect("valid classifier");
    let count = CountParams::binomial(rng.random_range(0.02..0.4), rng.random_range(0.5..0.98), c_max)
        .expect("valid count model");
    let g: Vec<f64> = (0..components).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = g.iter().sum();
    let gamma: Vec<f64> = g.iter().map(|v| v / total).collect();
    let mu: Vec<f64> = (0..components).map(|_| rng.random_range(-0.6..0.6)).collect();
    let sigma: Vec<f64> = (0..components).map(|_| rng.random_range(0.3..1.5)).collect();
    let noise = NoiseParams::mixture(&gamma, &mu, &sigma).expect("valid noise");
    ModelParams::new(classifier, count, noise)
}

/// A dataset of `sessions` random sessions, each feasible under `c_max`.
pub fn random_dataset<R: Rng>(
    rng: &mut R,
    sessions: usize,
    max_instances: usize,
    dim: usize,
    c_max: usize,
) -> Dataset {
    let list = (0..sessions)
        .map(|s| {
            let instances = rng.random_range(1..=max_instances);
            let events = rng.random_range(0..=(instances * c_max).min(instances + 2));
            random_session(
                rng,
                &format!("s{s}"),
                ProblemShape {
                    instances,
                    events,
                    dim,
                },
            )
        })
        .collect();
    Dataset::new(list).expect("generated dataset is valid")
}
