use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::fixtures::{random_dataset, random_params};

fn finite_difference(params: &ModelParams, data: &Dataset, k: usize, h: f64) -> f64 {
    let x = params.pack();
    let mut plus = x.clone();
    plus[k] += h;
    let mut minus = x;
    minus[k] -= h;
    let f = |v: &[f64]| objective_and_gradient(&params.unpack(v).unwrap(), data).unwrap().objective;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

fn check_gradient(seed: u64, kind: ClassifierKind, c_max: usize, components: usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = rng.random_range(1..=3);
    let data = random_dataset(&mut rng, 3, 8, dim, c_max);
    let params = random_params(&mut rng, dim, kind, c_max, components);
    let bundle = objective_and_gradient(&params, &data).unwrap();
    for k in 0..params.num_params() {
        let fd = finite_difference(&params, &data, k, 1e-5);
        let g = bundle.grads[k];
        let err = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-2);
        assert!(err <= 1e-4, "coordinate {k}: analytic {g} vs numeric {fd}");
    }
}

#[test]
fn gradient_matches_finite_differences_logistic() {
    for seed in 0..8 {
        check_gradient(seed, ClassifierKind::Logistic, 1, 1);
    }
}

#[test]
fn gradient_matches_finite_differences_mlp_and_mixtures() {
    for seed in 0..6 {
        check_gradient(100 + seed, ClassifierKind::Mlp { hidden: 3 }, 1 + (seed as usize % 3), 2);
    }
}

#[test]
fn pack_unpack_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = random_params(&mut rng, 2, ClassifierKind::Mlp { hidden: 4 }, 2, 3);
    let back = p.unpack(&p.pack()).unwrap();
    assert_eq!(back, p);
    let layout = p.layout();
    assert_eq!(layout.classifier.len(), 4 * 2 + 4 + 4 + 1);
    assert_eq!(layout.noise.len(), 9);
    assert!(matches!(p.unpack(&[0.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn session_order_does_not_change_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = random_dataset(&mut rng, 12, 20, 2, 1);
    let params = random_params(&mut rng, 2, ClassifierKind::Logistic, 1, 1);
    let a = objective_and_gradient(&params, &data).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.reverse();
    order.swap(2, 7);
    let shuffled = data.subset(&order).unwrap();
    let b = objective_and_gradient(&params, &shuffled).unwrap();
    assert!((a.objective - b.objective).abs() <= 1e-9 * a.objective.abs());
    for (x, y) in a.grads.iter().zip(&b.grads) {
        assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }
}

#[test]
fn infeasible_session_is_reported() {
    let s = Session::new("tight", 1, vec![0.0], vec![0.0], vec![0.0, 0.1], None).unwrap();
    let data = Dataset::new(vec![s]).unwrap();
    let init = ModelParams::initial(&data, ClassifierKind::Logistic, &InitOptions::default()).unwrap();
    let b = objective_and_gradient(&init, &data).unwrap();
    assert_eq!(b.objective, NEG_INF);
    assert_eq!(b.infeasible_session.as_deref(), Some("tight"));
    let err = fit(&data, &init, &FitConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Infeasible { events: 2, instances: 1, .. }), "{err}");
    let ok = FitConfig {
        c_max: 2,
        max_iterations: 5,
        ..FitConfig::default()
    };
    assert!(fit(&data, &init, &ok).is_ok());
}

#[test]
fn fit_trace_is_monotone_and_improves() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = random_dataset(&mut rng, 6, 25, 2, 1);
    let init = ModelParams::initial(&data, ClassifierKind::Logistic, &InitOptions::default()).unwrap();
    let out = fit(
        &data,
        &init,
        &FitConfig {
            max_iterations: 40,
            ..FitConfig::default()
        },
    )
    .unwrap();
    assert!(out.trace.len() >= 2);
    assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
    assert!(out.trace.last().unwrap() > out.trace.first().unwrap());
}

#[test]
fn initial_parameters_follow_the_defaults() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let data = random_dataset(&mut rng, 4, 10, 3, 1);
    let p = ModelParams::initial(&data, ClassifierKind::Logistic, &InitOptions::default()).unwrap();
    assert!(p.classifier.weights().iter().all(|&w| w == 0.0));
    assert!((p.count.pi(0) - 0.01).abs() < 1e-12);
    assert!((p.count.pi(1) - 0.9).abs() < 1e-12);
    assert_eq!(p.noise.mu(), &[0.0]);
    assert!((p.noise.sigma()[0] - data.median_spacing()).abs() < 1e-12);
    let p3 = ModelParams::initial(
        &data,
        ClassifierKind::Logistic,
        &InitOptions {
            components: 3,
            ..InitOptions::default()
        },
    )
    .unwrap();
    assert!(p3.noise.gamma().iter().all(|g| (g - 1.0 / 3.0).abs() < 1e-12));
}

#[test]
fn threshold_extremes() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data = random_dataset(&mut rng, 1, 10, 2, 1);
    let p = random_params(&mut rng, 2, ClassifierKind::Logistic, 1, 1);
    let s = &data.sessions()[0];
    assert!(predict_labels(&p, s, 0.0).unwrap().iter().all(|&y| y == 1));
    assert!(predict_labels(&p, s, 1.0 + 1e-9).unwrap().iter().all(|&y| y == 0));
}
