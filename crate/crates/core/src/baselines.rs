//! Comparison strategies: naive nearest-instance supervision, fully
//! supervised training, and a multiple-instance (witness) baseline.

use std::ops::Range;

use log::warn;
use rayon::prelude::*;

use crate::classifier::{log_prob_from_margin, ClassifierParams};
use crate::data::{Dataset, Session};
use crate::error::{Error, Result};
use crate::learning::optimize::{maximize, AscentConfig};
use crate::math::CompensatedSum;

/// Upper bound on witness/refit alternations.
pub const MAX_ALTERNATIONS: usize = 50;

/// Labels the instance nearest each event positive; ties go to the earlier
/// instance. Both inputs must be sorted.
pub fn naive_align(instance_times: &[f64], event_times: &[f64]) -> Vec<u8> {
    let mut labels = vec![0u8; instance_times.len()];
    if instance_times.is_empty() {
        return labels;
    }
    let mut i = 0;
    for &z in event_times {
        // Advance while the next instance is strictly closer.
        while i + 1 < instance_times.len()
            && (instance_times[i + 1] - z).abs() < (instance_times[i] - z).abs()
        {
            i += 1;
        }
        labels[i] = 1;
    }
    labels
}

/// Naive labels for every session, in session order.
pub fn naive_labels(data: &Dataset) -> Vec<Vec<u8>> {
    data.sessions()
        .par_iter()
        .map(|s| naive_align(s.instance_times(), s.event_times()))
        .collect()
}

/// Penalized maximum likelihood of `init`'s classifier on labeled examples,
/// warm-started from `init`.
pub fn fit_classifier(
    init: &ClassifierParams,
    examples: &[(&[f64], u8)],
    ascent: &AscentConfig,
) -> Result<ClassifierParams> {
    let objective = |w: &[f64]| -> Result<(f64, Vec<f64>)> {
        let mut c = init.clone();
        c.set_weights(w);
        let (value, grad, _) = penalized_log_likelihood(&c, examples);
        Ok((value, grad))
    };
    let out = maximize(&objective, init.weights().to_vec(), ascent)?;
    let mut fitted = init.clone();
    fitted.set_weights(&out.x);
    Ok(fitted)
}

/// `sum log p(y|x) + log prior`, its gradient, and whether it is finite.
fn penalized_log_likelihood(c: &ClassifierParams, examples: &[(&[f64], u8)]) -> (f64, Vec<f64>, bool) {
    let (prior, mut grad) = c.log_prior();
    let mut value = CompensatedSum::new();
    value.add(prior);
    let mut scratch = vec![0.0; c.num_weights()];
    for &(x, y) in examples {
        let m = c.accumulate_expected_grad(x, f64::from(y), 1.0, &mut scratch, &mut grad);
        value.add(log_prob_from_margin(m, y));
    }
    let v = value.value();
    (v, grad, v.is_finite())
}

/// Penalized negative log-likelihood of a labeling; the quantity the MI
/// alternation decreases.
pub fn penalized_nll(c: &ClassifierParams, examples: &[(&[f64], u8)]) -> f64 {
    -penalized_log_likelihood(c, examples).0
}

fn labeled_examples<'a>(data: &'a Dataset, labels: &[Vec<u8>]) -> Vec<(&'a [f64], u8)> {
    data.sessions()
        .iter()
        .zip(labels)
        .flat_map(|(s, ls)| ls.iter().enumerate().map(move |(i, &y)| (s.feature(i), y)))
        .collect()
}

fn warn_if_single_class(labels: &[Vec<u8>], what: &str) {
    let pos: usize = labels.iter().flatten().map(|&y| usize::from(y)).sum();
    let total: usize = labels.iter().map(Vec::len).sum();
    if pos == 0 || pos == total {
        warn!("{what}: all {total} training labels belong to one class; only the prior regularizes the fit");
    }
}

/// Trains on the given per-session labels.
pub fn train_on_labels(
    data: &Dataset,
    labels: &[Vec<u8>],
    init: &ClassifierParams,
    ascent: &AscentConfig,
) -> Result<ClassifierParams> {
    if labels.len() != data.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: data.len(),
        });
    }
    for (s, l) in data.sessions().iter().zip(labels) {
        if s.len() != l.len() {
            return Err(Error::LengthMismatch {
                left: l.len(),
                right: s.len(),
            });
        }
    }
    fit_classifier(init, &labeled_examples(data, labels), ascent)
}

/// Fully supervised training on the true labels.
pub fn train_supervised(data: &Dataset, init: &ClassifierParams, ascent: &AscentConfig) -> Result<ClassifierParams> {
    let labels = data
        .sessions()
        .iter()
        .map(|s| s.require_labels().map(<[u8]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    warn_if_single_class(&labels, "supervised");
    train_on_labels(data, &labels, init, ascent)
}

/// Treats the noisy timestamps as exact: naive alignment, then supervised fit.
pub fn train_naive(data: &Dataset, init: &ClassifierParams, ascent: &AscentConfig) -> Result<ClassifierParams> {
    let labels = naive_labels(data);
    warn_if_single_class(&labels, "naive");
    train_on_labels(data, &labels, init, ascent)
}

/// A contiguous block of instances within one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bag {
    pub instances: Range<usize>,
    pub label: u8,
    /// Representative instance of a positive bag.
    pub witness: Option<usize>,
}

/// Consecutive blocks of `size` instances (the last may be shorter),
/// positive iff the naive alignment puts a positive inside.
pub fn make_bags(session: &Session, size: usize) -> Result<Vec<Bag>> {
    if size == 0 {
        return Err(Error::InvalidParam("bag size must be >= 1".into()));
    }
    let naive = naive_align(session.instance_times(), session.event_times());
    Ok((0..session.len())
        .step_by(size)
        .map(|start| {
            let instances = start..(start + size).min(session.len());
            let label = u8::from(naive[instances.clone()].contains(&1));
            Bag {
                instances,
                label,
                witness: None,
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct MiFit {
    pub classifier: ClassifierParams,
    /// Penalized NLL after each refit; non-increasing.
    pub objective_trace: Vec<f64>,
    pub alternations: usize,
    /// Whether the witness set reached a fixed point before the cap.
    pub converged: bool,
    pub bags: Vec<Vec<Bag>>,
}

/// Witness with the highest `p(y=1|x)`; the first such instance on ties.
fn select_witness(c: &ClassifierParams, s: &Session, range: Range<usize>) -> usize {
    let mut best = range.start;
    let mut best_margin = f64::NEG_INFINITY;
    for i in range {
        let m = c.margin(s.feature(i));
        if m > best_margin {
            best = i;
            best_margin = m;
        }
    }
    best
}

fn mi_examples<'a>(data: &'a Dataset, bags: &[Vec<Bag>]) -> Vec<(&'a [f64], u8)> {
    let mut out = Vec::new();
    for (s, sb) in data.sessions().iter().zip(bags) {
        for bag in sb {
            match (bag.label, bag.witness) {
                (1, Some(w)) => out.push((s.feature(w), 1)),
                _ => out.extend(bag.instances.clone().map(|i| (s.feature(i), 0))),
            }
        }
    }
    out
}

/// Alternates witness selection and refitting until the witnesses stop
/// changing. The first classifier is trained on the naive labels.
pub fn train_mi(
    data: &Dataset,
    bag_size: usize,
    init: &ClassifierParams,
    ascent: &AscentConfig,
) -> Result<MiFit> {
    let mut bags = data
        .sessions()
        .iter()
        .map(|s| make_bags(s, bag_size))
        .collect::<Result<Vec<_>>>()?;
    if !bags.iter().flatten().any(|b| b.label == 1) {
        warn!("mi: no positive bags; training on negatives only");
    }
    let mut classifier = train_naive(data, init, ascent)?;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut alternations = 0;
    while alternations < MAX_ALTERNATIONS {
        let mut changed = false;
        for (s, sb) in data.sessions().iter().zip(bags.iter_mut()) {
            for bag in sb.iter_mut().filter(|b| b.label == 1) {
                let w = select_witness(&classifier, s, bag.instances.clone());
                changed |= bag.witness != Some(w);
                bag.witness = Some(w);
            }
        }
        if !changed && alternations > 0 {
            converged = true;
            break;
        }
        let examples = mi_examples(data, &bags);
        let before = penalized_nll(&classifier, &examples);
        if let Some(&last) = trace.last() {
            // Re-choosing witnesses can only lower the loss of the current classifier.
            debug_assert!(before <= last + 1e-9 * last.abs().max(1.0), "{before} > {last}");
        }
        classifier = fit_classifier(&classifier, &examples, ascent)?;
        let after = penalized_nll(&classifier, &examples);
        if after > before {
            return Err(Error::numeric("refit increased the MI objective", classifier.weights()));
        }
        trace.push(after);
        alternations += 1;
    }
    if !converged {
        warn!("mi: witnesses still changing after {MAX_ALTERNATIONS} alternations");
    }
    Ok(MiFit {
        classifier,
        objective_trace: trace,
        alternations,
        converged,
        bags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn session(t: &[f64], z: &[f64]) -> Session {
        let x: Vec<f64> = t.iter().map(|v| v * 0.1).collect();
        Session::new("s", 1, x, t.to_vec(), z.to_vec(), None).unwrap()
    }

    #[test]
    fn naive_alignment_examples() {
        assert_eq!(naive_align(&[0.0, 1.0, 2.0], &[1.4]), vec![0, 1, 0]);
        assert_eq!(naive_align(&[0.0, 1.0], &[0.5]), vec![1, 0]);
        assert_eq!(naive_align(&[0.0, 1.0, 2.0], &[2.0]), vec![0, 0, 1]);
        assert_eq!(naive_align(&[0.0, 1.0, 2.0], &[]), vec![0, 0, 0]);
        assert_eq!(naive_align(&[0.0, 1.0, 2.0], &[0.9, 1.1]), vec![0, 1, 0]);
        assert_eq!(naive_align(&[0.0, 1.0, 2.0], &[-5.0, 9.0]), vec![1, 0, 1]);
    }

    proptest! {
        #[test]
        fn naive_alignment_matches_brute_force(
            gaps in prop::collection::vec(0.1f64..3.0, 1..20),
            mut z in prop::collection::vec(-5.0f64..40.0, 0..10),
        ) {
            let t: Vec<f64> = gaps.iter().scan(0.0, |acc, g| { *acc += g; Some(*acc) }).collect();
            z.sort_by(f64::total_cmp);
            let mut expected = vec![0u8; t.len()];
            for &zm in &z {
                let mut best = 0;
                for i in 1..t.len() {
                    if (t[i] - zm).abs() < (t[best] - zm).abs() {
                        best = i;
                    }
                }
                expected[best] = 1;
            }
            prop_assert_eq!(naive_align(&t, &z), expected);
        }

        #[test]
        fn bags_partition_the_session(len in 1usize..40, size in 1usize..12) {
            let t: Vec<f64> = (0..len).map(|i| i as f64).collect();
            let bags = make_bags(&session(&t, &[]), size).unwrap();
            let mut next = 0;
            for b in &bags {
                prop_assert_eq!(b.instances.start, next);
                prop_assert!(!b.instances.is_empty() && b.instances.len() <= size);
                prop_assert_eq!(b.label, 0);
                next = b.instances.end;
            }
            prop_assert_eq!(next, len);
        }
    }

    #[test]
    fn bag_sizes_and_labels() {
        let t: Vec<f64> = (0..10).map(f64::from).collect();
        let s = session(&t, &[4.2]);
        let sizes: Vec<usize> = make_bags(&s, 3).unwrap().iter().map(|b| b.instances.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let labels: Vec<u8> = make_bags(&s, 1).unwrap().iter().map(|b| b.label).collect();
        assert_eq!(labels, naive_align(&t, &[4.2]));
        assert!(make_bags(&s, 0).is_err());
    }

    fn toy_dataset() -> Dataset {
        // Positives have feature near +2, negatives near -2; one event per positive.
        let mut sessions = Vec::new();
        for k in 0..4 {
            let t: Vec<f64> = (0..30).map(f64::from).collect();
            let labels: Vec<u8> = (0..30).map(|i| u8::from((i + k) % 7 == 0)).collect();
            let x: Vec<f64> = labels
                .iter()
                .enumerate()
                .map(|(i, &y)| if y == 1 { 2.0 } else { -2.0 } + 0.3 * ((i * 13 % 7) as f64 - 3.0) / 3.0)
                .collect();
            let z: Vec<f64> = t.iter().zip(&labels).filter(|(_, &y)| y == 1).map(|(t, _)| t + 0.3).collect();
            sessions.push(Session::new(format!("s{k}"), 1, x, t, z, Some(labels)).unwrap());
        }
        Dataset::new(sessions).unwrap()
    }

    #[test]
    fn exact_events_make_naive_equal_supervised() {
        let data = toy_dataset();
        let init = ClassifierParams::logistic(1, 1.0).unwrap();
        let ascent = AscentConfig::default();
        let a = train_naive(&data, &init, &ascent).unwrap();
        let b = train_supervised(&data, &init, &ascent).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn supervised_needs_labels() {
        let data = toy_dataset();
        let unlabeled = data.map_sessions(|s| Ok(s.without_labels())).unwrap();
        let init = ClassifierParams::logistic(1, 1.0).unwrap();
        let err = train_supervised(&unlabeled, &init, &AscentConfig::default()).unwrap_err();
        assert!(matches!(err, Error::MissingLabels(_)), "{err}");
    }

    #[test]
    fn mi_objective_decreases_and_converges() {
        let data = toy_dataset();
        let init = ClassifierParams::logistic(1, 1.0).unwrap();
        for size in [1, 3, 5] {
            let fit = train_mi(&data, size, &init, &AscentConfig::default()).unwrap();
            assert!(fit.alternations >= 1);
            assert!(fit.converged);
            assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            for (s, bags) in data.sessions().iter().zip(&fit.bags) {
                for b in bags {
                    match b.witness {
                        Some(w) => assert!(b.label == 1 && b.instances.contains(&w)),
                        None => assert_eq!(b.label, 0),
                    }
                }
                assert_eq!(bags.last().unwrap().instances.end, s.len());
            }
        }
    }

    #[test]
    fn unit_bags_reduce_to_naive() {
        let data = toy_dataset();
        let init = ClassifierParams::logistic(1, 1.0).unwrap();
        let ascent = AscentConfig::default();
        let mi = train_mi(&data, 1, &init, &ascent).unwrap();
        let naive = train_naive(&data, &init, &ascent).unwrap();
        for (a, b) in mi.classifier.weights().iter().zip(naive.weights()) {
            assert!((a - b).abs() < 1e-4 * a.abs().max(1.0), "{a} vs {b}");
        }
    }
}
