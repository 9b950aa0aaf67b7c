//! Scoring, method dispatch and session-level cross-validation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{train_mi, train_naive, train_supervised};
use crate::classifier::{ClassifierKind, ClassifierParams, DEFAULT_HIDDEN};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learning::{self, predict_with_classifier, FitConfig, InitOptions, ModelParams};
use crate::model_io::ModelFile;

/// Precision, recall and F1 of the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl Scores {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
        }
    }
}

/// Scores binary predictions; zero denominators give zero.
pub fn score(pred: &[u8], truth: &[u8]) -> Result<Scores> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &t) in pred.iter().zip(truth) {
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(Scores::from_counts(tp, fp, fn_))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Logistic regression trained on the marginal likelihood.
    Lrm,
    /// Neural network trained on the marginal likelihood.
    Nnm,
    /// Logistic regression on naive nearest-instance labels.
    Lrn,
    /// Multiple-instance witness baseline with logistic regression.
    Mi,
    /// Logistic regression on the true labels.
    Supervised,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Lrm, Method::Nnm, Method::Lrn, Method::Mi, Method::Supervised];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lrm => "lrm",
            Method::Nnm => "nnm",
            Method::Lrn => "lrn",
            Method::Mi => "mi",
            Method::Supervised => "supervised",
        }
    }

    pub fn uses_bags(self) -> bool {
        self == Method::Mi
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown method `{s}`")))
    }
}

/// Everything needed to train one method at one hyperparameter setting.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSpec {
    pub prior_variance: f64,
    pub bag_size: usize,
    pub hidden: usize,
    pub init: InitOptions,
    pub fit: FitConfig,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            prior_variance: 1.0,
            bag_size: 3,
            hidden: DEFAULT_HIDDEN,
            init: InitOptions::default(),
            fit: FitConfig::default(),
        }
    }
}

/// What a training run leaves behind.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: ModelFile,
    /// Objective per accepted step (marginal methods) or penalized NLL per
    /// alternation (MI); empty for the single-fit baselines.
    pub trace: Vec<f64>,
    pub alternations: Option<usize>,
    pub converged: bool,
}

impl TrainedModel {
    pub fn classifier(&self) -> &ClassifierParams {
        &self.model.classifier
    }
}

pub fn train(method: Method, data: &Dataset, spec: &TrainSpec) -> Result<TrainedModel> {
    let dim = data.feature_dim();
    let ascent = spec.fit.ascent();
    let logistic = || ClassifierParams::logistic(dim, spec.prior_variance);
    let single = |classifier: ClassifierParams| TrainedModel {
        model: ModelFile::classifier_only(classifier),
        trace: Vec::new(),
        alternations: None,
        converged: true,
    };
    match method {
        Method::Lrm | Method::Nnm => {
            let kind = if method == Method::Lrm {
                ClassifierKind::Logistic
            } else {
                ClassifierKind::Mlp { hidden: spec.hidden }
            };
            let init_opts = InitOptions {
                prior_variance: spec.prior_variance,
                c_max: spec.fit.c_max,
                seed: spec.fit.seed,
                ..spec.init.clone()
            };
            let init = ModelParams::initial(data, kind, &init_opts)?;
            let out = learning::fit(data, &init, &spec.fit)?;
            Ok(TrainedModel {
                model: ModelFile::from(&out.params),
                converged: out.stop == learning::StopReason::Converged,
                trace: out.trace,
                alternations: None,
            })
        }
        Method::Lrn => Ok(single(train_naive(data, &logistic()?, &ascent)?)),
        Method::Supervised => Ok(single(train_supervised(data, &logistic()?, &ascent)?)),
        Method::Mi => {
            let fit = train_mi(data, spec.bag_size, &logistic()?, &ascent)?;
            Ok(TrainedModel {
                model: ModelFile::classifier_only(fit.classifier),
                trace: fit.objective_trace,
                alternations: Some(fit.alternations),
                converged: fit.converged,
            })
        }
    }
}

/// Per-session and pooled scores of a classifier against true labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub per_session: Vec<(String, Scores)>,
    /// Scores over all instances of all sessions together.
    pub pooled: Scores,
}

pub fn evaluate(classifier: &ClassifierParams, data: &Dataset, threshold: f64) -> Result<Evaluation> {
    let mut per_session = Vec::with_capacity(data.len());
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for s in data.sessions() {
        let truth = s.require_labels()?;
        let pred = predict_with_classifier(classifier, s, threshold)?;
        let sc = score(&pred, truth)?;
        tp += sc.true_positives;
        fp += sc.false_positives;
        fn_ += sc.false_negatives;
        per_session.push((s.id().to_string(), sc));
    }
    Ok(Evaluation {
        per_session,
        pooled: Scores::from_counts(tp, fp, fn_),
    })
}

/// Hyperparameter candidates. Grids with one value skip the inner search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuningGrid {
    /// Classifier prior variances.
    pub reg: Vec<f64>,
    /// Bag sizes, used by the MI baseline only.
    pub bag_sizes: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        Self {
            reg: (-3..=3).map(|e| 10f64.powi(e)).collect(),
            bag_sizes: (1..=10).collect(),
            thresholds: vec![0.5],
        }
    }
}

impl TuningGrid {
    pub fn single(reg: f64, bag_size: usize, threshold: f64) -> Self {
        Self {
            reg: vec![reg],
            bag_sizes: vec![bag_size],
            thresholds: vec![threshold],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reg.is_empty() || self.bag_sizes.is_empty() || self.thresholds.is_empty() {
            return Err(Error::InvalidParam("tuning grid axes must be non-empty".into()));
        }
        if self.reg.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidParam("regularization variances must be positive".into()));
        }
        if self.bag_sizes.contains(&0) {
            return Err(Error::InvalidParam("bag sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// `(reg, bag size)` pairs relevant to `method`, in grid order.
    fn training_points(&self, method: Method) -> Vec<(f64, usize)> {
        let bags: &[usize] = if method.uses_bags() {
            &self.bag_sizes
        } else {
            &self.bag_sizes[..1]
        };
        self.reg
            .iter()
            .flat_map(|&r| bags.iter().map(move |&b| (r, b)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvConfig {
    pub folds: usize,
    /// Folds of the inner search on each training split.
    pub inner_folds: usize,
    pub seed: u64,
    pub grid: TuningGrid,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            inner_folds: 10,
            seed: 0,
            grid: TuningGrid::default(),
        }
    }
}

/// Fold index per session from a seeded shuffle; fold sizes differ by at most one.
pub fn fold_assignment(sessions: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds == 0 || folds > sessions {
        return Err(Error::InvalidParam(format!(
            "need 1 <= folds <= sessions, got {folds} folds for {sessions} sessions"
        )));
    }
    let mut order: Vec<usize> = (0..sessions).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; sessions];
    for (rank, &s) in order.iter().enumerate() {
        fold[s] = rank % folds;
    }
    Ok(fold)
}

fn split(data: &Dataset, fold: &[usize], k: usize) -> Result<(Dataset, Dataset)> {
    let (test, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| fold[i] == k);
    Ok((data.subset(&train)?, data.subset(&test)?))
}

/// One report line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: Method,
    pub fold: usize,
    pub sigma: Option<f64>,
    pub pi: Option<f64>,
    #[serde(rename = "B")]
    pub bag_size: Option<usize>,
    pub reg: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub wall_time: f64,
    pub seed: u64,
}

pub const REPORT_HEADER: &str = "method,fold,sigma,pi,B,reg,precision,recall,f1,wall_time,seed";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    /// `(method, fold)` pairs whose test split had no true positives.
    pub zero_positive_folds: Vec<(Method, usize)>,
}

impl ExperimentReport {
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.zero_positive_folds.extend(other.zero_positive_folds);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.rows.is_empty() {
            w.write_record(REPORT_HEADER.split(','))?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidDataset(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?;
        Ok(Self {
            rows,
            zero_positive_folds: Vec::new(),
        })
    }

    /// Mean test F1 over rows matching `method` and `filter`.
    pub fn mean_f1(&self, method: Method, filter: impl Fn(&ReportRow) -> bool) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method && filter(r))
            .map(|r| r.f1)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Where in a sweep a cross-validation run sits; recorded in every row.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepPoint {
    pub sigma: Option<f64>,
    pub pi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Selected {
    reg: f64,
    bag_size: usize,
    threshold: f64,
}

fn spec_at(base: &TrainSpec, reg: f64, bag_size: usize) -> TrainSpec {
    TrainSpec {
        prior_variance: reg,
        bag_size,
        ..base.clone()
    }
}

/// Inner search: mean pooled F1 over inner folds for every grid point,
/// best first-in-grid-order on ties.
fn select_hyperparameters(method: Method, train_data: &Dataset, base: &TrainSpec, cv: &CvConfig) -> Result<Selected> {
    let points = cv.grid.training_points(method);
    if points.len() == 1 && cv.grid.thresholds.len() == 1 {
        let (reg, bag_size) = points[0];
        return Ok(Selected {
            reg,
            bag_size,
            threshold: cv.grid.thresholds[0],
        });
    }
    let inner = cv.inner_folds.min(train_data.len());
    let fold = fold_assignment(train_data.len(), inner, cv.seed.wrapping_add(1))?;
    let mut best: Option<(f64, Selected)> = None;
    for &(reg, bag_size) in &points {
        let spec = spec_at(base, reg, bag_size);
        let mut f1_sum = vec![0.0; cv.grid.thresholds.len()];
        for k in 0..inner {
            let (tr, te) = split(train_data, &fold, k)?;
            let model = train(method, &tr, &spec)?;
            for (j, &th) in cv.grid.thresholds.iter().enumerate() {
                f1_sum[j] += evaluate(model.classifier(), &te, th)?.pooled.f1;
            }
        }
        for (j, &threshold) in cv.grid.thresholds.iter().enumerate() {
            let mean = f1_sum[j] / inner as f64;
            if best.is_none_or(|(b, _)| mean > b) {
                best = Some((
                    mean,
                    Selected {
                        reg,
                        bag_size,
                        threshold,
                    },
                ));
            }
        }
    }
    Ok(best.expect("grid is non-empty").1)
}

/// Session-level K-fold cross-validation with nested hyperparameter search.
/// Folds run in parallel; rows come out in fold order.
pub fn cross_validate(
    data: &Dataset,
    method: Method,
    base: &TrainSpec,
    cv: &CvConfig,
    point: SweepPoint,
) -> Result<ExperimentReport> {
    cv.grid.validate()?;
    if method == Method::Supervised || !data.has_labels() {
        // Evaluation always needs the truth; supervised training does too.
        for s in data.sessions() {
            s.require_labels()?;
        }
    }
    let fold = fold_assignment(data.len(), cv.folds, cv.seed)?;
    let results = (0..cv.folds)
        .into_par_iter()
        .map(|k| -> Result<(ReportRow, bool)> {
            let start = Instant::now();
            let (tr, te) = split(data, &fold, k)?;
            let sel = select_hyperparameters(method, &tr, base, cv)?;
            let model = train(method, &tr, &spec_at(base, sel.reg, sel.bag_size))?;
            let eval = evaluate(model.classifier(), &te, sel.threshold)?;
            let sc = eval.pooled;
            let no_positives = sc.true_positives + sc.false_negatives == 0;
            Ok((
                ReportRow {
                    method,
                    fold: k,
                    sigma: point.sigma,
                    pi: point.pi,
                    bag_size: method.uses_bags().then_some(sel.bag_size),
                    reg: sel.reg,
                    precision: sc.precision,
                    recall: sc.recall,
                    f1: sc.f1,
                    wall_time: start.elapsed().as_secs_f64(),
                    seed: cv.seed,
                },
                no_positives,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ExperimentReport::default();
    for (row, no_positives) in results {
        if no_positives {
            warn!("{method} fold {}: test split has no true positives", row.fold);
            report.zero_positive_folds.push((method, row.fold));
        }
        report.rows.push(row);
    }
    Ok(report)
}
