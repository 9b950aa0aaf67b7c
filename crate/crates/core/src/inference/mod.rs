//! Exact posterior inference over label, count and event-assignment
//! variables by a forward/backward dynamic program in log space.
//!
//! With `L` instances, `M` sorted events and at most `C` events per instance:
//!
//! - `log_a[i][l]` is the log probability of events `1..=l` with instances
//!   `1..=i` emitting exactly `l` of them (`0 <= i <= L`, `0 <= l <= M`);
//! - `log_b[i][l]` is the log probability of events `l..=M` with instances
//!   `i..=L` emitting exactly those (`1 <= i <= L + 1`, `1 <= l <= M + 1`).
//!
//! Instance `i` emitting `c` events starting at event `j` contributes the
//! `c` densities of events `j..j+c`. Each cell sums over `c <= C`, so both
//! passes cost `O(L * M * C)`.

pub mod oracle;

use std::fmt::Write as _;

use crate::classifier::log_prob_from_margin;
use crate::data::Session;
use crate::error::{Error, Result};
use crate::learning::ModelParams;
use crate::math::{log_add_exp, NEG_INF};

pub use oracle::{enumerate_joint, JointEnumeration};

/// Log weights below this are dropped when accumulating marginals
/// (`exp(-750)` underflows to zero).
const LOG_NEGLIGIBLE: f64 = -750.0;

/// Dense row-major table of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Table {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline(always)]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline(always)]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline(always)]
    fn add(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }
}

/// Per-instance log terms shared by both passes.
#[derive(Debug, Clone)]
pub struct InstanceTerms {
    len: usize,
    events: usize,
    c_max: usize,
    /// `log p(y | x_i)` for `y = 0, 1`.
    log_label: Vec<[f64; 2]>,
    /// `log p(o = c | y)`, indexed `[y][c]`.
    log_count: [Vec<f64>; 2],
    /// `log sum_y p(y | x_i) p(o = c | y)`, `L x (C + 1)`.
    log_emit: Table,
    /// `log p(z_l | t_i)`, `L x M`.
    log_noise: Table,
}

impl InstanceTerms {
    pub fn new(session: &Session, params: &ModelParams) -> Result<Self> {
        let classifier = &params.classifier;
        if classifier.dim() != session.dim() {
            return Err(Error::DimensionMismatch {
                expected: classifier.dim(),
                got: session.dim(),
            });
        }
        let len = session.len();
        let events = session.num_events();
        let c_max = params.count.c_max();
        let log_count = [
            (0..=c_max).map(|c| params.count.log_prob(c, 0)).collect::<Vec<_>>(),
            (0..=c_max).map(|c| params.count.log_prob(c, 1)).collect::<Vec<_>>(),
        ];
        let mut log_label = Vec::with_capacity(len);
        let mut log_emit = Table::filled(len, c_max + 1, NEG_INF);
        for i in 0..len {
            let m = classifier.margin(session.feature(i));
            let ll = [log_prob_from_margin(m, 0), log_prob_from_margin(m, 1)];
            if !(ll[0].is_finite() && ll[1].is_finite()) {
                return Err(Error::numeric(
                    format!("classifier log-probability not finite at instance {i}"),
                    classifier.weights(),
                ));
            }
            for c in 0..=c_max {
                log_emit.set(i, c, log_add_exp(ll[0] + log_count[0][c], ll[1] + log_count[1][c]));
            }
            log_label.push(ll);
        }
        let eval = params.noise.evaluator();
        let mut log_noise = Table::filled(len, events, 0.0);
        let times = session.instance_times();
        let z = session.event_times();
        for i in 0..len {
            let t = times[i];
            for l in 0..events {
                log_noise.set(i, l, eval.log_density(z[l] - t));
            }
        }
        Ok(Self {
            len,
            events,
            c_max,
            log_label,
            log_count,
            log_emit,
            log_noise,
        })
    }

    pub fn is_feasible(&self) -> bool {
        self.events <= self.len * self.c_max
    }

    pub fn log_label(&self, i: usize) -> [f64; 2] {
        self.log_label[i]
    }

    pub fn log_noise(&self) -> &Table {
        &self.log_noise
    }
}

fn forward_pass(terms: &InstanceTerms) -> Table {
    let (len, m, cmax) = (terms.len, terms.events, terms.c_max);
    let mut a = Table::filled(len + 1, m + 1, NEG_INF);
    a.set(0, 0, 0.0);
    for i in 1..=len {
        let inst = i - 1;
        let emit = &terms.log_emit.data[inst * (cmax + 1)..(inst + 1) * (cmax + 1)];
        let noise = &terms.log_noise.data[inst * m..(inst + 1) * m];
        let (prev_rows, cur_rows) = a.data.split_at_mut(i * (m + 1));
        let prev = &prev_rows[inst * (m + 1)..];
        let cur = &mut cur_rows[..m + 1];
        for l in 0..=m {
            let mut dens = 0.0;
            let mut acc = prev[l] + emit[0];
            for c in 1..=cmax.min(l) {
                dens += noise[l - c];
                acc = log_add_exp(acc, prev[l - c] + emit[c] + dens);
            }
            cur[l] = acc;
        }
    }
    a
}

fn backward_pass(terms: &InstanceTerms) -> Table {
    let (len, m, cmax) = (terms.len, terms.events, terms.c_max);
    let cols = m + 2;
    let mut b = Table::filled(len + 2, cols, NEG_INF);
    b.set(len + 1, m + 1, 0.0);
    for i in (1..=len).rev() {
        let inst = i - 1;
        let emit = &terms.log_emit.data[inst * (cmax + 1)..(inst + 1) * (cmax + 1)];
        let noise = &terms.log_noise.data[inst * m..(inst + 1) * m];
        let (cur_rows, next_rows) = b.data.split_at_mut((i + 1) * cols);
        let cur = &mut cur_rows[i * cols..];
        let next = &next_rows[..cols];
        for l in (1..=m + 1).rev() {
            let mut dens = 0.0;
            let mut acc = next[l] + emit[0];
            for c in 1..=cmax.min(m + 1 - l) {
                dens += noise[l + c - 2];
                acc = log_add_exp(acc, next[l + c] + emit[c] + dens);
            }
            cur[l] = acc;
        }
    }
    b
}

/// Forward table `log_a`, `(L + 1) x (M + 1)`.
pub fn forward(session: &Session, params: &ModelParams) -> Result<Table> {
    Ok(forward_pass(&InstanceTerms::new(session, params)?))
}

/// Backward table `log_b`, `(L + 2) x (M + 2)`; row 0 and column 0 are unused.
pub fn backward(session: &Session, params: &ModelParams) -> Result<Table> {
    Ok(backward_pass(&InstanceTerms::new(session, params)?))
}

/// `log p(z | x, t)`; `-inf` when the session has more events than its
/// instances can emit.
pub fn log_marginal_likelihood(session: &Session, params: &ModelParams) -> Result<f64> {
    let terms = InstanceTerms::new(session, params)?;
    if !terms.is_feasible() {
        return Ok(NEG_INF);
    }
    let a = forward_pass(&terms);
    Ok(a.get(terms.len, terms.events))
}

/// Forward and backward tables plus the cached terms they were built from.
#[derive(Debug, Clone)]
pub struct PosteriorTables {
    terms: InstanceTerms,
    log_a: Table,
    log_b: Table,
    log_marginal: f64,
}

/// All three posterior marginal families for one session.
#[derive(Debug, Clone)]
pub struct Marginals {
    /// `p(y_i = 1 | z, x, t)`.
    pub label: Vec<f64>,
    /// `p(o_i = c, y_i = y | z, x, t)`, indexed `[i][c][y]`.
    pub count: Vec<Vec<[f64; 2]>>,
    /// `p(w(i, l) = 1 | z, x, t)`, `L x M`.
    pub assignment: Table,
}

impl PosteriorTables {
    pub fn compute(session: &Session, params: &ModelParams) -> Result<Self> {
        let terms = InstanceTerms::new(session, params)?;
        if !terms.is_feasible() {
            return Err(Error::Infeasible {
                session: session.id().to_string(),
                events: terms.events,
                instances: terms.len,
                c_max: terms.c_max,
            });
        }
        let log_a = forward_pass(&terms);
        let log_b = backward_pass(&terms);
        let log_marginal = log_a.get(terms.len, terms.events);
        Ok(Self {
            terms,
            log_a,
            log_b,
            log_marginal,
        })
    }

    pub fn log_a(&self) -> &Table {
        &self.log_a
    }

    pub fn log_b(&self) -> &Table {
        &self.log_b
    }

    pub fn log_marginal(&self) -> f64 {
        self.log_marginal
    }

    /// `log b(1, 1)`, which equals `log_marginal` up to rounding.
    pub fn log_marginal_backward(&self) -> f64 {
        self.log_b.get(1, 1)
    }

    pub fn terms(&self) -> &InstanceTerms {
        &self.terms
    }

    /// Visits every `(instance, count, first event)` block with its
    /// normalized log weight excluding the label and count terms.
    #[inline]
    fn for_each_block<F>(&self, mut visit: F)
    where
        F: FnMut(usize, usize, usize, f64),
    {
        let t = &self.terms;
        let (len, m, cmax) = (t.len, t.events, t.c_max);
        for i in 1..=len {
            let inst = i - 1;
            for j in 1..=m + 1 {
                let prefix = self.log_a.get(i - 1, j - 1);
                if prefix == NEG_INF {
                    continue;
                }
                let mut dens = 0.0;
                for c in 0..=cmax.min(m + 1 - j) {
                    if c > 0 {
                        dens += t.log_noise.get(inst, j + c - 2);
                    }
                    let suffix = self.log_b.get(i + 1, j + c);
                    if suffix == NEG_INF {
                        continue;
                    }
                    let w = prefix + dens + suffix - self.log_marginal;
                    // Blocks this improbable contribute nothing representable.
                    if w > LOG_NEGLIGIBLE {
                        visit(inst, c, j, w);
                    }
                }
            }
        }
    }

    pub fn marginals(&self) -> Marginals {
        let t = &self.terms;
        let (len, m, cmax) = (t.len, t.events, t.c_max);
        let mut label = vec![0.0; len];
        let mut count = vec![vec![[0.0; 2]; cmax + 1]; len];
        let mut assignment = Table::filled(len, m, 0.0);
        self.for_each_block(|inst, c, j, base| {
            let ll = t.log_label[inst];
            let p0 = (base + ll[0] + t.log_count[0][c]).exp();
            let p1 = (base + ll[1] + t.log_count[1][c]).exp();
            count[inst][c][0] += p0;
            count[inst][c][1] += p1;
            label[inst] += p1;
            let pe = p0 + p1;
            for l in j..j + c {
                assignment.add(inst, l - 1, pe);
            }
        });
        Marginals {
            label,
            count,
            assignment,
        }
    }

    pub fn label_marginals(&self) -> Vec<f64> {
        self.marginals().label
    }

    pub fn assignment_marginals(&self) -> Table {
        self.marginals().assignment
    }

    pub fn count_marginals(&self) -> Vec<Vec<[f64; 2]>> {
        self.marginals().count
    }

    /// Text dump of both tables for inspection.
    pub fn to_text(&self) -> String {
        format!(
            "log_marginal {}\nlog_a {} {}\n{}log_b {} {}\n{}",
            self.log_marginal,
            self.log_a.rows(),
            self.log_a.cols(),
            self.log_a.to_text(),
            self.log_b.rows(),
            self.log_b.cols(),
            self.log_b.to_text()
        )
    }
}

/// `p(y_i = 1 | z, x, t)` for each instance.
pub fn posterior_label_marginals(session: &Session, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(PosteriorTables::compute(session, params)?.label_marginals())
}

/// `p(w(i, l) = 1 | z, x, t)`, `L x M`.
pub fn posterior_assignment_marginals(session: &Session, params: &ModelParams) -> Result<Table> {
    Ok(PosteriorTables::compute(session, params)?.assignment_marginals())
}

/// `p(o_i = c, y_i = y | z, x, t)` indexed `[i][c][y]`.
pub fn posterior_count_marginals(
    session: &Session,
    params: &ModelParams,
) -> Result<Vec<Vec<[f64; 2]>>> {
    Ok(PosteriorTables::compute(session, params)?.count_marginals())
}
