//! Brute-force enumeration of the joint over every label vector and every
//! count vector that sums to `M`. Exponential; used as the ground truth
//! the dynamic program is checked against.

use crate::data::Session;
use crate::error::{Error, Result};
use crate::learning::ModelParams;
use crate::math::{log_add_exp, NEG_INF};

pub const MAX_INSTANCES: usize = 12;
pub const MAX_EVENTS: usize = 4;

#[derive(Debug, Clone)]
pub struct JointEnumeration {
    pub log_likelihood: f64,
    /// `p(y_i = 1 | .)`.
    pub label: Vec<f64>,
    /// `p(o_i = c, y_i = y | .)`, indexed `[i][c][y]`.
    pub count: Vec<Vec<[f64; 2]>>,
    /// `p(w(i, l) = 1 | .)`, indexed `[i][l]`.
    pub assignment: Vec<Vec<f64>>,
}

fn count_vectors(len: usize, total: usize, c_max: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, len: usize, left: usize, c_max: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == len {
            if left == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        let slots = len - prefix.len() - 1;
        for c in 0..=c_max.min(left) {
            if left - c > slots * c_max {
                continue;
            }
            prefix.push(c);
            rec(prefix, len, left - c, c_max, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(len), len, total, c_max, &mut out);
    out
}

/// Sums the complete joint over all `(y, o)` configurations.
pub fn enumerate_joint(session: &Session, params: &ModelParams) -> Result<JointEnumeration> {
    let len = session.len();
    let m = session.num_events();
    if len > MAX_INSTANCES || m > MAX_EVENTS {
        return Err(Error::EnumerationGuard {
            instances: len,
            events: m,
        });
    }
    let c_max = params.count.c_max();
    let x = |i: usize| session.feature(i);
    let t = session.instance_times();
    let z = session.event_times();

    let mut log_theta = Vec::with_capacity(len);
    for i in 0..len {
        log_theta.push([params.classifier.log_prob(x(i), 0)?, params.classifier.log_prob(x(i), 1)?]);
    }

    let mut total = NEG_INF;
    let mut label = vec![[NEG_INF; 2]; len];
    let mut count = vec![vec![[NEG_INF; 2]; c_max + 1]; len];
    let mut assignment = vec![vec![NEG_INF; m]; len];

    for o in count_vectors(len, m, c_max) {
        // Events are consumed in order: instance i takes the next o[i] of them.
        let mut noise = 0.0;
        let mut owner = Vec::with_capacity(m);
        for (i, &c) in o.iter().enumerate() {
            for _ in 0..c {
                let l = owner.len();
                noise += params.noise.log_density(z[l], t[i]);
                owner.push(i);
            }
        }
        for mask in 0u32..(1u32 << len) {
            let mut lj = noise;
            for i in 0..len {
                let y = ((mask >> i) & 1) as u8;
                lj += log_theta[i][usize::from(y)] + params.count.log_prob(o[i], y);
            }
            total = log_add_exp(total, lj);
            for i in 0..len {
                let y = ((mask >> i) & 1) as usize;
                label[i][y] = log_add_exp(label[i][y], lj);
                count[i][o[i]][y] = log_add_exp(count[i][o[i]][y], lj);
            }
            for (l, &i) in owner.iter().enumerate() {
                assignment[i][l] = log_add_exp(assignment[i][l], lj);
            }
        }
    }

    let norm = |v: f64| if total == NEG_INF { 0.0 } else { (v - total).exp() };
    Ok(JointEnumeration {
        log_likelihood: total,
        label: label.iter().map(|p| norm(p[1])).collect(),
        count: count
            .iter()
            .map(|row| row.iter().map(|p| [norm(p[0]), norm(p[1])]).collect())
            .collect(),
        assignment: assignment
            .iter()
            .map(|row| row.iter().map(|&p| norm(p)).collect())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_vectors_respect_bounds() {
        let v = count_vectors(3, 2, 1);
        assert_eq!(v.len(), 3);
        let v = count_vectors(3, 4, 2);
        // Compositions of 4 into 3 parts each <= 2: (2,2,0) x3 perms + (2,1,1) x3.
        assert_eq!(v.len(), 6);
        assert!(count_vectors(2, 3, 1).is_empty());
    }
}
