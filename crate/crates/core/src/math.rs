//! Small numerical kernels shared by the inference and learning code.

pub const NEG_INF: f64 = f64::NEG_INFINITY;

/// `0.5 * ln(2π)`.
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(exp(a) + exp(b))`, exact when either side is `-inf`.
#[inline(always)]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == NEG_INF {
        return b;
    }
    if b == NEG_INF {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    let d = lo - hi;
    // ln(1 + e^-50) < 2e-22: below the resolution of any result we use.
    if d < -50.0 {
        hi
    } else {
        hi + d.exp().ln_1p()
    }
}

/// Two-pass log-sum-exp over a slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(NEG_INF, f64::max);
    if max == NEG_INF {
        return NEG_INF;
    }
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `log(sigmoid(x))` without overflow for large `|x|`.
#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Log density of `N(x; mean, sd^2)`.
#[inline]
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let u = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * u * u
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Log binomial coefficient.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return NEG_INF;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Element-wise compensated sum of equally sized vectors.
#[derive(Debug, Clone)]
pub struct CompensatedVec {
    parts: Vec<CompensatedSum>,
}

impl CompensatedVec {
    pub fn zeros(n: usize) -> Self {
        Self {
            parts: vec![CompensatedSum::new(); n],
        }
    }

    pub fn add(&mut self, xs: &[f64]) {
        debug_assert_eq!(xs.len(), self.parts.len());
        for (p, &x) in self.parts.iter_mut().zip(xs) {
            p.add(x);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.parts.iter().map(CompensatedSum::value).collect()
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `|a - b| / max(|a|, |b|)`, zero when both are equal (including both infinite).
pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_handles_large_and_infinite() {
        let expected = 1232.0 + (2f64.exp() + 1.0).ln();
        assert!((log_add_exp(1234.0, 1232.0) - expected).abs() < 1e-12);
        assert_eq!(log_add_exp(NEG_INF, 3.0), 3.0);
        assert_eq!(log_add_exp(NEG_INF, NEG_INF), NEG_INF);
    }

    #[test]
    fn log_sum_exp_matches_naive_in_range() {
        let v = [0.1, -2.0, 3.5, 0.0];
        let naive = v.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - naive).abs() < 1e-14);
        assert_eq!(log_sum_exp(&[]), NEG_INF);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        for x in [-30.0, -1.0, 0.3, 12.0] {
            let s = log_sigmoid(x).exp() + log_sigmoid(-x).exp();
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn standard_normal_mode() {
        assert!((normal_log_pdf(0.0, 0.0, 1.0) + 0.918_938_5).abs() < 1e-7);
    }

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let mut s = CompensatedSum::new();
        for x in [1e16, 1.0, -1e16, 1.0] {
            s.add(x);
        }
        assert_eq!(s.value(), 2.0);
    }

    #[test]
    fn ln_choose_small() {
        assert!((ln_choose(5, 2) - 10f64.ln()).abs() < 1e-12);
        assert_eq!(ln_choose(3, 0), 0.0);
    }
}
