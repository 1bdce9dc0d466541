use super::LogWeight;

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Sums signed log-space terms with error-tracking accumulation.
///
/// Terms are rescaled by the largest magnitude before accumulation, so the
/// result is accurate relative to that magnitude even when the terms span
/// hundreds of orders of magnitude. Results of genuine cancellation
/// (mixed signs) below `exp(UNDERFLOW_LOG)` are clamped to zero; same-sign
/// sums keep their magnitude.
pub fn compensated_alternating_sum(terms: &[LogWeight]) -> LogWeight {
    let flag = terms.iter().any(LogWeight::underflowed);
    let max = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(LogWeight::ln_abs)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogWeight::ZERO.with_flag(flag);
    }
    let acc: NeumaierSum = terms
        .iter()
        .filter(|t| !t.is_zero())
        .map(|t| f64::from(t.sign()) * (t.ln_abs() - max).exp())
        .collect();
    let s = acc.value();
    let mut signs = terms.iter().map(LogWeight::sign).filter(|&s| s != 0);
    let first = signs.next().unwrap_or(0);
    let mixed = signs.any(|s| s != first);
    let out = if s == 0.0 {
        LogWeight::ZERO
    } else {
        let w = LogWeight::from_log(s.abs().ln() + max, if s > 0.0 { 1 } else { -1 });
        if mixed {
            w.clamped()
        } else {
            w
        }
    };
    out.with_flag(flag)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lw(v: f64) -> LogWeight {
        LogWeight::from_f64(v)
    }

    #[test]
    fn exact_cancellation() {
        let s = compensated_alternating_sum(&[lw(1.0), lw(-1.0)]);
        assert!(s.is_zero());
        assert!(!s.underflowed());
    }

    #[test]
    fn small_mixed() {
        let s = compensated_alternating_sum(&[lw(2.0), lw(-1.0), lw(0.5)]);
        assert_eq!(s.to_f64(), 1.5);
    }

    #[test]
    fn empty_is_zero() {
        assert!(compensated_alternating_sum(&[]).is_zero());
    }

    #[test]
    fn recovers_small_residual() {
        // 1e16 + 1 - 1e16 loses the 1 in naive left-to-right f64 addition
        let s = compensated_alternating_sum(&[lw(1e16), lw(1.0), lw(-1e16)]);
        assert_eq!(s.to_f64(), 1.0);
    }

    #[test]
    fn same_sign_sums_keep_tiny_magnitudes() {
        let t = LogWeight::from_log(-6000.0, 1);
        let s = compensated_alternating_sum(&[t, t]);
        assert!((s.ln_abs() - (-6000.0 + 2f64.ln())).abs() < 1e-9);
        let c = compensated_alternating_sum(&[LogWeight::from_log(-6000.0, 1), LogWeight::from_log(-6000.0 + 1e-12, -1)]);
        assert!(c.is_zero() && c.underflowed());
    }

    #[test]
    fn underflow_flag_propagates() {
        let tiny = LogWeight::from_log(-6000.0, 1) + LogWeight::from_log(-6001.0, 1);
        assert!(tiny.underflowed());
        let s = compensated_alternating_sum(&[tiny, lw(1.0)]);
        assert!(s.underflowed());
        assert_eq!(s.to_f64(), 1.0);
    }
}
