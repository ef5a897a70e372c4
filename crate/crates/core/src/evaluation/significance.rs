use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{check_lengths, EvalError};
use crate::corpus::Label;

/// Below this many discordant pairs the exact binomial test is used.
pub const EXACT_THRESHOLD: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum McnemarMethod {
    McnemarExact,
    McnemarChi2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub statistic: f64,
    pub p_value: f64,
    pub alpha_adjusted: f64,
    pub reject: bool,
    pub method: McnemarMethod,
    /// A right, B wrong.
    pub b: usize,
    /// A wrong, B right.
    pub c: usize,
}

impl SignificanceResult {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha_adjusted = alpha;
        self.reject = self.p_value < alpha;
        self
    }
}

/// McNemar's test on the discordant pairs of two classifiers, at α = 0.05.
pub fn mcnemar(preds_a: &[Label], preds_b: &[Label], y_true: &[Label]) -> Result<SignificanceResult, EvalError> {
    check_lengths(preds_a.len(), y_true.len())?;
    check_lengths(preds_b.len(), y_true.len())?;
    let (mut b, mut c) = (0, 0);
    for ((pa, pb), t) in preds_a.iter().zip(preds_b).zip(y_true) {
        match (pa == t, pb == t) {
            (true, false) => b += 1,
            (false, true) => c += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(b, c))
}

pub fn mcnemar_from_counts(b: usize, c: usize) -> SignificanceResult {
    let n = b + c;
    let (statistic, p_value, method) = if n == 0 {
        (0.0, 1.0, McnemarMethod::McnemarExact)
    } else if n < EXACT_THRESHOLD {
        let k = b.min(c);
        let mut coeff = 1.0f64;
        let mut tail = 0.0;
        for i in 0..=k {
            if i > 0 {
                coeff = coeff * (n - i + 1) as f64 / i as f64;
            }
            tail += coeff;
        }
        let p = 2.0 * tail * 0.5f64.powi(n as i32);
        (k as f64, p.min(1.0), McnemarMethod::McnemarExact)
    } else {
        let diff = (b as f64 - c as f64).abs() - 1.0;
        let stat = diff.max(0.0).powi(2) / n as f64;
        let chi = ChiSquared::new(1.0).expect("one degree of freedom");
        (stat, chi.sf(stat).clamp(0.0, 1.0), McnemarMethod::McnemarChi2)
    };
    SignificanceResult { statistic, p_value, alpha_adjusted: 0.05, reject: p_value < 0.05, method, b, c }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BonferroniResult {
    pub alpha_adjusted: f64,
    pub reject: Vec<bool>,
}

/// `α′ = α / k`; test `i` rejects iff `p_i < α′`.
pub fn bonferroni(p_values: &[f64], alpha: f64) -> Result<BonferroniResult, EvalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::InvalidAlpha(alpha));
    }
    if p_values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let alpha_adjusted = alpha / p_values.len() as f64;
    Ok(BonferroniResult { alpha_adjusted, reject: p_values.iter().map(|p| *p < alpha_adjusted).collect() })
}
