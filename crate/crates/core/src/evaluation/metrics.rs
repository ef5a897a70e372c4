use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};
use crate::corpus::Label;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `m[true][pred]` counts.
pub fn confusion_matrix(y_true: &[Label], y_pred: &[Label]) -> Result<[[usize; 2]; 2], EvalError> {
    check_lengths(y_true.len(), y_pred.len())?;
    let mut m = [[0usize; 2]; 2];
    for (t, p) in y_true.iter().zip(y_pred) {
        m[t.index()][p.index()] += 1;
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Support-weighted precision, recall and F1. Undefined ratios count as 0.
pub fn weighted_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<Scores, EvalError> {
    let m = confusion_matrix(y_true, y_pred)?;
    if y_true.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = y_true.len() as f64;
    let mut out = Scores::default();
    for c in 0..2 {
        let support = m[c][0] + m[c][1];
        if support == 0 {
            continue;
        }
        let tp = m[c][c];
        let predicted = m[0][c] + m[1][c];
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let w = support as f64 / n;
        out.precision += w * p;
        out.recall += w * r;
        out.f1 += w * f;
    }
    Ok(out)
}

/// Cohen's κ between two raters. Total agreement on a single class gives 1.
pub fn cohen_kappa(a: &[Label], b: &[Label]) -> Result<f64, EvalError> {
    let m = confusion_matrix(a, b)?;
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = a.len() as f64;
    let p_o = (m[0][0] + m[1][1]) as f64 / n;
    let p_e: f64 = (0..2).map(|c| ((m[c][0] + m[c][1]) as f64 / n) * ((m[0][c] + m[1][c]) as f64 / n)).sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}
