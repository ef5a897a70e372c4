use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};
use crate::corpus::Label;

/// Agreement and disagreement counts between a model and gold labels.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub total: usize,
    pub predicted_distorted: usize,
    pub predicted_not_distorted: usize,
    pub agree: usize,
    /// pred = 1 and true = 1.
    pub agree_distorted: usize,
    /// pred = 0 and true = 0.
    pub agree_not_distorted: usize,
    pub disagree: usize,
    pub false_negatives: usize,
    pub false_positives: usize,
    /// Disagreements on posts flagged as confusing by annotators.
    pub disagree_confusing: usize,
    pub disagree_not_confusing: usize,
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl AgreementReport {
    pub fn predicted_distorted_fraction(&self) -> f64 {
        frac(self.predicted_distorted, self.total)
    }

    pub fn agree_fraction(&self) -> f64 {
        frac(self.agree, self.total)
    }

    /// Share of disagreements that are false negatives.
    pub fn false_negative_share(&self) -> f64 {
        frac(self.false_negatives, self.disagree)
    }

    pub fn confusing_share(&self) -> f64 {
        frac(self.disagree_confusing, self.disagree)
    }
}

pub fn agreement_analysis(preds: &[Label], gold: &[Label], confusing: &[bool]) -> Result<AgreementReport, EvalError> {
    check_lengths(preds.len(), gold.len())?;
    check_lengths(confusing.len(), gold.len())?;
    let mut r = AgreementReport { total: preds.len(), ..Default::default() };
    for ((&p, &t), &c) in preds.iter().zip(gold).zip(confusing) {
        match p {
            Label::Distorted => r.predicted_distorted += 1,
            Label::NotDistorted => r.predicted_not_distorted += 1,
        }
        if p == t {
            r.agree += 1;
            match p {
                Label::Distorted => r.agree_distorted += 1,
                Label::NotDistorted => r.agree_not_distorted += 1,
            }
        } else {
            r.disagree += 1;
            match p {
                Label::NotDistorted => r.false_negatives += 1,
                Label::Distorted => r.false_positives += 1,
            }
            if c {
                r.disagree_confusing += 1;
            } else {
                r.disagree_not_confusing += 1;
            }
        }
    }
    Ok(r)
}
