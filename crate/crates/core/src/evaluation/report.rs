use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scores;
use crate::math;

/// Per-fold scores of one method with their mean and population std.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub train_set: String,
    pub test_set: String,
    pub per_fold: Vec<Scores>,
    pub mean: Scores,
    pub std: Scores,
}

impl EvalReport {
    pub fn from_folds(
        method: impl Into<String>,
        train_set: impl Into<String>,
        test_set: impl Into<String>,
        per_fold: Vec<Scores>,
    ) -> Self {
        let col = |f: fn(&Scores) -> f64| per_fold.iter().map(f).collect::<Vec<_>>();
        let (p, r, f) = (col(|s| s.precision), col(|s| s.recall), col(|s| s.f1));
        EvalReport {
            method: method.into(),
            train_set: train_set.into(),
            test_set: test_set.into(),
            mean: Scores { precision: math::mean(&p), recall: math::mean(&r), f1: math::mean(&f) },
            std: Scores {
                precision: math::population_std(&p),
                recall: math::population_std(&r),
                f1: math::population_std(&f),
            },
            per_fold,
        }
    }

    pub fn row(&self) -> ReportRow {
        ReportRow {
            method: self.method.clone(),
            train_set: self.train_set.clone(),
            test_set: self.test_set.clone(),
            precision_mean: self.mean.precision,
            precision_std: self.std.precision,
            recall_mean: self.mean.recall,
            recall_std: self.std.recall,
            f1_mean: self.mean.f1,
            f1_std: self.std.f1,
        }
    }
}

/// One line of the report CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub train_set: String,
    pub test_set: String,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

pub fn report_csv_string(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r.row()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn write_report_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> crate::Result<()> {
    let path = path.as_ref();
    std::fs::write(path, report_csv_string(reports)).map_err(|e| crate::Error::io(path, e))
}

pub fn read_report_csv(path: impl AsRef<Path>) -> crate::Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| crate::Error::io(path, std::io::Error::other(e)))?;
    let mut rows = Vec::new();
    for (i, row) in r.deserialize().enumerate() {
        rows.push(row.map_err(|e: csv::Error| {
            crate::Error::Eval(super::EvalError::Malformed { line: i + 2, message: e.to_string() })
        })?);
    }
    Ok(rows)
}
