use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::math;
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MmdEstimator {
    Unbiased,
    /// V-statistic; never negative.
    Biased,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// Median pairwise distance over the pooled sample.
    Median,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdOptions {
    pub estimator: MmdEstimator,
    pub bandwidth: Bandwidth,
}

impl Default for MmdOptions {
    fn default() -> Self {
        MmdOptions { estimator: MmdEstimator::Unbiased, bandwidth: Bandwidth::Median }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    /// Squared MMD.
    pub value: f64,
    /// Always `"rbf"`: `k(x, y) = exp(-‖x - y‖² / (2σ²))`.
    pub kernel: String,
    pub bandwidth: f64,
    pub estimator: MmdEstimator,
    pub n_x: usize,
    pub n_y: usize,
}

/// Squared MMD with an RBF kernel, default options.
pub fn mmd(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<MmdResult, EvalError> {
    mmd_with(x, y, MmdOptions::default(), Execution::default())
}

fn compare_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        for (ra, rb) in a.iter().zip(b) {
            for (va, vb) in ra.iter().zip(rb) {
                match va.total_cmp(vb) {
                    Ordering::Equal => {}
                    o => return o,
                }
            }
        }
        Ordering::Equal
    })
}

fn median_distance(pooled: &[&Vec<f64>], exec: Execution) -> f64 {
    let n = pooled.len();
    let rows = par::map_range(exec, n, |i| {
        (i + 1..n).map(|j| math::squared_distance(pooled[i], pooled[j]).sqrt()).collect::<Vec<_>>()
    });
    let mut d: Vec<f64> = rows.into_iter().flatten().collect();
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *m;
    if d.len() % 2 == 1 {
        upper
    } else {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lower + upper) / 2.0
    }
}

/// Sum of `k(a_i, b_j)` over all pairs, or over `i ≠ j` when `skip_diagonal`.
fn kernel_sum(a: &[Vec<f64>], b: &[Vec<f64>], gamma: f64, skip_diagonal: bool, exec: Execution) -> f64 {
    let rows = par::map_range(exec, a.len(), |i| {
        let mut s = 0.0;
        for (j, bj) in b.iter().enumerate() {
            if skip_diagonal && i == j {
                continue;
            }
            s += (-gamma * math::squared_distance(&a[i], bj)).exp();
        }
        s
    });
    rows.into_iter().sum()
}

/// Squared MMD between two embedding samples.
///
/// The result is bitwise symmetric in `x` and `y`: the samples are put in a
/// canonical order before any floating-point reduction.
pub fn mmd_with(x: &[Vec<f64>], y: &[Vec<f64>], options: MmdOptions, exec: Execution) -> Result<MmdResult, EvalError> {
    for s in [x, y] {
        if s.len() < 2 {
            return Err(EvalError::TooFewSamples { needed: 2, got: s.len() });
        }
    }
    let dim = x[0].len();
    if let Some(bad) = x.iter().chain(y).find(|r| r.len() != dim) {
        return Err(EvalError::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let (a, b) = if compare_samples(x, y) == Ordering::Greater { (y, x) } else { (x, y) };

    let bandwidth = match options.bandwidth {
        Bandwidth::Fixed(s) => s,
        Bandwidth::Median => {
            let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
            let m = median_distance(&pooled, exec);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let gamma = 1.0 / (2.0 * bandwidth * bandwidth);
    let (m, n) = (a.len() as f64, b.len() as f64);
    let cross = kernel_sum(a, b, gamma, false, exec) / (m * n);
    let value = match options.estimator {
        MmdEstimator::Unbiased => {
            let kaa = kernel_sum(a, a, gamma, true, exec) / (m * (m - 1.0));
            let kbb = kernel_sum(b, b, gamma, true, exec) / (n * (n - 1.0));
            kaa + kbb - 2.0 * cross
        }
        MmdEstimator::Biased => {
            let kaa = kernel_sum(a, a, gamma, false, exec) / (m * m);
            let kbb = kernel_sum(b, b, gamma, false, exec) / (n * n);
            (kaa + kbb - 2.0 * cross).max(0.0)
        }
    };
    Ok(MmdResult { value, kernel: "rbf".into(), bandwidth, estimator: options.estimator, n_x: x.len(), n_y: y.len() })
}
