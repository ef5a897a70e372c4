//! Finite-difference verification of analytic gradients.

use super::params::ParamGroup;
use crate::par::{self, Execution};

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    /// max over parameters of `|g_fd - g| / max(|g_fd|, |g|, 1e-8)`.
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

pub fn relative_error(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss` at `params`.
///
/// `analytic` must list the same tensors, in the same order, as `params`.
pub fn gradient_check<P, G, L>(params: &P, analytic: &G, loss: L, epsilon: f64, exec: Execution) -> GradientCheck
where
    P: ParamGroup + Clone + Sync + Send,
    G: ParamGroup + ?Sized,
    L: Fn(&P) -> f64 + Sync + Send,
{
    assert!((1e-7..=1e-3).contains(&epsilon), "epsilon must lie in [1e-7, 1e-3]");
    let names: Vec<&'static str> = params.tensors().iter().map(|(n, _)| *n).collect();
    let analytic = analytic.tensors();
    assert_eq!(
        names,
        analytic.iter().map(|(n, _)| *n).collect::<Vec<_>>(),
        "analytic gradient must mirror the parameter layout"
    );
    let coords: Vec<(usize, usize)> =
        params.tensors().iter().enumerate().flat_map(|(t, (_, data))| (0..data.len()).map(move |i| (t, i))).collect();

    let numeric = par::map_range_with(
        exec,
        coords.len(),
        || params.clone(),
        |scratch: &mut P, k| {
            let (t, i) = coords[k];
            let original = scratch.tensors()[t].1[i];
            scratch.tensors_mut()[t].1[i] = original + epsilon;
            let plus = loss(scratch);
            scratch.tensors_mut()[t].1[i] = original - epsilon;
            let minus = loss(scratch);
            scratch.tensors_mut()[t].1[i] = original;
            (plus - minus) / (2.0 * epsilon)
        },
    );

    let mut report = GradientCheck {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: coords.len(),
    };
    for (k, &(t, i)) in coords.iter().enumerate() {
        let g = analytic[t].1[i];
        let err = relative_error(numeric[k], g);
        if err > report.max_relative_error || report.worst_tensor.is_empty() {
            report.max_relative_error = err;
            report.worst_tensor = names[t].to_string();
            report.worst_index = i;
            report.worst_analytic = g;
            report.worst_numeric = numeric[k];
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone)]
    struct Quadratic(Vec<f64>);

    impl ParamGroup for Quadratic {
        fn tensors(&self) -> Vec<(&'static str, &[f64])> {
            vec![("x.weight", &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
            vec![("x.weight", &mut self.0)]
        }
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let p = Quadratic(vec![1.0, 2.0]);
        let g = Quadratic(vec![0.0, 0.0]);
        let r = gradient_check(&p, &g, |_| 3.0, 1e-5, Execution::Sequential);
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.checked, 2);
    }

    #[test]
    fn detects_wrong_gradient() {
        let p = Quadratic(vec![1.0, -2.0]);
        let loss = |q: &Quadratic| q.0.iter().map(|x| x * x * x).sum::<f64>();
        let good = Quadratic(vec![3.0, 12.0]);
        let bad = Quadratic(vec![3.0, 11.0]);
        assert!(gradient_check(&p, &good, loss, 1e-5, Execution::Parallel).max_relative_error < 1e-8);
        let r = gradient_check(&p, &bad, loss, 1e-5, Execution::Sequential);
        assert!(r.max_relative_error > 0.05);
        assert_eq!(r.worst_index, 1);
    }
}
