//! Central finite-difference oracle for reverse-mode gradients.
//!
//! The numeric side only ever evaluates forward values, so it stays
//! independent of the backward pass it checks.

use ndarray::Array2;

use crate::error::Result;
use crate::graph::{Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub step: f64,
    pub rel: f64,
    pub abs_floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            step: 1e-5,
            rel: 1e-4,
            abs_floor: 1e-7,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error among entries whose absolute error exceeds the
    /// floor (0 when none do).
    pub max_rel_error: f64,
    /// Worst absolute error outside kinks.
    pub max_abs_error: f64,
    pub checked: usize,
    pub failures: usize,
    /// Entries where the step straddled a kink: the one-sided slopes differ
    /// and the analytic gradient matched one of them.
    pub kinks: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn merge(&mut self, other: &GradCheckReport) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.checked += other.checked;
        self.failures += other.failures;
        self.kinks += other.kinks;
    }
}

/// Compares `backward` against central differences for every entry of
/// every input. `build` receives one leaf per input and must return a
/// scalar node.
pub fn check_gradients<F>(inputs: &[Array2<f64>], build: F, tol: Tolerance) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|x| g.variable(x.clone())).collect();
    let loss = build(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    let eval = |values: &[Array2<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = values.iter().map(|x| g.constant(x.clone())).collect();
        let loss = build(&mut g, &ids)?;
        Ok(g.scalar_value(loss))
    };

    let base = g.scalar_value(loss);
    let mut report = GradCheckReport::default();
    let mut work: Vec<Array2<f64>> = inputs.to_vec();
    for (k, id) in ids.iter().enumerate() {
        let analytic = grads.get(*id).expect("every variable gets a gradient").clone();
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let orig = work[k][[r, c]];
            work[k][[r, c]] = orig + tol.step;
            let plus = eval(&work)?;
            work[k][[r, c]] = orig - tol.step;
            let minus = eval(&work)?;
            work[k][[r, c]] = orig;
            let numeric = (plus - minus) / (2.0 * tol.step);
            let a = analytic[[r, c]];
            let abs = (a - numeric).abs();
            report.checked += 1;
            if abs > tol.abs_floor {
                let rel = abs / a.abs().max(numeric.abs());
                if rel > tol.rel {
                    let right = (plus - base) / tol.step;
                    let left = (base - minus) / tol.step;
                    if one_sided_match(a, numeric, left, right, tol) {
                        report.kinks += 1;
                        continue;
                    }
                    report.failures += 1;
                }
                report.max_rel_error = report.max_rel_error.max(rel);
            }
            report.max_abs_error = report.max_abs_error.max(abs);
        }
    }
    Ok(report)
}

/// True when the central-difference miss is explained by a kink inside the
/// step: the slopes left and right of the point differ by at least the
/// miss, and the analytic gradient equals one of them.
fn one_sided_match(analytic: f64, numeric: f64, left: f64, right: f64, tol: Tolerance) -> bool {
    let loose = 100.0 * tol.step;
    let floor = 10.0 * tol.abs_floor;
    let close = |x: f64| (analytic - x).abs() <= floor + loose * analytic.abs().max(x.abs());
    let kink = (left - right).abs() >= (analytic - numeric).abs();
    kink && (close(left) || close(right))
}
