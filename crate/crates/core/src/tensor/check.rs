use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Below this magnitude gradients are compared on an absolute scale.
const REL_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub max_abs_error: f64,
    /// `(parameter index, element index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares reverse-mode gradients of the scalar built by `f` against central
/// differences `(f(x+h) − f(x−h)) / 2h`, one coordinate at a time.
///
/// `f` receives a fresh graph and one leaf per entry of `params` and must
/// return a scalar node.
pub fn grad_check<F>(mut f: F, params: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("step h must be positive, got {h}")));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.tensor(v)).collect();

    let mut eval = |ps: &[Tensor]| -> Result<f64> {
        let mut g = Graph::no_grad();
        let vars: Vec<Var> = ps.iter().map(|p| g.constant(p.clone())).collect();
        let l = f(&mut g, &vars)?;
        Ok(g.value(l).item())
    };

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        max_abs_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for pi in 0..work.len() {
        for ei in 0..work[pi].numel() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + h;
            let up = eval(&work)?;
            work[pi].data_mut()[ei] = orig - h;
            let down = eval(&work)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[ei];
            let rel = relative_error(a, numeric);
            let abs = (a - numeric).abs();
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (pi, ei);
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}
