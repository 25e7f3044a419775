//! Central finite-difference verification of analytic gradients.

use super::{AutodiffError, Graph, Var};
use crate::tensor::Tensor;

/// Outcome of [`gradient_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// `max |analytic − numeric| / max(1, |numeric|)` over every parameter entry.
    pub max_rel_error: f64,
    /// `(parameter index, flat entry index)` of the worst entry.
    pub worst: (usize, usize),
    pub tol: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tol
    }
}

/// Compares reverse-mode gradients of `f` against central differences
/// `(f(p + eps) − f(p − eps)) / (2 eps)`, one entry at a time.
///
/// `f` receives a fresh graph and one parameter [`Var`] per entry of `params`,
/// and must return a scalar node.
pub fn gradient_check<F>(f: F, params: &[Tensor], eps: f64, tol: f64) -> Result<GradCheck, AutodiffError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutodiffError>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(AutodiffError::InvalidStep(eps));
    }
    let eval = |ps: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ps.iter().map(|p| g.param(p.clone())).collect();
        let root = f(&mut g, &vars)?;
        let v = g.value(root).item();
        if !v.is_finite() {
            return Err(AutodiffError::NonFinite(v));
        }
        Ok(v)
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.param(p.clone())).collect();
    let root = f(&mut g, &vars)?;
    let base = g.value(root).item();
    if !base.is_finite() {
        return Err(AutodiffError::NonFinite(base));
    }
    let grads = g.backward(root)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut report = GradCheck { max_rel_error: 0.0, worst: (0, 0), tol };
    for p in 0..work.len() {
        for k in 0..work[p].len() {
            let orig = work[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic[p].data()[k] - numeric).abs() / numeric.abs().max(1.0);
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (p, k);
            }
        }
    }
    Ok(report)
}
