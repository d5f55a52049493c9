//! Central finite-difference gradient checks.

use super::tape::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Copy, Debug)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over all entries.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub entries: usize,
}

/// Relative-error floor so that near-zero gradients are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Compares tape gradients of the scalar `f(inputs)` with central differences.
///
/// `f` records a computation on a fresh tape from the given input variables.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], step: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.variable(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.variable(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut report = GradCheck {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        entries: 0,
    };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v).expect("leaf gradient").data().to_vec();
        for i in 0..inputs[k].len() {
            let x0 = inputs[k].data()[i];
            probe[k].data_mut()[i] = x0 + step;
            let fp = eval(&probe)?;
            probe[k].data_mut()[i] = x0 - step;
            let fm = eval(&probe)?;
            probe[k].data_mut()[i] = x0;
            let numeric = (fp - fm) / (2.0 * step);
            let abs = (analytic[i] - numeric).abs();
            let rel = abs / analytic[i].abs().max(numeric.abs()).max(REL_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.entries += 1;
        }
    }
    Ok(report)
}

impl<T: Scalar> Tape<T> {
    /// Convenience for tests: gradient of `loss` w.r.t. `v` as a flat vector.
    pub fn grad_of(&self, loss: Var, v: Var) -> Result<Vec<T>> {
        let g = self.backward(loss)?;
        Ok(g.get(v).map(|t| t.data().to_vec()).unwrap_or_default())
    }
}
