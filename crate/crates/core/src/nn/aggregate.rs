use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Elementwise maximum of equally sized codes (multi-view fusion).
pub fn max_pool_aggregate<T: Scalar>(codes: &[Vec<T>]) -> Result<Vec<T>> {
    let Some(first) = codes.first() else {
        return Err(Error::Empty("max_pool_aggregate of no codes"));
    };
    if codes.iter().any(|c| c.len() != first.len()) {
        let shapes: Vec<Vec<usize>> = codes.iter().map(|c| vec![c.len()]).collect();
        return Err(Error::Shape {
            op: "max_pool_aggregate",
            shapes,
        });
    }
    let mut out = first.clone();
    for c in &codes[1..] {
        for (o, &v) in out.iter_mut().zip(c) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}

/// Differentiable variant over tape values.
pub fn max_pool_aggregate_vars<T: Scalar>(tape: &mut Tape<T>, codes: &[Var]) -> Result<Var> {
    tape.maximum(codes)
}
