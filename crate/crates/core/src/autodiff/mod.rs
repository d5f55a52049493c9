//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Every op is a method on [`Tape`] returning a [`Var`]; `Tape::backward` sweeps the
//! recorded nodes in reverse and returns gradients for all differentiable leaves.

mod conv;
pub mod gradcheck;
mod ops;
mod tape;
mod volume;

pub use conv::ConvGeometry;
pub use ops::{backward_fn, softmax_in_place, BackwardFn, GradList, EXP_CLAMP, LOG_EPS};
pub use tape::{Backward, Gradients, Tape, Var};
