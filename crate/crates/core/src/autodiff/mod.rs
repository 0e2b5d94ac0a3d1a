//! Reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! Every backward rule is expressed with the same differentiable ops as the
//! forward pass, so a gradient is an ordinary node and can be differentiated
//! again. That is what lets the physics residual, which contains
//! `∂û/∂t` and `∇_h û`, be trained by plain backpropagation.

pub mod gradcheck;
mod graph;
mod tensor;

pub use graph::{Graph, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Gradient of a scalar with respect to a differentiable input.
///
/// Returns zeros when `output` does not depend on `wrt`. The result stays
/// on the graph, so it can itself be differentiated.
pub fn input_gradient<'g>(output: Var<'g>, wrt: Var<'g>) -> Result<Var<'g>> {
    let mut grads = output.graph().grad(output, &[wrt])?;
    Ok(grads.remove(0))
}

/// Diagonal of the input Hessian, `∂²y/∂x_i²` along the last axis of `wrt`.
///
/// When `output` is a sum over independent rows (a batch), row `r` of the
/// result holds the diagonal for that row alone: cross-row terms vanish.
pub fn second_input_derivative<'g>(output: Var<'g>, wrt: Var<'g>) -> Result<Var<'g>> {
    let first = input_gradient(output, wrt)?;
    second_from_first(first, wrt)
}

/// Diagonal second derivative given an already-computed first gradient.
pub fn second_from_first<'g>(first: Var<'g>, wrt: Var<'g>) -> Result<Var<'g>> {
    let n = first.value().last_dim();
    let columns = (0..n)
        .map(|i| {
            let gi = first.slice_last(i, 1)?.sum_all()?;
            input_gradient(gi, wrt)?.slice_last(i, 1)
        })
        .collect::<Result<Vec<_>>>()?;
    Var::concat_last(&columns)
}

/// Derivative of the given order (1 or 2). Higher orders are not supported.
pub fn input_derivative<'g>(output: Var<'g>, wrt: Var<'g>, order: usize) -> Result<Var<'g>> {
    match order {
        1 => input_gradient(output, wrt),
        2 => second_input_derivative(output, wrt),
        k => Err(Error::DerivativeOrder(k)),
    }
}
