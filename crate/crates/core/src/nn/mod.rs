//! Tensor layer primitives, reverse-mode gradients and optimizers.

mod activation;
mod conv;
pub mod gradcheck;
mod graph;
mod optim;
mod pool;

pub use activation::{activation, sigmoid, Activation};
pub use conv::{conv2d, Conv2dOptions, Padding};
pub use graph::{ComputeGraph, Gradients, NodeId};
pub use optim::{
    OptimizerConfig, OptimizerState, UpdateRule, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, RMSPROP_DECAY,
};
pub use pool::max_pool;

use crate::error::Result;
use crate::tensor::Tensor;

/// `input · weights + bias` for a `[n, k]` (or `[k]`) input and `[k, m]` weights.
pub fn dense(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let vector_in = input.ndim() == 1;
    let x = if vector_in {
        input.reshape(&[1, input.len()])?
    } else {
        input.clone()
    };
    let mut g = ComputeGraph::new();
    let x = g.constant(x);
    let w = g.constant(weights.clone());
    let b = g.constant(bias.clone());
    let y = g.dense(x, w, b)?;
    let out = g.value(y);
    if vector_in {
        out.reshape(&[out.len()])
    } else {
        Ok(out.clone())
    }
}
