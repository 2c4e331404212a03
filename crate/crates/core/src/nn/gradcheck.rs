//! Central finite-difference checking of graph gradients.
//!
//! The numeric side only ever runs forward passes, so it stays independent of
//! the backward rules it is used to verify.

use crate::error::Result;
use crate::nn::graph::{ComputeGraph, NodeId};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error over elements whose magnitude exceeds `floor`.
    pub max_rel_error: f64,
    /// Worst absolute error over the remaining near-zero elements.
    pub max_abs_error_small: f64,
    pub checked: usize,
    /// `(parameter, element)` of the worst relative error.
    pub worst: Option<(usize, usize)>,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error < rel_tol && self.max_abs_error_small < rel_tol
    }
}

fn loss_at<F>(params: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut ComputeGraph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = ComputeGraph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &ids)?;
    g.value(loss).item()
}

/// Analytic gradients of the scalar built by `build`, one per parameter.
pub fn analytic_gradients<F>(params: &[Tensor], build: &F) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&mut ComputeGraph, &[NodeId]) -> Result<NodeId>,
{
    let mut g = ComputeGraph::new();
    let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
    let loss = build(&mut g, &ids)?;
    let mut grads = g.backward(loss)?;
    let value = g.value(loss).item()?;
    let out = ids
        .iter()
        .map(|&id| grads.take(id).expect("trainable leaf has a gradient"))
        .collect();
    Ok((value, out))
}

/// Compares backprop against `(f(p+ε) − f(p−ε)) / 2ε` for every parameter element.
pub fn check_gradients<F>(params: &[Tensor], build: F, eps: f64, floor: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut ComputeGraph, &[NodeId]) -> Result<NodeId>,
{
    let (_, analytic) = analytic_gradients(params, &build)?;
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error_small: 0.0,
        checked: 0,
        worst: None,
    };
    for pi in 0..work.len() {
        for ei in 0..work[pi].len() {
            let orig = work[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + eps;
            let up = loss_at(&work, &build)?;
            work[pi].data_mut()[ei] = orig - eps;
            let down = loss_at(&work, &build)?;
            work[pi].data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi].data()[ei];
            let scale = a.abs().max(numeric.abs());
            let diff = (a - numeric).abs();
            if scale > floor {
                let rel = diff / scale;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst = Some((pi, ei));
                }
            } else {
                report.max_abs_error_small = report.max_abs_error_small.max(diff);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}
