//! Non-overlapping max pooling.

use crate::error::{dim_err, Result};
use crate::nn::conv::nhwc;
use crate::tensor::Tensor;

/// Max-pools each `window` block of an `[N,H,W,C]` (or `[H,W,C]`) tensor.
///
/// The stride equals the window. Ragged edges are padded with `-inf`, so the
/// last block only competes over the cells that exist. Returns the pooled
/// tensor and, for every output element, the flat input index of its maximum
/// (ties resolve to the lowest flat index).
pub(crate) fn max_pool_with_argmax(input: &Tensor, window: (usize, usize)) -> Result<(Tensor, Vec<usize>)> {
    let (n, h, w, c) = nhwc(input.shape())?;
    let (wh, ww) = window;
    if wh == 0 || ww == 0 {
        return dim_err("pool window must be at least 1x1");
    }
    if wh > h || ww > w {
        return dim_err(format!("pool window {window:?} larger than input {h}x{w}"));
    }
    let (oh, ow) = (h.div_ceil(wh), w.div_ceil(ww));
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = usize::MAX;
                    for y in oy * wh..((oy + 1) * wh).min(h) {
                        for xx in ox * ww..((ox + 1) * ww).min(w) {
                            let i = ((b * h + y) * w + xx) * c + ch;
                            if best_i == usize::MAX || x[i] > best {
                                best = x[i];
                                best_i = i;
                            }
                        }
                    }
                    out.push(best);
                    arg.push(best_i);
                }
            }
        }
    }
    let shape = if input.ndim() == 3 {
        vec![oh, ow, c]
    } else {
        vec![n, oh, ow, c]
    };
    Ok((Tensor::new(shape, out)?, arg))
}

pub fn max_pool(input: &Tensor, window: (usize, usize)) -> Result<Tensor> {
    max_pool_with_argmax(input, window).map(|(t, _)| t)
}
