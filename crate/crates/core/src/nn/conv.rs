//! 2-D convolution over `[N, H, W, C]` tensors with `[kh, kw, Cin, Cout]` kernels.

use crate::error::{dim_err, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: (usize, usize),
    pub padding: Padding,
    /// `true` computes a true convolution (kernel index flipped, `I[x-i, y-j]`);
    /// `false` computes cross-correlation.
    pub flip: bool,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Self {
            stride: (1, 1),
            padding: Padding::Valid,
            flip: false,
        }
    }
}

impl Conv2dOptions {
    pub fn same() -> Self {
        Self {
            padding: Padding::Same,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub stride: (usize, usize),
}

fn axis_geometry(size: usize, k: usize, stride: usize, padding: Padding) -> Result<(usize, usize)> {
    match padding {
        Padding::Valid => {
            if k > size {
                return dim_err(format!("kernel extent {k} exceeds input extent {size}"));
            }
            Ok(((size - k) / stride + 1, 0))
        }
        Padding::Same => {
            let out = size.div_ceil(stride);
            let total = ((out - 1) * stride + k).saturating_sub(size);
            Ok((out, total / 2))
        }
    }
}

/// Splits an input shape into `(batch, h, w, c)`; 3-D inputs are a batch of one.
pub(crate) fn nhwc(shape: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *shape {
        [h, w, c] => Ok((1, h, w, c)),
        [n, h, w, c] => Ok((n, h, w, c)),
        _ => dim_err(format!("expected a [H,W,C] or [N,H,W,C] tensor, got {shape:?}")),
    }
}

pub(crate) fn geometry(input: &[usize], kernel: &[usize], opts: &Conv2dOptions) -> Result<ConvGeometry> {
    let (batch, in_h, in_w, cin) = nhwc(input)?;
    let [kh, kw, kcin, cout] = *kernel else {
        return dim_err(format!("expected a [kh,kw,Cin,Cout] kernel, got {kernel:?}"));
    };
    if kcin != cin {
        return dim_err(format!("input has {cin} channels but kernel expects {kcin}"));
    }
    if opts.stride.0 == 0 || opts.stride.1 == 0 {
        return dim_err("stride must be at least 1");
    }
    let (out_h, pad_top) = axis_geometry(in_h, kh, opts.stride.0, opts.padding)?;
    let (out_w, pad_left) = axis_geometry(in_w, kw, opts.stride.1, opts.padding)?;
    Ok(ConvGeometry {
        batch,
        in_h,
        in_w,
        cin,
        kh,
        kw,
        cout,
        out_h,
        out_w,
        pad_top,
        pad_left,
        stride: opts.stride,
    })
}

fn flipped(kernel: &Tensor) -> Tensor {
    let s = kernel.shape();
    let (kh, kw, cin, cout) = (s[0], s[1], s[2], s[3]);
    let src = kernel.data();
    let mut out = vec![0.0; src.len()];
    let block = cin * cout;
    for i in 0..kh {
        for j in 0..kw {
            let from = ((kh - 1 - i) * kw + (kw - 1 - j)) * block;
            let to = (i * kw + j) * block;
            out[to..to + block].copy_from_slice(&src[from..from + block]);
        }
    }
    Tensor::new(s.to_vec(), out).expect("same shape")
}

fn out_shape(input: &[usize], g: &ConvGeometry) -> Vec<usize> {
    if input.len() == 3 {
        vec![g.out_h, g.out_w, g.cout]
    } else {
        vec![g.batch, g.out_h, g.out_w, g.cout]
    }
}

/// Visits every (output cell, kernel tap) pair that lands inside the input.
#[inline]
fn for_each_tap(g: &ConvGeometry, mut f: impl FnMut(usize, usize, usize)) {
    for n in 0..g.batch {
        for oy in 0..g.out_h {
            for ky in 0..g.kh {
                let iy = (oy * g.stride.0 + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy >= g.in_h as isize {
                    continue;
                }
                for ox in 0..g.out_w {
                    let out_base = ((n * g.out_h + oy) * g.out_w + ox) * g.cout;
                    for kx in 0..g.kw {
                        let ix = (ox * g.stride.1 + kx) as isize - g.pad_left as isize;
                        if ix < 0 || ix >= g.in_w as isize {
                            continue;
                        }
                        let in_base = ((n * g.in_h + iy as usize) * g.in_w + ix as usize) * g.cin;
                        let k_base = (ky * g.kw + kx) * g.cin * g.cout;
                        f(out_base, in_base, k_base);
                    }
                }
            }
        }
    }
}

pub fn conv2d(input: &Tensor, kernel: &Tensor, opts: &Conv2dOptions) -> Result<Tensor> {
    let g = geometry(input.shape(), kernel.shape(), opts)?;
    let eff;
    let k = if opts.flip {
        eff = flipped(kernel);
        eff.data()
    } else {
        kernel.data()
    };
    let x = input.data();
    let mut out = vec![0.0; g.batch * g.out_h * g.out_w * g.cout];
    for_each_tap(&g, |ob, ib, kb| {
        for ci in 0..g.cin {
            let xv = x[ib + ci];
            if xv == 0.0 {
                continue;
            }
            let krow = &k[kb + ci * g.cout..kb + (ci + 1) * g.cout];
            let orow = &mut out[ob..ob + g.cout];
            for (o, &kv) in orow.iter_mut().zip(krow) {
                *o += xv * kv;
            }
        }
    });
    Tensor::new(out_shape(input.shape(), &g), out)
}

/// Gradients of a convolution with respect to its input and kernel.
pub(crate) fn conv2d_backward(
    input: &Tensor,
    kernel: &Tensor,
    grad_out: &Tensor,
    opts: &Conv2dOptions,
    need_input: bool,
    need_kernel: bool,
) -> Result<(Option<Tensor>, Option<Tensor>)> {
    let g = geometry(input.shape(), kernel.shape(), opts)?;
    let eff;
    let k = if opts.flip {
        eff = flipped(kernel);
        eff.data()
    } else {
        kernel.data()
    };
    let x = input.data();
    let go = grad_out.data();
    let mut gx = need_input.then(|| vec![0.0; x.len()]);
    let mut gk = need_kernel.then(|| vec![0.0; k.len()]);
    for_each_tap(&g, |ob, ib, kb| {
        let grow = &go[ob..ob + g.cout];
        for ci in 0..g.cin {
            let krange = kb + ci * g.cout..kb + (ci + 1) * g.cout;
            if let Some(gx) = gx.as_mut() {
                let krow = &k[krange.clone()];
                gx[ib + ci] += grow.iter().zip(krow).map(|(a, b)| a * b).sum::<f64>();
            }
            if let Some(gk) = gk.as_mut() {
                let xv = x[ib + ci];
                for (gkv, &gov) in gk[krange].iter_mut().zip(grow) {
                    *gkv += xv * gov;
                }
            }
        }
    });
    let gx = gx.map(|d| Tensor::new(input.shape().to_vec(), d)).transpose()?;
    let gk = gk
        .map(|d| {
            let t = Tensor::new(kernel.shape().to_vec(), d)?;
            Ok::<_, crate::error::Error>(if opts.flip { flipped(&t) } else { t })
        })
        .transpose()?;
    Ok((gx, gk))
}
