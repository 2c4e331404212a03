use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
    /// Normalizes over the last axis.
    Softmax,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_rows(data: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(width) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    out
}

pub fn activation(kind: Activation, x: &Tensor) -> Tensor {
    match kind {
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Tanh => x.map(f64::tanh),
        Activation::Relu => x.map(|v| v.max(0.0)),
        Activation::Softmax => {
            let width = *x.shape().last().expect("non-empty shape");
            Tensor::new(x.shape().to_vec(), softmax_rows(x.data(), width)).expect("same shape")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(activation(Activation::Tanh, &Tensor::scalar(0.0)).data(), &[0.0]);
        assert_eq!(activation(Activation::Relu, &Tensor::scalar(-1.0)).data(), &[0.0]);
    }

    #[test]
    fn sigmoid_stays_open_interval_for_moderate_inputs() {
        for x in [-30.0, -5.0, 0.3, 5.0, 30.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0, "{x} -> {s}");
        }
        assert!(sigmoid(-800.0).is_finite());
    }

    #[test]
    fn softmax_uniform_and_stable() {
        let y = activation(Activation::Softmax, &Tensor::vector(vec![0.0; 3]));
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let big = activation(Activation::Softmax, &Tensor::vector(vec![1000.0, 1000.0]));
        assert_eq!(big.data(), &[0.5, 0.5]);
    }
}
