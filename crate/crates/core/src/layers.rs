//! Single-utterance layer functions on plain matrices. The graph ops in
//! [`crate::autodiff`] run the same kernels over padded batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn apply<F: Real>(self, v: F) -> F {
        match self {
            Activation::Relu => v.max(F::zero()),
            Activation::Sigmoid => kernels::sigmoid(v),
            Activation::Linear => v,
        }
    }
}

/// Valid, stride-1 convolution of a `T×D` matrix with `K×w×D` filters.
pub fn conv1d_valid<F: Real>(
    input: &Tensor<F>,
    filters: &Tensor<F>,
    bias: &[F],
) -> Result<Tensor<F>> {
    let (&[t, d], &[k, w, d2]) = (input.shape(), filters.shape()) else {
        return Err(Error::ShapeMismatch {
            op: "conv1d_valid",
            left: input.shape().to_vec(),
            right: filters.shape().to_vec(),
        });
    };
    if d != d2 || bias.len() != k {
        return Err(Error::ShapeMismatch {
            op: "conv1d_valid",
            left: input.shape().to_vec(),
            right: filters.shape().to_vec(),
        });
    }
    if t < w {
        return Err(Error::InvalidInput(format!(
            "{t} frames is shorter than convolution width {w}"
        )));
    }
    let t_out = t - w + 1;
    let mut out = vec![F::zero(); t_out * k];
    kernels::conv_forward(input.data(), d, t_out, filters.data(), bias, w, k, &mut out);
    Tensor::from_vec(&[t_out, k], out)
}

/// Non-overlapping max pooling over rows; output has `ceil(T/size)` rows.
pub fn max_pool1d<F: Real>(input: &Tensor<F>, size: usize) -> Result<Tensor<F>> {
    if size == 0 {
        return Err(Error::Config("pool size must be at least 1".into()));
    }
    let &[t, k] = input.shape() else {
        return Err(Error::ShapeMismatch {
            op: "max_pool1d",
            left: input.shape().to_vec(),
            right: vec![],
        });
    };
    let t_out = t.div_ceil(size);
    let mut out = vec![F::zero(); t_out * k];
    let mut argmax = vec![0; t_out * k];
    kernels::max_pool_forward(input.data(), t, k, size, &mut out, &mut argmax);
    Tensor::from_vec(&[t_out, k], out)
}

/// Column-wise logsumexp pooling of a `T'×W` score matrix with sharpness `r`.
///
/// Interpolates between the column mean (`r → 0`) and the column max
/// (`r → ∞`).
pub fn logsumexp_pool<F: Real>(h: &Tensor<F>, r: F) -> Result<Vec<F>> {
    if !(r > F::zero()) || !r.is_finite() {
        return Err(Error::Config(format!(
            "logsumexp pooling sharpness must be positive, got {r}"
        )));
    }
    let &[t, w] = h.shape() else {
        return Err(Error::ShapeMismatch {
            op: "logsumexp_pool",
            left: h.shape().to_vec(),
            right: vec![],
        });
    };
    let mut out = vec![F::zero(); w];
    let mut weights = vec![F::zero(); t * w];
    kernels::logsumexp_pool_forward(h.data(), t, w, r, &mut out, &mut weights);
    Ok(out)
}

/// `activation(weights · input + bias)` for an `M×N` weight matrix.
pub fn dense<F: Real>(
    input: &[F],
    weights: &Tensor<F>,
    bias: &[F],
    activation: Activation,
) -> Result<Vec<F>> {
    let &[m, n] = weights.shape() else {
        return Err(Error::ShapeMismatch {
            op: "dense",
            left: vec![input.len()],
            right: weights.shape().to_vec(),
        });
    };
    if n != input.len() || bias.len() != m {
        return Err(Error::ShapeMismatch {
            op: "dense",
            left: vec![input.len()],
            right: weights.shape().to_vec(),
        });
    }
    let mut out = bias.to_vec();
    F::gemm(1, n, m, F::one(), input, n as isize, 1, weights.data(), 1, n as isize, F::one(), &mut out, m as isize, 1);
    Ok(out.into_iter().map(|v| activation.apply(v)).collect())
}
