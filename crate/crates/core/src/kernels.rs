//! Slice-level kernels shared by the graph ops and the standalone layer
//! functions. Sequences are row-major `T×C` blocks; only the first `len`
//! rows of a block are meaningful.

use crate::tensor::Real;

/// `out[t,k] = bias[k] + Σ_{i,d} x[t+i,d]·w[k,i,d]` for `t < t_out`.
///
/// Consecutive window rows of a row-major `T×D` block are contiguous, so the
/// patch matrix is a strided view of `x` with row stride `D`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward<F: Real>(
    x: &[F],
    dim: usize,
    t_out: usize,
    w: &[F],
    bias: &[F],
    width: usize,
    filters: usize,
    out: &mut [F],
) {
    let patch = width * dim;
    for row in out[..t_out * filters].chunks_exact_mut(filters) {
        row.copy_from_slice(bias);
    }
    F::gemm(
        t_out,
        patch,
        filters,
        F::one(),
        x,
        dim as isize,
        1,
        w,
        1,
        patch as isize,
        F::one(),
        out,
        filters as isize,
        1,
    );
}

/// Accumulates weight, bias and input gradients of [`conv_forward`].
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<F: Real>(
    x: &[F],
    dim: usize,
    t_out: usize,
    w: &[F],
    width: usize,
    filters: usize,
    gout: &[F],
    gw: &mut [F],
    gb: &mut [F],
    gx: Option<&mut [F]>,
    scratch: &mut Vec<F>,
) {
    let patch = width * dim;
    for row in gout[..t_out * filters].chunks_exact(filters) {
        for (b, &g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    // gw (K×P) += goutᵀ (K×T) · patches (T×P)
    F::gemm(
        filters,
        t_out,
        patch,
        F::one(),
        gout,
        1,
        filters as isize,
        x,
        dim as isize,
        1,
        F::one(),
        gw,
        patch as isize,
        1,
    );
    if let Some(gx) = gx {
        scratch.clear();
        scratch.resize(t_out * patch, F::zero());
        F::gemm(
            t_out,
            filters,
            patch,
            F::one(),
            gout,
            filters as isize,
            1,
            w,
            patch as isize,
            1,
            F::zero(),
            scratch,
            patch as isize,
            1,
        );
        for (t, row) in scratch.chunks_exact(patch).enumerate() {
            let dst = &mut gx[t * dim..t * dim + patch];
            for (a, &g) in dst.iter_mut().zip(row) {
                *a += g;
            }
        }
    }
}

/// Non-overlapping max pooling over the first `len` rows; the final window
/// may be partial. Ties resolve to the earliest row. Returns the pooled
/// length.
pub(crate) fn max_pool_forward<F: Real>(
    x: &[F],
    len: usize,
    channels: usize,
    size: usize,
    out: &mut [F],
    argmax: &mut [usize],
) -> usize {
    let out_len = len.div_ceil(size);
    for o in 0..out_len {
        let start = o * size;
        let end = (start + size).min(len);
        for c in 0..channels {
            let mut best = start;
            let mut best_v = x[start * channels + c];
            for t in start + 1..end {
                let v = x[t * channels + c];
                if v > best_v {
                    best_v = v;
                    best = t;
                }
            }
            out[o * channels + c] = best_v;
            argmax[o * channels + c] = best;
        }
    }
    out_len
}

/// Column-wise `(1/r)·log((1/len)·Σ_t exp(r·h[t,c]))` over the first `len`
/// rows, shifted by the column max. Writes the softmax weights of each row
/// (the pooling Jacobian) into `weights`.
pub(crate) fn logsumexp_pool_forward<F: Real>(
    h: &[F],
    len: usize,
    channels: usize,
    r: F,
    out: &mut [F],
    weights: &mut [F],
) {
    let log_len = F::from_usize(len).expect("length fits").ln();
    for c in 0..channels {
        let mut m = F::neg_infinity();
        for t in 0..len {
            m = m.max(h[t * channels + c]);
        }
        let mut sum = F::zero();
        for t in 0..len {
            let e = (r * (h[t * channels + c] - m)).exp();
            weights[t * channels + c] = e;
            sum += e;
        }
        for t in 0..len {
            weights[t * channels + c] /= sum;
        }
        out[c] = m + (sum.ln() - log_len) / r;
    }
}

pub(crate) fn sigmoid<F: Real>(v: F) -> F {
    if v >= F::zero() {
        F::one() / (F::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (F::one() + e)
    }
}
