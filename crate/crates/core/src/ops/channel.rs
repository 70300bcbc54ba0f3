//! Channel-axis plumbing (concat, split, slice) and the channel attention block.

use alloc::format;
use alloc::vec::Vec;

use super::activation::{relu, relu_backward, sigmoid, sigmoid_backward};
use super::conv::{conv2d, conv2d_backward, ConvGrads, ConvParams};
use super::pool::{global_avg_pool, global_avg_pool_backward};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if (sa.n, sa.h, sa.w) != (sb.n, sb.h, sb.w) {
        return Err(Error::ShapeMismatch {
            context: "concat_channels",
            expected: sb.with_c(sa.c),
            got: sa,
        });
    }
    let out = sa.with_c(sa.c + sb.c);
    let mut data = Vec::with_capacity(out.volume());
    for (pa, pb) in a.data().chunks_exact(sa.c).zip(b.data().chunks_exact(sb.c)) {
        data.extend_from_slice(pa);
        data.extend_from_slice(pb);
    }
    Tensor::from_vec(out, data)
}

/// Channels `start..start+len` of `x`.
pub fn slice_channels<T: Real>(x: &Tensor<T>, start: usize, len: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    if len == 0 || start + len > s.c {
        return Err(Error::InvalidParam(format!(
            "channel slice {start}..{} of {} channels",
            start + len,
            s.c
        )));
    }
    let mut data = Vec::with_capacity(s.volume() / s.c * len);
    for px in x.data().chunks_exact(s.c) {
        data.extend_from_slice(&px[start..start + len]);
    }
    Tensor::from_vec(s.with_c(len), data)
}

/// Adjoint of [`slice_channels`]: embeds `grad` into zeros of `full` shape.
pub fn slice_channels_backward<T: Real>(
    full: Shape,
    start: usize,
    grad: &Tensor<T>,
) -> Result<Tensor<T>> {
    let len = grad.shape().c;
    if start + len > full.c {
        return Err(Error::InvalidParam("slice backward out of range".into()));
    }
    grad.expect_shape(full.with_c(len), "slice_channels_backward")?;
    let mut out = Tensor::zeros_like_shape(full);
    for (dst, src) in out
        .data_mut()
        .chunks_exact_mut(full.c)
        .zip(grad.data().chunks_exact(len))
    {
        dst[start..start + len].copy_from_slice(src);
    }
    Ok(out)
}

/// Splits into the first `k` channels and the remainder.
pub fn split_channels<T: Real>(x: &Tensor<T>, k: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let c = x.shape().c;
    if k == 0 || k >= c {
        return Err(Error::InvalidParam(format!("split at {k} of {c} channels")));
    }
    Ok((slice_channels(x, 0, k)?, slice_channels(x, k, c - k)?))
}

/// Gradient of `concat_channels(a, b)`: the slices of `grad_out` routed back.
pub fn concat_channels_backward<T: Real>(
    grad_out: &Tensor<T>,
    c_a: usize,
) -> Result<(Tensor<T>, Tensor<T>)> {
    split_channels(grad_out, c_a)
}

/// Squeeze-and-excitation style gating: `x * sigmoid(expand(relu(reduce(gap(x)))))`.
/// `reduce` and `expand` must be ungrouped 1x1 convolutions.
pub fn channel_attention<T: Real>(
    x: &Tensor<T>,
    reduce: &ConvParams<'_, T>,
    expand: &ConvParams<'_, T>,
) -> Result<Tensor<T>> {
    let gate = attention_gate(x, reduce, expand)?.gate;
    scale_channels(x, &gate)
}

struct GateTrace<T: Real> {
    pooled: Tensor<T>,
    reduced: Tensor<T>,
    hidden: Tensor<T>,
    gate: Tensor<T>,
}

fn attention_gate<T: Real>(
    x: &Tensor<T>,
    reduce: &ConvParams<'_, T>,
    expand: &ConvParams<'_, T>,
) -> Result<GateTrace<T>> {
    for p in [reduce, expand] {
        if p.kh() != 1 || p.kw() != 1 || p.groups != 1 {
            return Err(Error::InvalidParam(
                "channel attention projections must be 1x1 convolutions".into(),
            ));
        }
    }
    if expand.c_out() != x.shape().c {
        return Err(Error::ChannelMismatch {
            context: "channel_attention expand",
            expected: x.shape().c,
            got: expand.c_out(),
        });
    }
    let pooled = global_avg_pool(x)?;
    let reduced = conv2d(&pooled, reduce)?;
    let hidden = relu(&reduced);
    let gate = sigmoid(&conv2d(&hidden, expand)?);
    Ok(GateTrace {
        pooled,
        reduced,
        hidden,
        gate,
    })
}

fn scale_channels<T: Real>(x: &Tensor<T>, gate: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    let mut out = x.clone();
    let per = s.h * s.w * s.c;
    for n in 0..s.n {
        let g = &gate.data()[n * s.c..(n + 1) * s.c];
        for px in out.data_mut()[n * per..(n + 1) * per].chunks_exact_mut(s.c) {
            for (v, &gv) in px.iter_mut().zip(g) {
                *v = *v * gv;
            }
        }
    }
    out.finite("channel_attention")
}

/// Gradients of the attention block: input gradient plus `(reduce, expand)` parameter grads.
pub struct AttentionGrads<T: Real> {
    pub input: Tensor<T>,
    pub reduce: ConvGrads<T>,
    pub expand: ConvGrads<T>,
}

pub fn channel_attention_backward<T: Real>(
    x: &Tensor<T>,
    reduce: &ConvParams<'_, T>,
    expand: &ConvParams<'_, T>,
    grad_out: &Tensor<T>,
) -> Result<AttentionGrads<T>> {
    let s = x.shape();
    grad_out.expect_shape(s, "channel_attention_backward grad_out")?;
    let tr = attention_gate(x, reduce, expand)?;
    // Direct path: dy/dx = gate.
    let mut input = scale_channels(grad_out, &tr.gate)?;
    // Gate path: dL/dgate[n, c] = sum over pixels of grad_out * x.
    let per = s.h * s.w * s.c;
    let mut g_gate = alloc::vec![0.0f64; s.n * s.c];
    for n in 0..s.n {
        let xs = &x.data()[n * per..(n + 1) * per];
        let gs = &grad_out.data()[n * per..(n + 1) * per];
        for (xp, gp) in xs.chunks_exact(s.c).zip(gs.chunks_exact(s.c)) {
            for c in 0..s.c {
                g_gate[n * s.c + c] += (xp[c] * gp[c]).as_f64();
            }
        }
    }
    let g_gate = Tensor::from_vec(
        tr.gate.shape(),
        g_gate.into_iter().map(T::from_f64).collect(),
    )?;
    let g_pre = sigmoid_backward(&tr.gate, &g_gate)?;
    let expand_g = conv2d_backward(&tr.hidden, expand, &g_pre)?;
    let g_reduced = relu_backward(&tr.reduced, &expand_g.input)?;
    let reduce_g = conv2d_backward(&tr.pooled, reduce, &g_reduced)?;
    input.add_assign(&global_avg_pool_backward(s, &reduce_g.input)?)?;
    Ok(AttentionGrads {
        input,
        reduce: reduce_g,
        expand: expand_g,
    })
}
