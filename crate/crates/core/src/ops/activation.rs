use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_out, |v, g| if v > T::zero() { g } else { T::zero() })
}

fn check_alpha<T: Real>(x: &Tensor<T>, alpha: &Tensor<T>) -> Result<()> {
    if alpha.len() != x.shape().c {
        return Err(Error::ChannelMismatch {
            context: "prelu alpha",
            expected: x.shape().c,
            got: alpha.len(),
        });
    }
    Ok(())
}

/// Parametric ReLU with a per-channel slope.
pub fn prelu<T: Real>(x: &Tensor<T>, alpha: &Tensor<T>) -> Result<Tensor<T>> {
    check_alpha(x, alpha)?;
    let c = x.shape().c;
    let a = alpha.data();
    let mut out = x.clone();
    for px in out.data_mut().chunks_exact_mut(c) {
        for (v, &s) in px.iter_mut().zip(a) {
            if *v < T::zero() {
                *v = *v * s;
            }
        }
    }
    out.finite("prelu")
}

/// Returns `(grad_x, grad_alpha)`.
pub fn prelu_backward<T: Real>(
    x: &Tensor<T>,
    alpha: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_alpha(x, alpha)?;
    grad_out.expect_shape(x.shape(), "prelu_backward grad_out")?;
    let c = x.shape().c;
    let a = alpha.data();
    let mut gx = grad_out.clone();
    let mut ga = alloc::vec![0.0f64; c];
    for (gpx, xpx) in gx
        .data_mut()
        .chunks_exact_mut(c)
        .zip(x.data().chunks_exact(c))
    {
        for ch in 0..c {
            if xpx[ch] < T::zero() {
                ga[ch] += (gpx[ch] * xpx[ch]).as_f64();
                gpx[ch] = gpx[ch] * a[ch];
            }
        }
    }
    let ga = Tensor::from_vec(alpha.shape(), ga.into_iter().map(T::from_f64).collect())?;
    Ok((gx, ga))
}

#[inline]
pub(crate) fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm_exp(-v))
    } else {
        let e = libm_exp(v);
        e / (1.0 + e)
    }
}

#[inline]
fn libm_exp(v: f64) -> f64 {
    num_traits::Float::exp(v)
}

pub fn sigmoid<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::from_f64(sigmoid_scalar(v.as_f64())))
}

/// Backward through the sigmoid given its forward output `y`.
pub fn sigmoid_backward<T: Real>(y: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    y.zip_map(grad_out, |s, g| g * s * (T::one() - s))
}
