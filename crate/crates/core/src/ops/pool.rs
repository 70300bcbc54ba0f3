//! Spatial resampling: 2x2 max pooling, 2x upsampling and global average pooling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::{Shape, Tensor};

fn half_shape(s: Shape) -> Result<Shape> {
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::InvalidParam(format!(
            "maxpool2 needs even spatial dims, got {}x{}",
            s.h, s.w
        )));
    }
    Shape::new(s.n, s.h / 2, s.w / 2, s.c)
}

/// Row-major index (0..4) of the first maximum in each 2x2 block.
fn argmax_block<T: Real>(
    x: &Tensor<T>,
    n: usize,
    oy: usize,
    ox: usize,
    c: usize,
) -> (usize, usize) {
    let mut best = (2 * oy, 2 * ox);
    let mut best_v = x.get(n, best.0, best.1, c);
    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
        let v = x.get(n, 2 * oy + dy, 2 * ox + dx, c);
        if v > best_v {
            best_v = v;
            best = (2 * oy + dy, 2 * ox + dx);
        }
    }
    best
}

pub fn maxpool2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let out = half_shape(x.shape())?;
    Tensor::from_fn(out, |n, y, xx, c| {
        let (iy, ix) = argmax_block(x, n, y, xx, c);
        x.get(n, iy, ix, c)
    })
}

/// Routes each output gradient to the first maximum of its block (row-major scan).
pub fn maxpool2_backward<T: Real>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let out = half_shape(x.shape())?;
    grad_out.expect_shape(out, "maxpool2_backward grad_out")?;
    let mut gx = Tensor::zeros_like_shape(x.shape());
    for n in 0..out.n {
        for y in 0..out.h {
            for xx in 0..out.w {
                for c in 0..out.c {
                    let (iy, ix) = argmax_block(x, n, y, xx, c);
                    gx.set(n, iy, ix, c, grad_out.get(n, y, xx, c));
                }
            }
        }
    }
    Ok(gx)
}

fn double_shape(s: Shape) -> Shape {
    s.with_hw(s.h * 2, s.w * 2)
}

pub fn upsample_nearest2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    Tensor::from_fn(double_shape(x.shape()), |n, y, xx, c| {
        x.get(n, y / 2, xx / 2, c)
    })
}

pub fn upsample_nearest2_backward<T: Real>(
    x_shape: Shape,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    grad_out.expect_shape(double_shape(x_shape), "upsample_nearest2_backward grad_out")?;
    Tensor::from_fn(x_shape, |n, y, xx, c| {
        let s = grad_out.get(n, 2 * y, 2 * xx, c).as_f64()
            + grad_out.get(n, 2 * y, 2 * xx + 1, c).as_f64()
            + grad_out.get(n, 2 * y + 1, 2 * xx, c).as_f64()
            + grad_out.get(n, 2 * y + 1, 2 * xx + 1, c).as_f64();
        T::from_f64(s)
    })
}

/// Per-output-index `(i0, i1, weight_of_i1)` for 2x bilinear upsampling with
/// half-pixel centres (align-corners = false); source positions are clamped at 0.
fn bilinear_taps(input: usize) -> Vec<(usize, usize, f64)> {
    (0..input * 2)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample_bilinear2<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    let (ty, tx) = (bilinear_taps(s.h), bilinear_taps(s.w));
    Tensor::from_fn(double_shape(s), |n, y, xx, c| {
        let (y0, y1, ly) = ty[y];
        let (x0, x1, lx) = tx[xx];
        let top = x.get(n, y0, x0, c).as_f64() * (1.0 - lx) + x.get(n, y0, x1, c).as_f64() * lx;
        let bot = x.get(n, y1, x0, c).as_f64() * (1.0 - lx) + x.get(n, y1, x1, c).as_f64() * lx;
        T::from_f64(top * (1.0 - ly) + bot * ly)
    })
}

pub fn upsample_bilinear2_backward<T: Real>(
    x_shape: Shape,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let out = double_shape(x_shape);
    grad_out.expect_shape(out, "upsample_bilinear2_backward grad_out")?;
    let (ty, tx) = (bilinear_taps(x_shape.h), bilinear_taps(x_shape.w));
    let mut acc = vec![0.0f64; x_shape.volume()];
    for n in 0..out.n {
        for y in 0..out.h {
            let (y0, y1, ly) = ty[y];
            for xx in 0..out.w {
                let (x0, x1, lx) = tx[xx];
                for c in 0..out.c {
                    let g = grad_out.get(n, y, xx, c).as_f64();
                    acc[x_shape.offset(n, y0, x0, c)] += g * (1.0 - ly) * (1.0 - lx);
                    acc[x_shape.offset(n, y0, x1, c)] += g * (1.0 - ly) * lx;
                    acc[x_shape.offset(n, y1, x0, c)] += g * ly * (1.0 - lx);
                    acc[x_shape.offset(n, y1, x1, c)] += g * ly * lx;
                }
            }
        }
    }
    Tensor::from_vec(x_shape, acc.into_iter().map(T::from_f64).collect())
}

/// Per-channel spatial mean, shape `(n, 1, 1, c)`.
pub fn global_avg_pool<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    let hw = (s.h * s.w) as f64;
    let mut acc = vec![0.0f64; s.n * s.c];
    for n in 0..s.n {
        let per = s.h * s.w * s.c;
        for px in x.data()[n * per..(n + 1) * per].chunks_exact(s.c) {
            for (a, v) in acc[n * s.c..(n + 1) * s.c].iter_mut().zip(px) {
                *a += v.as_f64();
            }
        }
    }
    Tensor::from_vec(
        Shape::new(s.n, 1, 1, s.c)?,
        acc.into_iter().map(|v| T::from_f64(v / hw)).collect(),
    )
}

pub fn global_avg_pool_backward<T: Real>(
    x_shape: Shape,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    grad_out.expect_shape(
        Shape::new(x_shape.n, 1, 1, x_shape.c)?,
        "global_avg_pool_backward",
    )?;
    let hw = (x_shape.h * x_shape.w) as f64;
    Tensor::from_fn(x_shape, |n, _, _, c| {
        T::from_f64(grad_out.get(n, 0, 0, c).as_f64() / hw)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t(h: usize, w: usize, v: &[f32]) -> Tensor<f32> {
        Tensor::from_vec(Shape::new(1, h, w, 1).unwrap(), v.to_vec()).unwrap()
    }

    #[test]
    fn maxpool_basic() {
        assert_eq!(
            maxpool2(&t(2, 2, &[1., 2., 3., 4.])).unwrap().data(),
            &[4.0]
        );
        let c = Tensor::<f32>::full((1, 4, 4, 2), 0.7).unwrap();
        assert!(maxpool2(&c).unwrap().data().iter().all(|&v| v == 0.7));
        assert!(maxpool2(&t(3, 2, &[0.; 6])).is_err());
    }

    #[test]
    fn maxpool_backward_ties_go_to_first() {
        let x = t(2, 2, &[5., 5., 5., 5.]);
        let g = maxpool2_backward(&x, &t(1, 1, &[1.0])).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
        let x = t(2, 2, &[1., 3., 3., 2.]);
        let g = maxpool2_backward(&x, &t(1, 1, &[2.0])).unwrap();
        assert_eq!(g.data(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn nearest_upsample() {
        let y = upsample_nearest2(&t(2, 2, &[1., 2., 3., 4.])).unwrap();
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
    }

    #[test]
    fn bilinear_half_pixel_row() {
        let y = upsample_bilinear2(&t(1, 2, &[0., 1.])).unwrap();
        assert_eq!(y.shape().w, 4);
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_constant() {
        let c = Tensor::<f32>::full((1, 3, 5, 2), 0.3).unwrap();
        assert!(upsample_nearest2(&c)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 0.3));
        assert!(upsample_bilinear2(&c)
            .unwrap()
            .data()
            .iter()
            .all(|&v| (v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn gap_values() {
        assert_eq!(
            global_avg_pool(&t(2, 2, &[1., 2., 3., 4.])).unwrap().data(),
            &[2.5]
        );
        let c = Tensor::<f32>::full((2, 3, 3, 4), 1.5).unwrap();
        assert!(global_avg_pool(&c)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v == 1.5));
    }

    #[test]
    fn upsample_adjoints() {
        let mut rng = Rng::new(1);
        let x = Tensor::<f64>::uniform(&mut rng, (1, 3, 4, 2), -1.0, 1.0).unwrap();
        let r = Tensor::<f64>::uniform(&mut rng, (1, 6, 8, 2), -1.0, 1.0).unwrap();
        let lhs = upsample_bilinear2(&x).unwrap().dot(&r).unwrap();
        let rhs = x
            .dot(&upsample_bilinear2_backward(x.shape(), &r).unwrap())
            .unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
        let lhs = upsample_nearest2(&x).unwrap().dot(&r).unwrap();
        let rhs = x
            .dot(&upsample_nearest2_backward(x.shape(), &r).unwrap())
            .unwrap();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
