//! Dense rank-4 tensors in NHWC layout.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::Rng;

/// `(n, h, w, c)`: batch, rows, columns, channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub n: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub fn new(n: usize, h: usize, w: usize, c: usize) -> Result<Self> {
        if n == 0 || h == 0 || w == 0 || c == 0 {
            return Err(Error::ZeroDim);
        }
        Ok(Self { n, h, w, c })
    }

    pub fn volume(&self) -> usize {
        self.n * self.h * self.w * self.c
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.h, self.w, self.c]
    }

    /// Same shape with a different channel count.
    pub fn with_c(self, c: usize) -> Self {
        Self { c, ..self }
    }

    pub fn with_hw(self, h: usize, w: usize) -> Self {
        Self { h, w, ..self }
    }

    #[inline(always)]
    pub fn offset(&self, n: usize, y: usize, x: usize, c: usize) -> usize {
        ((n * self.h + y) * self.w + x) * self.c + c
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.h, self.w, self.c)
    }
}

/// Anything that can be validated into a [`Shape`].
pub trait IntoShape {
    fn into_shape(self) -> Result<Shape>;
}

impl IntoShape for Shape {
    fn into_shape(self) -> Result<Shape> {
        Shape::new(self.n, self.h, self.w, self.c)
    }
}

impl IntoShape for (usize, usize, usize, usize) {
    fn into_shape(self) -> Result<Shape> {
        Shape::new(self.0, self.1, self.2, self.3)
    }
}

/// Dense NHWC tensor; channel is the fastest-varying index.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Real = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview = &self.data[..self.data.len().min(8)];
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .finish()
    }
}

impl<T: Real> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.volume() == 0 {
            return Err(Error::ZeroDim);
        }
        if data.len() != shape.volume() {
            return Err(Error::DataLength {
                expected: shape.volume(),
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn full(shape: impl IntoShape, value: T) -> Result<Self> {
        let shape = shape.into_shape()?;
        Ok(Self {
            shape,
            data: vec![value; shape.volume()],
        })
    }

    pub fn zeros(shape: impl IntoShape) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: impl IntoShape) -> Result<Self> {
        Self::full(shape, T::one())
    }

    /// Zeros of an already-validated shape.
    pub(crate) fn zeros_like_shape(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![T::zero(); shape.volume()],
        }
    }

    pub fn from_fn(
        shape: impl IntoShape,
        mut f: impl FnMut(usize, usize, usize, usize) -> T,
    ) -> Result<Self> {
        let shape = shape.into_shape()?;
        let mut data = Vec::with_capacity(shape.volume());
        for n in 0..shape.n {
            for y in 0..shape.h {
                for x in 0..shape.w {
                    for c in 0..shape.c {
                        data.push(f(n, y, x, c));
                    }
                }
            }
        }
        Ok(Self { shape, data })
    }

    /// Samples from `U(lo, hi)`.
    pub fn uniform(rng: &mut Rng, shape: impl IntoShape, lo: f64, hi: f64) -> Result<Self> {
        let shape = shape.into_shape()?;
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(Error::InvalidParam(format!("uniform bounds [{lo}, {hi}]")));
        }
        let data = (0..shape.volume())
            .map(|_| T::from_f64(rng.uniform(lo, hi)))
            .collect();
        Ok(Self { shape, data })
    }

    /// Samples from `N(mean, std^2)`.
    pub fn normal(rng: &mut Rng, shape: impl IntoShape, mean: f64, std: f64) -> Result<Self> {
        let shape = shape.into_shape()?;
        if !(std >= 0.0 && std.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidParam(format!("normal mean={mean} std={std}")));
        }
        let data = (0..shape.volume())
            .map(|_| T::from_f64(mean + std * rng.standard_normal()))
            .collect();
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, n: usize, y: usize, x: usize, c: usize) -> T {
        self.data[self.shape.offset(n, y, x, c)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, y: usize, x: usize, c: usize, v: T) {
        let o = self.shape.offset(n, y, x, c);
        self.data[o] = v;
    }

    /// Reinterpret with a new shape of equal volume.
    pub fn reshape(self, shape: Shape) -> Result<Self> {
        Self::from_vec(shape, self.data)
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor<T>, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        self.expect_shape(other.shape, "elementwise")?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(other, |a, b| a + b)?.finite("add")
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(other, |a, b| a - b)?.finite("sub")
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.zip_map(other, |a, b| a * b)?.finite("mul")
    }

    pub fn add_scalar(&self, s: T) -> Result<Tensor<T>> {
        self.map(|v| v + s).finite("add_scalar")
    }

    pub fn mul_scalar(&self, s: T) -> Result<Tensor<T>> {
        self.map(|v| v * s).finite("mul_scalar")
    }

    pub fn sub_scalar(&self, s: T) -> Result<Tensor<T>> {
        self.map(|v| v - s).finite("sub_scalar")
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.expect_shape(other.shape, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.map(|v| v.max(lo).min(hi))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn dot(&self, other: &Tensor<T>) -> Result<f64> {
        self.expect_shape(other.shape, "dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Result<f64> {
        self.expect_shape(other.shape, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Returns `self` if every value is finite, otherwise a [`Error::NonFinite`].
    pub fn finite(self, context: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(context.into()))
        }
    }

    pub fn expect_shape(&self, shape: Shape, context: &'static str) -> Result<()> {
        if self.shape != shape {
            return Err(Error::ShapeMismatch {
                context,
                expected: shape,
                got: self.shape,
            });
        }
        Ok(())
    }

    /// Batch item `n` as a `(1, h, w, c)` tensor.
    pub fn item(&self, n: usize) -> Tensor<T> {
        let per = self.shape.h * self.shape.w * self.shape.c;
        Tensor {
            shape: Shape { n: 1, ..self.shape },
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Stack `(1, h, w, c)` tensors along the batch axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Tensor<T>> {
        let first = items.first().ok_or(Error::ZeroDim)?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            t.expect_shape(first.shape, "stack")?;
            data.extend_from_slice(&t.data);
        }
        let shape = Shape {
            n: items.len() * first.shape.n,
            ..first.shape
        };
        Ok(Tensor { shape, data })
    }

    /// Crop the spatial window `[y0, y0+h) x [x0, x0+w)`.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor<T>> {
        let s = self.shape;
        if h == 0 || w == 0 || y0 + h > s.h || x0 + w > s.w {
            return Err(Error::InvalidParam(format!(
                "crop {h}x{w} at ({y0},{x0}) outside {s}"
            )));
        }
        let out = Shape { h, w, ..s };
        let mut data = Vec::with_capacity(out.volume());
        for n in 0..s.n {
            for y in y0..y0 + h {
                let start = s.offset(n, y, x0, 0);
                data.extend_from_slice(&self.data[start..start + w * s.c]);
            }
        }
        Ok(Tensor { shape: out, data })
    }

    pub fn flip_horizontal(&self) -> Tensor<T> {
        let s = self.shape;
        let mut out = Self::zeros_like_shape(s);
        for n in 0..s.n {
            for y in 0..s.h {
                for x in 0..s.w {
                    let src = s.offset(n, y, x, 0);
                    let dst = s.offset(n, y, s.w - 1 - x, 0);
                    out.data[dst..dst + s.c].copy_from_slice(&self.data[src..src + s.c]);
                }
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> Tensor<T> {
        let s = self.shape;
        let row = s.w * s.c;
        let mut out = Self::zeros_like_shape(s);
        for n in 0..s.n {
            for y in 0..s.h {
                let src = s.offset(n, y, 0, 0);
                let dst = s.offset(n, s.h - 1 - y, 0, 0);
                out.data[dst..dst + row].copy_from_slice(&self.data[src..src + row]);
            }
        }
        out
    }

    /// Reflect-pad (mirror without repeating the edge) at the bottom and right.
    pub fn reflect_pad(&self, pad_h: usize, pad_w: usize) -> Result<Tensor<T>> {
        let s = self.shape;
        if (pad_h > 0 && pad_h >= s.h) || (pad_w > 0 && pad_w >= s.w) {
            return Err(Error::InvalidParam(format!(
                "reflect pad ({pad_h}, {pad_w}) too large for {s}"
            )));
        }
        let out_shape = s.with_hw(s.h + pad_h, s.w + pad_w);
        let reflect = |i: usize, len: usize| if i < len { i } else { 2 * len - 2 - i };
        Tensor::from_fn(out_shape, |n, y, x, c| {
            self.get(n, reflect(y, s.h), reflect(x, s.w), c)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: usize, h: usize, w: usize, c: usize) -> Shape {
        Shape::new(n, h, w, c).unwrap()
    }

    #[test]
    fn full_zeros_ones() {
        let t = Tensor::<f32>::full((1, 1, 1, 1), 0.5).unwrap();
        assert_eq!(t.data(), &[0.5]);
        let z = Tensor::<f32>::zeros((1, 2, 2, 1)).unwrap();
        assert_eq!(z.data(), &[0.0; 4]);
        let o = Tensor::<f32>::ones((2, 1, 1, 3)).unwrap();
        assert_eq!(o.sum(), 6.0);
    }

    #[test]
    fn zero_dim_rejected() {
        assert_eq!(
            Tensor::<f32>::zeros((1, 0, 2, 1)).unwrap_err(),
            Error::ZeroDim
        );
    }

    #[test]
    fn arithmetic_identities() {
        let mut rng = Rng::new(1);
        let x = Tensor::<f32>::uniform(&mut rng, (1, 3, 3, 2), -1.0, 1.0).unwrap();
        assert_eq!(x.add_scalar(0.0).unwrap(), x);
        assert_eq!(x.mul_scalar(1.0).unwrap(), x);
        let a = Tensor::<f32>::full((1, 1, 1, 1), 3.0).unwrap();
        let b = Tensor::<f32>::full((1, 1, 1, 1), 1.0).unwrap();
        assert_eq!(a.sub(&b).unwrap().data(), &[2.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = Tensor::<f32>::zeros((1, 2, 2, 1)).unwrap();
        let b = Tensor::<f32>::zeros((1, 2, 2, 2)).unwrap();
        assert!(matches!(a.add(&b), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_is_an_error() {
        let a = Tensor::<f32>::full((1, 1, 1, 1), f32::MAX).unwrap();
        assert!(matches!(a.mul_scalar(10.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn inputs_unmodified() {
        let a = Tensor::<f32>::full((1, 2, 2, 1), 2.0).unwrap();
        let copy = a.clone();
        let _ = a.add(&a).unwrap();
        assert_eq!(a, copy);
    }

    #[test]
    fn nhwc_round_trip() {
        let s = shape(2, 3, 4, 5);
        let mut t = Tensor::<f32>::zeros(s).unwrap();
        let mut k = 0.0;
        for n in 0..2 {
            for y in 0..3 {
                for x in 0..4 {
                    for c in 0..5 {
                        t.set(n, y, x, c, k);
                        assert_eq!(t.data()[((n * 3 + y) * 4 + x) * 5 + c], k);
                        k += 1.0;
                    }
                }
            }
        }
        let mut k = 0.0;
        for n in 0..2 {
            for y in 0..3 {
                for x in 0..4 {
                    for c in 0..5 {
                        assert_eq!(t.get(n, y, x, c), k);
                        k += 1.0;
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_normal() {
        let mut rng = Rng::new(0);
        let t = Tensor::<f32>::normal(&mut rng, (1, 4, 4, 1), 0.3, 0.0).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.3));
        assert!(Tensor::<f32>::normal(&mut rng, (1, 1, 1, 1), 0.0, -1.0).is_err());
    }

    #[test]
    fn uniform_mean_monte_carlo() {
        let mut rng = Rng::new(42);
        let t = Tensor::<f64>::uniform(&mut rng, (1, 1000, 1000, 1), 0.0, 1.0).unwrap();
        assert!((t.mean() - 0.5).abs() < 0.01);
    }

    #[test]
    fn seeded_sampling_is_bit_identical() {
        let a = Tensor::<f32>::normal(&mut Rng::new(9), (1, 8, 8, 3), 0.0, 1.0).unwrap();
        let b = Tensor::<f32>::normal(&mut Rng::new(9), (1, 8, 8, 3), 0.0, 1.0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn double_flip_is_identity() {
        let mut rng = Rng::new(5);
        let t = Tensor::<f32>::uniform(&mut rng, (2, 3, 5, 2), 0.0, 1.0).unwrap();
        assert_eq!(t.flip_horizontal().flip_horizontal(), t);
        assert_eq!(t.flip_vertical().flip_vertical(), t);
    }

    #[test]
    fn reflect_pad_then_crop() {
        let t = Tensor::<f32>::from_fn((1, 3, 3, 1), |_, y, x, _| (y * 3 + x) as f32).unwrap();
        let p = t.reflect_pad(1, 1).unwrap();
        assert_eq!(p.shape().h, 4);
        assert_eq!(p.get(0, 3, 0, 0), t.get(0, 1, 0, 0));
        assert_eq!(p.crop(0, 0, 3, 3).unwrap(), t);
    }
}
