//! Test support shared by the integration suites: naive oracles, finite
//! differences and fixtures. Nothing here calls the code under test to compute
//! an expected value.

#![allow(dead_code)]

pub mod fd;
pub mod oracle;

use denoise_core::{Rng, Shape, Tensor};

pub fn shape(n: usize, h: usize, w: usize, c: usize) -> Shape {
    Shape::new(n, h, w, c).unwrap()
}

pub fn uniform32(rng: &mut Rng, s: Shape, lo: f64, hi: f64) -> Tensor<f32> {
    Tensor::uniform(rng, s, lo, hi).unwrap()
}

pub fn uniform64(rng: &mut Rng, s: Shape, lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::uniform(rng, s, lo, hi).unwrap()
}

/// Values with `|v| >= 0.05`, keeping piecewise-linear ops off their kinks.
pub fn off_zero(rng: &mut Rng, s: Shape) -> Tensor<f64> {
    let data = (0..s.volume())
        .map(|_| {
            let m = rng.uniform(0.05, 1.0);
            if rng.coin() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(s, data).unwrap()
}

/// Pairwise-distinct values spaced at least `0.01` apart, in shuffled order.
pub fn distinct(rng: &mut Rng, s: Shape) -> Tensor<f64> {
    let n = s.volume();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    for i in (1..n).rev() {
        v.swap(i, rng.index(i + 1));
    }
    Tensor::from_vec(s, v).unwrap()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn to_f64(t: &Tensor<f32>) -> Vec<f64> {
    t.data().iter().map(|&v| v as f64).collect()
}

/// Clean image plus i.i.d. Gaussian noise, clipped to `[0, 1]`.
pub fn gaussian_noisy(rng: &mut Rng, clean: &Tensor<f32>, sigma: f64) -> Tensor<f32> {
    let mut out = clean.clone();
    for v in out.data_mut() {
        *v = (*v as f64 + sigma * rng.standard_normal()).clamp(0.0, 1.0) as f32;
    }
    out
}

/// Mean squared error computed directly.
pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// `10 log10(1 / mse)`.
pub fn psnr_oracle(a: &[f64], b: &[f64]) -> f64 {
    -10.0 * mse(a, b).log10()
}
