//! Fidelity metrics and the runtime-aware challenge score.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::real::Real;
use crate::tensor::Tensor;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape<T: Real>(a: &Tensor<T>, b: &Tensor<T>, ctx: &'static str) -> Result<()> {
    b.expect_shape(a.shape(), ctx)
}

fn mse_slice<T: Real>(a: &[T], b: &[T]) -> f64 {
    let s: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    s / a.len() as f64
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        PSNR_CAP_DB
    } else {
        (-10.0 * math::log10(mse)).min(PSNR_CAP_DB)
    }
}

/// PSNR over the whole tensor, peak 1.0, capped at 100 dB.
pub fn psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    same_shape(a, b, "psnr")?;
    Ok(psnr_from_mse(mse_slice(a.data(), b.data())))
}

/// PSNR of each batch item.
pub fn psnr_per_image<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<f64>> {
    same_shape(a, b, "psnr")?;
    let per = a.len() / a.shape().n;
    Ok(a.data()
        .chunks_exact(per)
        .zip(b.data().chunks_exact(per))
        .map(|(x, y)| psnr_from_mse(mse_slice(x, y)))
        .collect())
}

/// Mean of per-image PSNR values.
pub fn mean_psnr<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let v = psnr_per_image(a, b)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Normalized 1-D Gaussian taps.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let mid = (size as f64 - 1.0) / 2.0;
    let mut w: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - mid;
            math::exp(-d * d / (2.0 * sigma * sigma))
        })
        .collect();
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// A single-channel `h x w` image in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), h * w);
        Self { h, w, data }
    }

    /// Channel `c` of batch item `n`.
    pub fn channel<T: Real>(t: &Tensor<T>, n: usize, c: usize) -> Self {
        let s = t.shape();
        let data = (0..s.h * s.w)
            .map(|p| t.data()[(n * s.h * s.w + p) * s.c + c].as_f64())
            .collect();
        Self::new(s.h, s.w, data)
    }

    /// Rec.601 luma of batch item `n` (single-channel input is passed through).
    pub fn luma<T: Real>(t: &Tensor<T>, n: usize) -> Self {
        let s = t.shape();
        if s.c == 1 {
            return Self::channel(t, n, 0);
        }
        let base = n * s.h * s.w;
        let data = (0..s.h * s.w)
            .map(|p| {
                let px = &t.data()[(base + p) * s.c..];
                0.299 * px[0].as_f64() + 0.587 * px[1].as_f64() + 0.114 * px[2].as_f64()
            })
            .collect();
        Self::new(s.h, s.w, data)
    }

    /// 2x2 average pooling (odd trailing row/column dropped).
    pub fn downsample2(&self) -> Self {
        let (h, w) = (self.h / 2, self.w / 2);
        let mut data = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let at = |yy: usize, xx: usize| self.data[yy * self.w + xx];
                data.push(
                    0.25 * (at(2 * y, 2 * x)
                        + at(2 * y, 2 * x + 1)
                        + at(2 * y + 1, 2 * x)
                        + at(2 * y + 1, 2 * x + 1)),
                );
            }
        }
        Self::new(h, w, data)
    }

    /// Valid-mode separable correlation with `k` along both axes.
    pub fn filter_valid(&self, k: &[f64]) -> Self {
        let n = k.len();
        let (oh, ow) = (self.h + 1 - n, self.w + 1 - n);
        let mut rows = vec![0.0; self.h * ow];
        for y in 0..self.h {
            let src = &self.data[y * self.w..(y + 1) * self.w];
            for x in 0..ow {
                rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
            }
        }
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for (i, &kv) in k.iter().enumerate() {
                let src = &rows[(y + i) * ow..(y + i + 1) * ow];
                for (o, &s) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                    *o += kv * s;
                }
            }
        }
        Self::new(oh, ow, out)
    }

    /// Adjoint of [`Plane::filter_valid`]: scatters an `(h-n+1) x (w-n+1)`
    /// map back onto `h x w`.
    pub fn filter_valid_adjoint(&self, k: &[f64], h: usize, w: usize) -> Self {
        let n = k.len();
        let (oh, ow) = (self.h, self.w);
        debug_assert_eq!((oh + n - 1, ow + n - 1), (h, w));
        let mut rows = vec![0.0; h * ow];
        for y in 0..oh {
            for (i, &kv) in k.iter().enumerate() {
                let dst = &mut rows[(y + i) * ow..(y + i + 1) * ow];
                for (d, &s) in dst.iter_mut().zip(&self.data[y * ow..(y + 1) * ow]) {
                    *d += kv * s;
                }
            }
        }
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..ow {
                let g = rows[y * ow + x];
                for (i, &kv) in k.iter().enumerate() {
                    out[y * w + x + i] += kv * g;
                }
            }
        }
        Self::new(h, w, out)
    }

    fn zip(&self, o: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane::new(
            self.h,
            self.w,
            self.data
                .iter()
                .zip(&o.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }
}

pub const C1: f64 = (SSIM_K1 * 1.0) * (SSIM_K1 * 1.0);
pub const C2: f64 = (SSIM_K2 * 1.0) * (SSIM_K2 * 1.0);

/// Local statistics of two planes under a Gaussian window.
pub(crate) struct SsimStats {
    pub mu_x: Plane,
    pub mu_y: Plane,
    pub var_x: Plane,
    pub var_y: Plane,
    pub cov: Plane,
}

pub(crate) fn ssim_stats(x: &Plane, y: &Plane, k: &[f64]) -> SsimStats {
    let mu_x = x.filter_valid(k);
    let mu_y = y.filter_valid(k);
    let exx = x.zip(x, |a, b| a * b).filter_valid(k);
    let eyy = y.zip(y, |a, b| a * b).filter_valid(k);
    let exy = x.zip(y, |a, b| a * b).filter_valid(k);
    let var_x = exx.zip(&mu_x, |e, m| e - m * m);
    let var_y = eyy.zip(&mu_y, |e, m| e - m * m);
    let mxy = mu_x.zip(&mu_y, |a, b| a * b);
    let cov = exy.zip(&mxy, |e, m| e - m);
    SsimStats {
        mu_x,
        mu_y,
        var_x,
        var_y,
        cov,
    }
}

/// Mean SSIM and mean contrast-structure term of two planes.
pub(crate) fn ssim_and_cs(x: &Plane, y: &Plane, k: &[f64]) -> (f64, f64) {
    let s = ssim_stats(x, y, k);
    let n = s.mu_x.data.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..s.mu_x.data.len() {
        let (mx, my) = (s.mu_x.data[i], s.mu_y.data[i]);
        let l = (2.0 * mx * my + C1) / (mx * mx + my * my + C1);
        let c = (2.0 * s.cov.data[i] + C2) / (s.var_x.data[i] + s.var_y.data[i] + C2);
        ssim += l * c;
        cs += c;
    }
    (ssim / n, cs / n)
}

fn check_window(h: usize, w: usize) -> Result<()> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidParam(alloc::format!(
            "image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    Ok(())
}

/// SSIM of two planes: mean over valid window positions.
pub fn ssim_plane(x: &Plane, y: &Plane) -> Result<f64> {
    check_window(x.h, x.w)?;
    if (x.h, x.w) != (y.h, y.w) {
        return Err(Error::InvalidParam("ssim planes differ in size".into()));
    }
    Ok(ssim_and_cs(x, y, &gaussian_window(SSIM_WINDOW, SSIM_SIGMA)).0)
}

/// SSIM of each batch item, computed on Rec.601 luma.
pub fn ssim_per_image<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Vec<f64>> {
    same_shape(a, b, "ssim")?;
    let s = a.shape();
    check_window(s.h, s.w)?;
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    Ok((0..s.n)
        .map(|n| ssim_and_cs(&Plane::luma(a, n), &Plane::luma(b, n), &k).0)
        .collect())
}

/// Mean luma SSIM over the batch.
pub fn ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let v = ssim_per_image(a, b)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Normalization constant of the challenge score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub c: f64,
}

fn positive(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidParam(alloc::format!(
            "{what} must be positive and finite, got {v}"
        )));
    }
    Ok(())
}

/// `2^(2 psnr) / (C runtime)`, evaluated in log2 space.
pub fn final_score(psnr_db: f64, runtime_ms: f64, cfg: &ScoreConfig) -> Result<f64> {
    positive(runtime_ms, "runtime")?;
    positive(cfg.c, "C")?;
    Ok(math::exp2(
        2.0 * psnr_db - math::log2(cfg.c) - math::log2(runtime_ms),
    ))
}

/// The `C` that makes `final_score(psnr_db, runtime_ms) == target_score`.
pub fn calibrate_c(psnr_db: f64, runtime_ms: f64, target_score: f64) -> Result<ScoreConfig> {
    positive(runtime_ms, "runtime")?;
    positive(target_score, "target score")?;
    Ok(ScoreConfig {
        c: math::exp2(2.0 * psnr_db - math::log2(target_score) - math::log2(runtime_ms)),
    })
}
