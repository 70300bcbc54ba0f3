//! Camera pipeline simulation: sRGB to Bayer RAW and back, sensor noise, burst averaging.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::metrics;
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

pub const DEFAULT_BLACK_LEVEL: f64 = 0.0625;
pub const DEFAULT_REJECT_DB: f64 = 25.0;
pub const DIGITAL_GAIN_RANGE: (f64, f64) = (1.0, 8.0);

const DEFAULT_CCM: [[f64; 3]; 3] = [[1.7, -0.5, -0.2], [-0.3, 1.6, -0.3], [-0.2, -0.5, 1.7]];
const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bayer {
    #[default]
    Rggb,
}

impl Bayer {
    /// Color channel sampled at `(y, x)`.
    pub fn site(self, y: usize, x: usize) -> usize {
        match self {
            Bayer::Rggb => match (y % 2, x % 2) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            },
        }
    }
}

/// Forward pipeline: black level, gain, demosaic, color matrix, sRGB gamma, smoothstep tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IspParams {
    pub black_level: f64,
    pub digital_gain: f64,
    /// Device RGB to sRGB, rows summing to 1.
    pub ccm: [[f64; 3]; 3],
    #[serde(default)]
    pub bayer: Bayer,
}

impl Default for IspParams {
    fn default() -> Self {
        Self {
            black_level: DEFAULT_BLACK_LEVEL,
            digital_gain: 1.0,
            ccm: row_normalized(DEFAULT_CCM),
            bayer: Bayer::Rggb,
        }
    }
}

fn row_normalized(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    m.map(|r| {
        let s: f64 = r.iter().sum();
        r.map(|v| v / s)
    })
}

impl IspParams {
    pub fn identity() -> Self {
        Self {
            black_level: 0.0,
            digital_gain: 1.0,
            ccm: IDENTITY,
            bayer: Bayer::Rggb,
        }
    }

    /// Default parameters with the digital gain drawn uniformly from its range.
    pub fn sample(rng: &mut Rng) -> Self {
        Self {
            digital_gain: rng.uniform(DIGITAL_GAIN_RANGE.0, DIGITAL_GAIN_RANGE.1),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.black_level) {
            return Err(Error::InvalidParam(alloc::format!(
                "black_level {} outside [0, 1)",
                self.black_level
            )));
        }
        if !(self.digital_gain > 0.0 && self.digital_gain.is_finite()) {
            return Err(Error::InvalidParam(alloc::format!(
                "digital_gain {} must be positive",
                self.digital_gain
            )));
        }
        for (i, r) in self.ccm.iter().enumerate() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParam(alloc::format!("ccm row {i} sums to {s}, not 1")));
            }
        }
        invert3(&self.ccm).map(|_| ())
    }
}

/// Variance model `a * signal + b` in the linear RAW domain.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub a: f64,
    pub b: f64,
}

impl NoiseParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.a >= 0.0 && self.b >= 0.0 && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParam(alloc::format!(
                "noise coefficients must be finite and non-negative, got a={} b={}",
                self.a,
                self.b
            )))
        }
    }

    pub fn is_zero(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }

    /// Log-uniform draw inside `[lo, hi]` for each coefficient.
    pub fn sample(rng: &mut Rng, lo: NoiseParams, hi: NoiseParams) -> Result<Self> {
        lo.validate()?;
        hi.validate()?;
        let draw = |rng: &mut Rng, l: f64, h: f64| {
            if l > 0.0 && h > l {
                rng.log_uniform(l, h)
            } else {
                rng.uniform(l, h.max(l))
            }
        };
        let a = draw(rng, lo.a, hi.a);
        let b = draw(rng, lo.b, hi.b);
        Self::new(a, b)
    }
}

/// sRGB transfer function, linear to encoded.
pub fn gamma(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    if x <= 0.003_130_8 {
        12.92 * x
    } else {
        1.055 * math::powf(x, 1.0 / 2.4) - 0.055
    }
}

pub fn gamma_inv(v: f64) -> f64 {
    let v = v.clamp(0.0, 1.0);
    if v <= 0.040_45 {
        v / 12.92
    } else {
        math::powf((v + 0.055) / 1.055, 2.4)
    }
}

/// Smoothstep `3x^2 - 2x^3`.
pub fn tone(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Root of the smoothstep cubic on `[0, 1]`.
pub fn tone_inv(y: f64) -> f64 {
    let y = y.clamp(0.0, 1.0);
    0.5 - math::sin(math::asin(1.0 - 2.0 * y) / 3.0)
}

fn invert3(m: &[[f64; 3]; 3]) -> Result<[[f64; 3]; 3]> {
    let c = |r: usize, k: usize| {
        let (r0, r1) = ((r + 1) % 3, (r + 2) % 3);
        let (k0, k1) = ((k + 1) % 3, (k + 2) % 3);
        m[r0][k0] * m[r1][k1] - m[r0][k1] * m[r1][k0]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    if !det.is_finite() || det.abs() < 1e-12 {
        return Err(Error::SingularMatrix);
    }
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = c(k, r) / det;
        }
    }
    Ok(inv)
}

fn apply3(m: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    m.map(|r| r[0] * p[0] + r[1] * p[1] + r[2] * p[2])
}

/// sRGB image `(N, H, W, 3)` to Bayer RAW `(N, H, W, 1)`.
pub fn unprocess(img: &Tensor<f32>, isp: &IspParams) -> Result<Tensor<f32>> {
    isp.validate()?;
    let s = img.shape();
    if s.c != 3 {
        return Err(Error::ChannelMismatch {
            context: "unprocess",
            expected: 3,
            got: s.c,
        });
    }
    check_even(s)?;
    let inv = invert3(&isp.ccm)?;
    let bl = isp.black_level;
    let out_shape = s.with_c(1);
    let mut raw = Vec::with_capacity(out_shape.volume());
    for (i, px) in img.data().chunks_exact(3).enumerate() {
        let y = (i / s.w) % s.h;
        let x = i % s.w;
        let lin = [0, 1, 2].map(|c| gamma_inv(tone_inv(px[c] as f64)));
        let dev = apply3(&inv, lin);
        let v = dev[isp.bayer.site(y, x)] / isp.digital_gain;
        raw.push((bl + v * (1.0 - bl)).clamp(0.0, 1.0) as f32);
    }
    Tensor::from_vec(out_shape, raw)
}

/// Bayer RAW `(N, H, W, 1)` to sRGB `(N, H, W, 3)`.
pub fn reprocess(raw: &Tensor<f32>, isp: &IspParams) -> Result<Tensor<f32>> {
    isp.validate()?;
    let s = raw.shape();
    if s.c != 1 {
        return Err(Error::ChannelMismatch {
            context: "reprocess",
            expected: 1,
            got: s.c,
        });
    }
    check_even(s)?;
    let bl = isp.black_level;
    let scale = isp.digital_gain / (1.0 - bl);
    let lin: Vec<f64> = raw.data().iter().map(|&r| (r as f64 - bl) * scale).collect();
    let rgb = demosaic(&lin, s, isp.bayer);
    let out = rgb
        .chunks_exact(3)
        .flat_map(|p| {
            let srgb = apply3(&isp.ccm, [p[0], p[1], p[2]]);
            srgb.map(|v| tone(gamma(v)) as f32)
        })
        .collect();
    Tensor::from_vec(s.with_c(3), out)
}

fn check_even(s: Shape) -> Result<()> {
    if !s.h.is_multiple_of(2) || !s.w.is_multiple_of(2) {
        return Err(Error::IncompatibleSize {
            h: s.h,
            w: s.w,
            multiple: 2,
        });
    }
    Ok(())
}

/// Reflect without repeating the edge sample, which keeps Bayer parity.
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Bilinear demosaic: each missing channel is the mean of same-color sites in the 3x3 neighborhood.
fn demosaic(raw: &[f64], s: Shape, bayer: Bayer) -> Vec<f64> {
    let mut out = vec![0.0; raw.len() * 3];
    let plane = s.h * s.w;
    for n in 0..s.n {
        let base = n * plane;
        for y in 0..s.h {
            for x in 0..s.w {
                let o = (base + y * s.w + x) * 3;
                let own = bayer.site(y, x);
                let mut sum = [0.0f64; 3];
                let mut cnt = [0u32; 3];
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let yy = mirror(y as isize + dy, s.h);
                        let xx = mirror(x as isize + dx, s.w);
                        let c = bayer.site(yy, xx);
                        sum[c] += raw[base + yy * s.w + xx];
                        cnt[c] += 1;
                    }
                }
                for c in 0..3 {
                    out[o + c] = if c == own {
                        raw[base + y * s.w + x]
                    } else {
                        sum[c] / cnt[c] as f64
                    };
                }
            }
        }
    }
    out
}

/// Heteroscedastic Gaussian stand-in for Poisson-Gaussian noise, clipped to `[0, 1]`.
pub fn add_poisson_gaussian(
    raw: &Tensor<f32>,
    noise: &NoiseParams,
    black_level: f64,
    rng: &mut Rng,
) -> Result<Tensor<f32>> {
    noise.validate()?;
    if noise.is_zero() {
        return Ok(raw.clone());
    }
    let mut out = raw.clone();
    for v in out.data_mut() {
        let signal = (*v as f64 - black_level).max(0.0);
        let var = noise.a * signal + noise.b;
        let y = *v as f64 + math::sqrt(var) * rng.standard_normal();
        *v = y.clamp(0.0, 1.0) as f32;
    }
    Ok(out)
}

/// Returns `(noisy, clean)`, both passed through the same pipeline.
pub fn synth_pair(
    img: &Tensor<f32>,
    isp: &IspParams,
    noise: &NoiseParams,
    rng: &mut Rng,
) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let raw = unprocess(img, isp)?;
    let clean = reprocess(&raw, isp)?;
    let noisy_raw = add_poisson_gaussian(&raw, noise, isp.black_level, rng)?;
    let noisy = reprocess(&noisy_raw, isp)?;
    Ok((noisy, clean))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub image: Tensor<f32>,
    /// Indices of the frames that were averaged.
    pub kept: Vec<usize>,
    /// PSNR of each frame against the per-pixel median.
    pub frame_psnr: Vec<f64>,
}

/// Average a burst after dropping frames whose PSNR against the per-pixel median is
/// below `reject_db`. `None` keeps every frame.
pub fn burst_average(frames: &[Tensor<f32>], reject_db: Option<f64>) -> Result<Burst> {
    if frames.len() < 2 {
        return Err(Error::InvalidParam(alloc::format!(
            "burst needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let shape = frames[0].shape();
    for f in &frames[1..] {
        f.expect_shape(shape, "burst_average")?;
    }
    let median = pixel_median(frames)?;
    let frame_psnr = frames
        .iter()
        .map(|f| metrics::psnr(f, &median))
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<usize> = match reject_db {
        Some(t) => (0..frames.len()).filter(|&i| frame_psnr[i] >= t).collect(),
        None => (0..frames.len()).collect(),
    };
    if kept.is_empty() {
        return Err(Error::AllFramesRejected);
    }
    let mut acc = vec![0.0f64; shape.volume()];
    for &i in &kept {
        for (a, &v) in acc.iter_mut().zip(frames[i].data()) {
            *a += v as f64;
        }
    }
    let k = kept.len() as f64;
    let image = Tensor::from_vec(shape, acc.into_iter().map(|v| (v / k) as f32).collect())?;
    Ok(Burst {
        image,
        kept,
        frame_psnr,
    })
}

fn pixel_median(frames: &[Tensor<f32>]) -> Result<Tensor<f32>> {
    let n = frames.len();
    let mut buf = vec![0.0f32; n];
    let data = (0..frames[0].len())
        .map(|i| {
            for (b, f) in buf.iter_mut().zip(frames) {
                *b = f.data()[i];
            }
            buf.sort_unstable_by(f32::total_cmp);
            if n % 2 == 1 {
                buf[n / 2]
            } else {
                0.5 * (buf[n / 2 - 1] + buf[n / 2])
            }
        })
        .collect();
    Tensor::from_vec(frames[0].shape(), data)
}
