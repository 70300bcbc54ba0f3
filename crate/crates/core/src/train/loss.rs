use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::metrics::{gaussian_window, ssim_stats, Plane, C1, C2, SSIM_SIGMA, SSIM_WINDOW};
use crate::real::Real;
use crate::tensor::Tensor;

/// Standard five-scale MS-SSIM exponents, finest scale first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Floor applied to per-scale terms before exponentiation.
pub const MS_SSIM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    L1,
    L2,
    Charbonnier {
        eps: f64,
    },
    /// `10 log10(MSE + eps)`, i.e. negated PSNR.
    PsnrLoss {
        eps: f64,
    },
    /// `1 - MS-SSIM`; scale count chosen from the image size when absent.
    MsSsim {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scales: Option<usize>,
    },
    Mix {
        terms: Vec<MixTerm>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixTerm {
    pub weight: f64,
    pub loss: LossSpec,
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LossSpec::Charbonnier { eps } | LossSpec::PsnrLoss { eps } if !(*eps > 0.0) => Err(
                Error::InvalidParam(format!("loss epsilon must be positive, got {eps}")),
            ),
            LossSpec::MsSsim { scales: Some(s) } if *s == 0 || *s > MS_SSIM_WEIGHTS.len() => Err(
                Error::InvalidParam(format!("ms_ssim scales must be 1..=5, got {s}")),
            ),
            LossSpec::Mix { terms } => {
                if terms.iter().any(|t| !(t.weight >= 0.0)) {
                    return Err(Error::InvalidParam(
                        "mix weights must be non-negative".into(),
                    ));
                }
                if !(terms.iter().map(|t| t.weight).sum::<f64>() > 0.0) {
                    return Err(Error::InvalidParam(
                        "mix weights must sum to a positive value".into(),
                    ));
                }
                terms.iter().try_for_each(|t| t.loss.validate())
            }
            _ => Ok(()),
        }
    }
}

/// Loss value and its gradient with respect to `pred`.
pub fn loss<T: Real>(
    spec: &LossSpec,
    pred: &Tensor<T>,
    target: &Tensor<T>,
) -> Result<(f64, Tensor<T>)> {
    spec.validate()?;
    target.expect_shape(pred.shape(), "loss target")?;
    let n = pred.len() as f64;
    let diffs = || {
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| p.as_f64() - t.as_f64())
    };
    let grad_from =
        |g: Vec<f64>| Tensor::from_vec(pred.shape(), g.into_iter().map(T::from_f64).collect());
    match spec {
        LossSpec::L1 => {
            let value = diffs().map(f64::abs).sum::<f64>() / n;
            let g = diffs()
                .map(|d| d.signum() * (d != 0.0) as u8 as f64 / n)
                .collect();
            Ok((value, grad_from(g)?))
        }
        LossSpec::L2 => {
            let value = diffs().map(|d| d * d).sum::<f64>() / n;
            let g = diffs().map(|d| 2.0 * d / n).collect();
            Ok((value, grad_from(g)?))
        }
        LossSpec::Charbonnier { eps } => {
            let e2 = eps * eps;
            let value = diffs().map(|d| math::sqrt(d * d + e2)).sum::<f64>() / n;
            let g = diffs().map(|d| d / math::sqrt(d * d + e2) / n).collect();
            Ok((value, grad_from(g)?))
        }
        LossSpec::PsnrLoss { eps } => {
            let mse = diffs().map(|d| d * d).sum::<f64>() / n;
            let value = 10.0 * math::log10(mse + eps);
            let k = 10.0 / (core::f64::consts::LN_10 * (mse + eps));
            let g = diffs().map(|d| k * 2.0 * d / n).collect();
            Ok((value, grad_from(g)?))
        }
        LossSpec::MsSsim { scales } => {
            let (v, g) = ms_ssim_with_grad(pred, target, *scales)?;
            Ok((1.0 - v, g.map(|x| -x)))
        }
        LossSpec::Mix { terms } => {
            let mut value = 0.0;
            let mut grad = vec![0.0f64; pred.len()];
            for t in terms {
                let (v, g) = loss(&t.loss, pred, target)?;
                value += t.weight * v;
                for (acc, gi) in grad.iter_mut().zip(g.data()) {
                    *acc += t.weight * gi.as_f64();
                }
            }
            Ok((value, grad_from(grad)?))
        }
    }
}

/// Largest scale count (at most 5) keeping the coarsest scale at least one window wide.
pub fn auto_scales(h: usize, w: usize) -> Result<usize> {
    let m = h.min(w);
    if m < SSIM_WINDOW {
        return Err(Error::InvalidParam(format!(
            "image {h}x{w} is smaller than one {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    Ok((1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| m >> (s - 1) >= SSIM_WINDOW)
        .unwrap_or(1))
}

/// Mean MS-SSIM over batch items and channels.
pub fn ms_ssim<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    scales: Option<usize>,
) -> Result<f64> {
    Ok(ms_ssim_with_grad(pred, target, scales)?.0)
}

/// MS-SSIM and its gradient with respect to `pred`.
pub fn ms_ssim_with_grad<T: Real>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    scales: Option<usize>,
) -> Result<(f64, Tensor<T>)> {
    target.expect_shape(pred.shape(), "ms_ssim target")?;
    let s = pred.shape();
    let m = match scales {
        Some(m) => {
            if m == 0 || m > MS_SSIM_WEIGHTS.len() || s.h.min(s.w) >> (m - 1) < SSIM_WINDOW {
                return Err(Error::InvalidParam(format!(
                    "{m} scales do not fit a {}x{} image",
                    s.h, s.w
                )));
            }
            m
        }
        None => auto_scales(s.h, s.w)?,
    };
    let wsum: f64 = MS_SSIM_WEIGHTS[..m].iter().sum();
    let weights: Vec<f64> = MS_SSIM_WEIGHTS[..m].iter().map(|w| w / wsum).collect();
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let planes = (s.n * s.c) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0f64; pred.len()];
    for n in 0..s.n {
        for c in 0..s.c {
            let x = Plane::channel(pred, n, c);
            let y = Plane::channel(target, n, c);
            let (v, g) = plane_ms_ssim(&x, &y, &weights, &k);
            total += v;
            for (p, gv) in g.data.iter().enumerate() {
                grad[(n * s.h * s.w + p) * s.c + c] = gv / planes;
            }
        }
    }
    let grad = Tensor::from_vec(s, grad.into_iter().map(T::from_f64).collect())?;
    Ok((total / planes, grad))
}

/// Per-position partial derivatives of a mean map with respect to the local
/// statistics, pushed back to pixels.
fn stats_adjoint(
    x: &Plane,
    y: &Plane,
    k: &[f64],
    d_mu: &[f64],
    d_var: &[f64],
    d_cov: &[f64],
    mu_x: &Plane,
    mu_y: &Plane,
) -> Plane {
    let (oh, ow) = (mu_x.h, mu_x.w);
    // var_x = E[x^2] - mu_x^2, cov = E[xy] - mu_x mu_y.
    let dm: Vec<f64> = (0..d_mu.len())
        .map(|i| d_mu[i] - 2.0 * mu_x.data[i] * d_var[i] - mu_y.data[i] * d_cov[i])
        .collect();
    let g_mu = Plane::new(oh, ow, dm).filter_valid_adjoint(k, x.h, x.w);
    let g_var = Plane::new(oh, ow, d_var.to_vec()).filter_valid_adjoint(k, x.h, x.w);
    let g_cov = Plane::new(oh, ow, d_cov.to_vec()).filter_valid_adjoint(k, x.h, x.w);
    let data = (0..x.data.len())
        .map(|i| g_mu.data[i] + 2.0 * x.data[i] * g_var.data[i] + y.data[i] * g_cov.data[i])
        .collect();
    Plane::new(x.h, x.w, data)
}

/// Mean cs (or full ssim when `with_luminance`) of one scale, with gradient wrt `x`.
fn scale_term(x: &Plane, y: &Plane, k: &[f64], with_luminance: bool) -> (f64, Plane) {
    let st = ssim_stats(x, y, k);
    let cnt = st.mu_x.data.len();
    let inv = 1.0 / cnt as f64;
    let (mut d_mu, mut d_var, mut d_cov) = (vec![0.0; cnt], vec![0.0; cnt], vec![0.0; cnt]);
    let mut total = 0.0;
    for i in 0..cnt {
        let (mx, my) = (st.mu_x.data[i], st.mu_y.data[i]);
        let den = st.var_x.data[i] + st.var_y.data[i] + C2;
        let cs = (2.0 * st.cov.data[i] + C2) / den;
        let (dcs_dcov, dcs_dvar) = (2.0 / den, -cs / den);
        if with_luminance {
            let b = mx * mx + my * my + C1;
            let l = (2.0 * mx * my + C1) / b;
            total += l * cs;
            d_mu[i] = inv * cs * (2.0 * my - 2.0 * mx * l) / b;
            d_var[i] = inv * l * dcs_dvar;
            d_cov[i] = inv * l * dcs_dcov;
        } else {
            total += cs;
            d_var[i] = inv * dcs_dvar;
            d_cov[i] = inv * dcs_dcov;
        }
    }
    let g = stats_adjoint(x, y, k, &d_mu, &d_var, &d_cov, &st.mu_x, &st.mu_y);
    (total * inv, g)
}

/// Adjoint of 2x2 average pooling.
fn upsample_grad(g: &Plane, h: usize, w: usize) -> Plane {
    let mut out = vec![0.0; h * w];
    for y in 0..g.h {
        for x in 0..g.w {
            let v = 0.25 * g.data[y * g.w + x];
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                out[(2 * y + dy) * w + 2 * x + dx] += v;
            }
        }
    }
    Plane::new(h, w, out)
}

fn plane_ms_ssim(x: &Plane, y: &Plane, weights: &[f64], k: &[f64]) -> (f64, Plane) {
    let m = weights.len();
    let mut xs = vec![x.clone()];
    let mut ys = vec![y.clone()];
    for j in 1..m {
        xs.push(xs[j - 1].downsample2());
        ys.push(ys[j - 1].downsample2());
    }
    let terms: Vec<(f64, Plane)> = (0..m)
        .map(|j| scale_term(&xs[j], &ys[j], k, j == m - 1))
        .collect();
    let clamped: Vec<f64> = terms.iter().map(|(v, _)| v.max(MS_SSIM_FLOOR)).collect();
    let value: f64 = clamped
        .iter()
        .zip(weights)
        .map(|(v, w)| math::powf(*v, *w))
        .product();
    // Accumulate from the coarsest scale back to the finest.
    let mut grad: Option<Plane> = None;
    for j in (0..m).rev() {
        let coef = if terms[j].0 > MS_SSIM_FLOOR {
            value * weights[j] / clamped[j]
        } else {
            0.0
        };
        let mut g = terms[j].1.clone();
        g.data.iter_mut().for_each(|v| *v *= coef);
        if let Some(coarse) = grad.take() {
            let up = upsample_grad(&coarse, xs[j].h, xs[j].w);
            g.data.iter_mut().zip(&up.data).for_each(|(a, b)| *a += b);
        }
        grad = Some(g);
    }
    (value, grad.expect("at least one scale"))
}
