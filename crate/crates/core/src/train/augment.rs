use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::real::Real;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AugmentFlags {
    #[serde(default)]
    pub hflip: bool,
    #[serde(default)]
    pub vflip: bool,
    /// Beta(alpha, alpha) mixup between batch items when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixup_alpha: Option<f64>,
}

/// `lambda * a + (1 - lambda) * b`, elementwise.
pub fn blend<T: Real>(a: &Tensor<T>, b: &Tensor<T>, lambda: f64) -> Result<Tensor<T>> {
    a.zip_map(b, |x, y| {
        T::from_f64(lambda * x.as_f64() + (1.0 - lambda) * y.as_f64())
    })
}

/// A noisy/clean pair; both members always receive the same transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair<T: Real = f32> {
    pub noisy: Tensor<T>,
    pub clean: Tensor<T>,
}

impl<T: Real> Pair<T> {
    pub fn flip_horizontal(&self) -> Self {
        Self {
            noisy: self.noisy.flip_horizontal(),
            clean: self.clean.flip_horizontal(),
        }
    }

    pub fn flip_vertical(&self) -> Self {
        Self {
            noisy: self.noisy.flip_vertical(),
            clean: self.clean.flip_vertical(),
        }
    }

    pub fn mixup(&self, other: &Self, lambda: f64) -> Result<Self> {
        Ok(Self {
            noisy: blend(&self.noisy, &other.noisy, lambda)?,
            clean: blend(&self.clean, &other.clean, lambda)?,
        })
    }
}

/// Random flips (p = 0.5 each) per pair, then optional mixup of each pair with
/// a randomly chosen pair from the un-mixed batch.
pub fn augment<T: Real>(rng: &mut Rng, batch: &mut [Pair<T>], flags: &AugmentFlags) -> Result<()> {
    for p in batch.iter_mut() {
        if flags.hflip && rng.coin() {
            *p = p.flip_horizontal();
        }
        if flags.vflip && rng.coin() {
            *p = p.flip_vertical();
        }
    }
    if let Some(alpha) = flags.mixup_alpha {
        let src = batch.to_vec();
        for p in batch.iter_mut() {
            let lambda = rng.beta_symmetric(alpha)?;
            let other = &src[rng.index(src.len())];
            *p = p.mixup(other, lambda)?;
        }
    }
    Ok(())
}
