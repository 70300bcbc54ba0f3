use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScheduleSpec {
    Constant {
        lr: f64,
    },
    /// `lr_min + (lr_max - lr_min)(1 + cos(pi t / T)) / 2`, held at `lr_min` after `T`.
    Cosine {
        lr_max: f64,
        lr_min: f64,
        total: u64,
    },
    /// Triangular wave starting at `lr_min`, peaking at `lr_max` mid-period.
    Cyclical {
        lr_max: f64,
        lr_min: f64,
        period: u64,
    },
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScheduleSpec::Constant { lr } => lr > 0.0,
            ScheduleSpec::Cosine {
                lr_max,
                lr_min,
                total,
            } => lr_min >= 0.0 && lr_min <= lr_max && total > 0,
            ScheduleSpec::Cyclical {
                lr_max,
                lr_min,
                period,
            } => lr_min >= 0.0 && lr_min <= lr_max && period > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(alloc::format!(
                "invalid schedule {self:?}"
            )))
        }
    }

    pub fn lr_at(&self, t: u64) -> f64 {
        match *self {
            ScheduleSpec::Constant { lr } => lr,
            ScheduleSpec::Cosine {
                lr_max,
                lr_min,
                total,
            } => {
                let frac = t.min(total) as f64 / total as f64;
                let v = lr_min
                    + 0.5 * (lr_max - lr_min) * (1.0 + math::cos(core::f64::consts::PI * frac));
                v.clamp(lr_min, lr_max)
            }
            ScheduleSpec::Cyclical {
                lr_max,
                lr_min,
                period,
            } => {
                let phase = (t % period) as f64 / period as f64;
                let tri = 1.0 - (2.0 * phase - 1.0).abs();
                lr_min + (lr_max - lr_min) * tri
            }
        }
    }
}
