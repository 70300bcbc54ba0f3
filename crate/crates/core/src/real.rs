use core::fmt::{Debug, Display};

/// Storage scalar for tensors.
///
/// Models are stored and executed in `f32`; every kernel is generic so the
/// same code path can be instantiated at `f64` for gradient checking.
/// Kernels accumulate in `f64` regardless of the storage type.
pub trait Real: num_traits::Float + Default + Debug + Display + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn as_f64(self) -> f64 {
        self
    }
}
