//! `f64` transcendental functions that work without `std`.

use num_traits::Float;

#[inline]
pub fn sqrt(v: f64) -> f64 {
    Float::sqrt(v)
}

#[inline]
pub fn exp(v: f64) -> f64 {
    Float::exp(v)
}

#[inline]
pub fn exp2(v: f64) -> f64 {
    Float::exp2(v)
}

#[inline]
pub fn ln(v: f64) -> f64 {
    Float::ln(v)
}

#[inline]
pub fn log2(v: f64) -> f64 {
    Float::log2(v)
}

#[inline]
pub fn log10(v: f64) -> f64 {
    Float::log10(v)
}

#[inline]
pub fn powf(v: f64, e: f64) -> f64 {
    Float::powf(v, e)
}

#[inline]
pub fn powi(v: f64, e: i32) -> f64 {
    Float::powi(v, e)
}

#[inline]
pub fn cos(v: f64) -> f64 {
    Float::cos(v)
}

#[inline]
pub fn sin(v: f64) -> f64 {
    Float::sin(v)
}

#[inline]
pub fn asin(v: f64) -> f64 {
    Float::asin(v)
}
