//! Thin wrappers over `libm` so float code reads the same with or without std.

pub(crate) use core::f64::consts::{PI, TAU};

#[inline]
pub(crate) fn cos(x: f64) -> f64 {
    libm::cos(x)
}
#[inline]
pub(crate) fn sin(x: f64) -> f64 {
    libm::sin(x)
}
#[inline]
pub(crate) fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}
#[inline]
pub(crate) fn acos(x: f64) -> f64 {
    libm::acos(x)
}
#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}
#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}
#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}
#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
#[inline]
pub(crate) fn hypot(x: f64, y: f64) -> f64 {
    libm::hypot(x, y)
}
#[inline]
pub(crate) fn fmod(x: f64, y: f64) -> f64 {
    libm::fmod(x, y)
}
#[inline]
pub(crate) fn powi(x: f64, n: u64) -> f64 {
    libm::pow(x, n as f64)
}
#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}
#[inline]
pub(crate) fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}
