//! Float helpers that route through `libm` so the crate builds without `std`.
//!
//! `core` has no `f64::sqrt`/`abs`/… — only `std` provides them. Keeping the
//! shims in one module means the rest of the crate reads like ordinary float
//! code.

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn hypot3(x: f64, y: f64, z: f64) -> f64 {
    sqrt(x * x + y * y + z * z)
}
