//! Scalar math for `f64` call sites.
//!
//! `core` has no transcendental functions, so concrete `f64` code calls these
//! `libm` re-exports; generic code goes through [`num_traits::Float`].

pub use libm::{atan2, ceil, cos, exp, floor, log, log10, pow, round, sin, sqrt};

use core::f64::consts::PI;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// `exp(i * phase)` with the phase first reduced to `[-pi, pi)`.
#[inline]
pub fn cis(phase: f64) -> num_complex::Complex64 {
    let p = wrap_phase(phase);
    num_complex::Complex64::new(cos(p), sin(p))
}

/// Reduce an angle to `[-pi, pi)`.
#[inline]
pub fn wrap_phase(phase: f64) -> f64 {
    let two_pi = 2.0 * PI;
    phase - two_pi * floor((phase + PI) / two_pi)
}

/// `2 * pi * frac(cycles)`; avoids losing precision on very large cycle counts.
#[inline]
pub fn cycles_to_phase(cycles: f64) -> f64 {
    2.0 * PI * (cycles - floor(cycles))
}

pub fn norm3(v: [f64; 3]) -> f64 {
    sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
}

pub fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn add3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
