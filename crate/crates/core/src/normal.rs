//! Standard normal density, distribution and quantile helpers.
//!
//! The distribution function goes through `libm::erfc`, which is accurate to
//! about one ulp; the quantile is only used for initial codebooks.

use statrs::distribution::{ContinuousCDF, Normal};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// `P(a < Z <= b)`, evaluated in whichever tail keeps full relative precision.
pub fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        cdf(-a) - cdf(-b)
    } else {
        cdf(b) - cdf(a)
    }
}

pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
