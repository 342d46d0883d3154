//! Standard normal distribution and quantile function.

use statrs::distribution::{ContinuousCDF, Normal};

fn standard() -> Normal {
    Normal::standard()
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// Standard normal quantile.
pub fn inv_cdf(p: f64) -> f64 {
    standard().inverse_cdf(p)
}
