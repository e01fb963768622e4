//! Standard normal helpers and small summary statistics.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::erfc_inv;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`normal_cdf`], polished with one Newton step so the pair
/// round-trips to near machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() || p == 0.5 {
        return z;
    }
    let d = normal_pdf(z);
    if d > 0.0 {
        z - (normal_cdf(z) - p) / d
    } else {
        z
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_quantile_agree() {
        assert_eq!(normal_quantile(0.5), 0.0);
        for &x in &[-5.0, -2.3, -0.1, 0.7, 3.9] {
            assert!((normal_quantile(normal_cdf(x)) - x).abs() < 1e-9, "{x}");
        }
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        for &p in &[1e-7, 0.1, 0.3, 0.975, 0.9999] {
            assert!((normal_cdf(normal_quantile(p)) - p).abs() <= 1e-15 * p.max(1e-3));
        }
    }
}
