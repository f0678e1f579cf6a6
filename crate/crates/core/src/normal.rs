//! Standard normal density, distribution and quantile functions.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

/// 1/sqrt(2*pi)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - cdf(x)` without cancellation.
#[inline]
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// Probability mass of the interval `(a, b]`, accurate in both tails.
pub fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        sf(a) - sf(b)
    } else {
        cdf(b) - cdf(a)
    }
}

/// Inverse of [`cdf`]. Returns the infinities at 0 and 1.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    // One Halley step on the tail that keeps relative precision.
    let r = if x < 0.0 { cdf(x) - p } else { (1.0 - p) - sf(x) };
    let f = pdf(x);
    if f > 0.0 {
        let u = r / f;
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_values() {
        assert!((cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((pdf(0.0) - INV_SQRT_2PI).abs() < 1e-16);
        assert!((cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-15);
        assert!((sf(5.0) - 2.866_515_718_791_933e-7).abs() < 1e-19);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-9, 0.01, 0.3, 0.5, 0.9, 0.999_999] {
            let x = quantile(p);
            assert!(
                (cdf(x) - p).abs() < 1e-14 * p.min(1.0 - p).max(1e-2),
                "p={p} err={}",
                cdf(x) - p
            );
        }
        assert_eq!(quantile(0.0), f64::NEG_INFINITY);
        assert_eq!(quantile(1.0), f64::INFINITY);
    }

    #[test]
    fn mass_of_half_lines() {
        assert!((mass(f64::NEG_INFINITY, 0.0) - 0.5).abs() < 1e-16);
        assert!((mass(0.0, f64::INFINITY) - 0.5).abs() < 1e-16);
        assert!((mass(6.0, 7.0) - (sf(6.0) - sf(7.0))).abs() < 1e-24);
    }
}
