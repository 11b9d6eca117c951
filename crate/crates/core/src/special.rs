//! Scalar special functions used across the crate.

/// 1 / sqrt(2 pi).
pub const INV_SQRT_2PI: f64 = 0.398942280401432677939946059934;

/// Error function, Abramowitz-Stegun 7.1.26 rational approximation.
/// Absolute error below 1.5e-7, plenty for distribution-level checks.
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal density.
pub fn standard_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Normal density with the given mean and standard deviation.
pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    standard_normal_pdf((x - mean) / sd) / sd
}

/// Standard normal distribution function.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn erf_reference_points() {
        assert!(erf(0.0).abs() < 1.5e-7);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1.5e-7);
        assert!((erf(-1.0) + erf(1.0)).abs() < 1e-15);
        assert!(erf(6.0) > 1.0 - 1e-7);
    }

    #[test]
    fn normal_reference_points() {
        assert_relative_eq!(
            standard_normal_pdf(0.0),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        assert!((standard_normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((standard_normal_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-6);
        assert_relative_eq!(
            normal_pdf(2.0, 1.0, 2.0),
            standard_normal_pdf(0.5) / 2.0,
            epsilon = 1e-15
        );
    }
}
