//! Special functions: trigamma and the standard normal distribution function.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Trigamma function `ψ⁽¹⁾(x)`, the second derivative of `ln Γ(x)`, for `x > 0`.
///
/// Shifts the argument up to `x ≥ 10` with `ψ⁽¹⁾(x) = ψ⁽¹⁾(x+1) + 1/x²` and
/// finishes with the asymptotic expansion in Bernoulli numbers.
pub fn trigamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "trigamma requires a positive finite argument, got {x}"
        )));
    }
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let z = 1.0 / (x * x);
    // 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let series = z
        * (1.0 / 6.0
            + z * (-1.0 / 30.0
                + z * (1.0 / 42.0
                    + z * (-1.0 / 30.0
                        + z * (5.0 / 66.0 + z * (-691.0 / 2730.0 + z * (7.0 / 6.0)))))));
    Ok(acc + 1.0 / x + 0.5 * z + series / x)
}

/// Standard normal survival function `1 − Φ(x)`, via `erfc`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// Standard normal distribution function `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Independent oracle: direct summation of Σ 1/(x+k)² plus an
    // Euler–Maclaurin tail.
    fn trigamma_by_series(x: f64) -> f64 {
        let n = 20_000;
        let head: f64 = (0..n).map(|k| 1.0 / (x + k as f64).powi(2)).sum();
        let a = x + n as f64;
        head + 1.0 / a + 0.5 / (a * a) + 1.0 / (6.0 * a * a * a)
    }

    #[test]
    fn trigamma_known_values() {
        assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-14);
        assert!((trigamma(0.5).unwrap() - PI * PI / 2.0).abs() < 1e-13);
        assert!((trigamma(2.0).unwrap() - (PI * PI / 6.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn trigamma_matches_series() {
        for &x in &[0.001, 0.05, 0.3, 1.7, 4.2, 9.99, 10.0, 25.0, 300.0] {
            let a = trigamma(x).unwrap();
            let b = trigamma_by_series(x);
            assert!(((a - b) / b).abs() < 1e-12, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn trigamma_rejects_nonpositive() {
        assert!(trigamma(0.0).is_err());
        assert!(trigamma(-1.5).is_err());
        assert!(trigamma(f64::NAN).is_err());
    }

    // Positive-term series erf(x) = 2x/√π e^{-x²} Σ (2x²)^n / (2n+1)!!.
    fn erf_series(x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        2.0 * x / PI.sqrt() * (-x * x).exp() * sum
    }

    #[test]
    fn normal_cdf_matches_erf_series() {
        for &x in &[-2.5, -1.0, -0.1, 0.0, 0.5, 1.3, 2.0] {
            let oracle = 0.5 * (1.0 + erf_series(x / SQRT_2));
            assert!((normal_cdf(x) - oracle).abs() < 1e-14, "x={x} {} {oracle}", normal_cdf(x));
            assert!((normal_sf(x) - (1.0 - oracle)).abs() < 1e-14, "x={x}");
        }
    }
}
