//! Log-log rate fits and monotone-trend checks over sweeps.

use serde::{Deserialize, Serialize};

use super::spectral::ols;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub ns: Vec<usize>,
    pub mean_mises: Vec<f64>,
    /// OLS slope of `ln MISE` on `ln n`; negative means convergence.
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub predicted_exponent: Option<f64>,
}

pub fn rate_fit(ns: &[usize], mean_mises: &[f64], predicted_exponent: Option<f64>) -> Result<RateFit> {
    if ns.len() != mean_mises.len() {
        return Err(Error::DimensionMismatch {
            context: "sample sizes vs MISE values",
            expected: ns.len(),
            actual: mean_mises.len(),
        });
    }
    if ns.len() < 3 {
        return Err(Error::invalid("ns", format!("need at least 3 sample sizes, got {}", ns.len())));
    }
    if ns.iter().any(|&n| n == 0) {
        return Err(Error::invalid("ns", "sample sizes must be positive"));
    }
    if let Some(bad) = mean_mises.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::invalid("mean_mises", format!("must be positive and finite, got {bad}")));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    if x.windows(2).all(|w| w[0] == w[1]) {
        return Err(Error::invalid("ns", "need at least two distinct sample sizes"));
    }
    let y: Vec<f64> = mean_mises.iter().map(|m| m.ln()).collect();
    let fit = ols(&x, &y);
    Ok(RateFit {
        ns: ns.to_vec(),
        mean_mises: mean_mises.to_vec(),
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        predicted_exponent,
    })
}

/// Non-increasing trend check of seed-averaged values over an ascending axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendCheck {
    pub xs: Vec<f64>,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Adjacent pairs `(i, i + 1)` with `means[i + 1] > means[i]`.
    pub violations: Vec<usize>,
    /// Increase of each violating pair.
    pub violation_sizes: Vec<f64>,
    /// At most one violation, and that one no larger than the larger SE of the pair.
    pub passed: bool,
}

pub fn trend_check(xs: &[f64], means: &[f64], std_errors: &[f64]) -> Result<TrendCheck> {
    if xs.len() != means.len() || xs.len() != std_errors.len() {
        return Err(Error::DimensionMismatch {
            context: "trend axis vs means and standard errors",
            expected: xs.len(),
            actual: means.len().min(std_errors.len()),
        });
    }
    if xs.len() < 2 {
        return Err(Error::invalid("xs", "need at least two points"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("xs", "must be strictly increasing"));
    }
    let mut violations = Vec::new();
    let mut violation_sizes = Vec::new();
    for i in 0..means.len() - 1 {
        if means[i + 1] > means[i] {
            violations.push(i);
            violation_sizes.push(means[i + 1] - means[i]);
        }
    }
    let passed = match violations.as_slice() {
        [] => true,
        [i] => violation_sizes[0] <= std_errors[*i].max(std_errors[*i + 1]),
        _ => false,
    };
    Ok(TrendCheck {
        xs: xs.to_vec(),
        means: means.to_vec(),
        std_errors: std_errors.to_vec(),
        violations,
        violation_sizes,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_power_law() {
        let ns = [250, 500, 1000, 2000, 4000];
        let m: Vec<f64> = ns.iter().map(|&n| 7.0 * (n as f64).powf(-0.8)).collect();
        let fit = rate_fit(&ns, &m, Some(-0.8)).unwrap();
        assert!((fit.slope + 0.8).abs() < 1e-12);
        assert!((fit.intercept - 7f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn constant_mise() {
        let fit = rate_fit(&[10, 20, 40], &[0.3; 3], None).unwrap();
        assert!(fit.slope.abs() < 1e-14);
    }

    #[test]
    fn rate_errors() {
        assert!(rate_fit(&[10, 20], &[1.0, 0.5], None).is_err());
        assert!(rate_fit(&[10, 20, 40], &[1.0, 0.0, 0.5], None).is_err());
        assert!(rate_fit(&[10, 20, 40], &[1.0, 0.5], None).is_err());
        assert!(rate_fit(&[10, 10, 10], &[1.0, 0.5, 0.2], None).is_err());
    }

    #[test]
    fn trend_rules() {
        let xs = [0.1, 0.2, 0.4, 0.7, 1.0];
        let se = [0.1; 5];
        assert!(trend_check(&xs, &[5.0, 4.0, 3.0, 2.0, 1.0], &se).unwrap().passed);
        let one_small = trend_check(&xs, &[5.0, 4.0, 4.05, 2.0, 1.0], &se).unwrap();
        assert_eq!(one_small.violations, vec![1]);
        assert!(one_small.passed);
        assert!(!trend_check(&xs, &[5.0, 4.0, 4.5, 2.0, 1.0], &se).unwrap().passed);
        assert!(!trend_check(&xs, &[5.0, 5.01, 3.0, 3.01, 1.0], &se).unwrap().passed);
        assert!(trend_check(&[1.0, 0.5], &[1.0, 1.0], &[0.1, 0.1]).is_err());
    }

    proptest! {
        #[test]
        fn recovers_any_power_law(exp in -2.0f64..0.5, scale in 0.01f64..100.0) {
            let ns = [100usize, 300, 900, 2700];
            let m: Vec<f64> = ns.iter().map(|&n| scale * (n as f64).powf(exp)).collect();
            let fit = rate_fit(&ns, &m, None).unwrap();
            prop_assert!((fit.slope - exp).abs() < 1e-10);
        }
    }
}
