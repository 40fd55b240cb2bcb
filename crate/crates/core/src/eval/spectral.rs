//! Gram spectra, effective dimension and eigendecay fits.
//!
//! Population eigenvalues are estimated by `mu_j / n`, where `mu_j` are the
//! Gram eigenvalues.

use serde::{Deserialize, Serialize};

use crate::kernels::{gram, KernelSpec};
use crate::linalg::symmetric_eigenvalues;
use crate::{Error, Points, Result};

/// Log-log fits with R^2 below this are flagged as non-polynomial decay.
pub const POLYNOMIAL_R2: f64 = 0.99;
const MIN_FIT_POINTS: usize = 10;

/// Gram eigenvalues in descending order, negatives clipped to zero.
pub fn gram_spectrum(kernel: &KernelSpec, points: &Points) -> Result<Vec<f64>> {
    let k = gram(kernel, points)?;
    let mut eig = symmetric_eigenvalues(&k)?;
    eig.reverse();
    for v in eig.iter_mut() {
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// `sum_j rho_j / (rho_j + lambda)`.
pub fn effective_dimension(eigenvalues: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if eigenvalues.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::invalid("eigenvalues", "must be nonnegative"));
    }
    Ok(eigenvalues.iter().map(|&r| r / (r + lambda)).sum())
}

/// Count of eigenvalues above `mu_1 * len * eps`.
pub fn numerical_rank(eigenvalues: &[f64]) -> usize {
    let top = eigenvalues.iter().copied().fold(0.0, f64::max);
    let tol = top * eigenvalues.len() as f64 * f64::EPSILON;
    eigenvalues.iter().filter(|&&v| v > tol).count()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Decay exponent with `rho_j ~ j^{-2 ell}`.
    pub ell: f64,
    pub ell_stderr: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub j_min: usize,
    pub j_max: usize,
    pub polynomial: bool,
    /// Quadratic coefficient of `ln rho_j` in `ln j` over the fit range;
    /// negative values mean a log-log concave spectrum, the signature of
    /// faster-than-polynomial decay.
    pub curvature: f64,
}

pub(crate) struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub(crate) fn ols(x: &[f64], y: &[f64]) -> Ols {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let slope_stderr = if x.len() > 2 {
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ols {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    }
}

/// OLS fit of `ln rho_j` on `ln j`.
///
/// The range is `j in [2, j_max]`, where `j_max` is the last index above the
/// noise floor `rho_1 * len * eps * 10`, capped at `len / 2`: the upper half of
/// a finite Gram spectrum is dominated by discretization rather than decay.
pub fn eigendecay_fit(eigenvalues: &[f64]) -> Result<DecayFit> {
    let len = eigenvalues.len();
    let top = eigenvalues.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::invalid("eigenvalues", "need a positive leading eigenvalue"));
    }
    if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("eigenvalues", "must be sorted in descending order"));
    }
    let floor = top * len as f64 * f64::EPSILON * 10.0;
    let above = eigenvalues.iter().take_while(|&&v| v > floor).count();
    let j_max = above.min(len / 2);
    let j_min = 2;
    if j_max < j_min || j_max - j_min + 1 < MIN_FIT_POINTS {
        return Err(Error::invalid(
            "eigenvalues",
            format!("only {} usable eigenvalues above the noise floor; need {MIN_FIT_POINTS}", j_max.saturating_sub(1)),
        ));
    }
    let x: Vec<f64> = (j_min..=j_max).map(|j| (j as f64).ln()).collect();
    let y: Vec<f64> = (j_min..=j_max).map(|j| eigenvalues[j - 1].ln()).collect();
    let fit = ols(&x, &y);
    let curvature = quadratic_coefficient(&x, &y);
    Ok(DecayFit {
        ell: -fit.slope / 2.0,
        ell_stderr: fit.slope_stderr / 2.0,
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        j_min,
        j_max,
        polynomial: fit.r_squared >= POLYNOMIAL_R2,
        curvature,
    })
}

/// Leading coefficient of the least-squares parabola through `(x, y)`.
fn quadratic_coefficient(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let t: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let mut m = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (ti, yi) in t.iter().zip(y) {
        let p = [1.0, *ti, ti * ti];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += p[r] * p[c];
            }
            b[r] += p[r] * yi;
        }
    }
    // Cramer's rule for the third unknown.
    let det3 = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det3(m);
    let mut m2 = m;
    for r in 0..3 {
        m2[r][2] = b[r];
    }
    det3(m2) / d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// `mu_j / n`, descending.
    pub eigenvalues: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub effective_dimension: Vec<f64>,
    pub numerical_rank: usize,
    pub decay: Option<DecayFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_error: Option<String>,
}

pub fn spectral_report(kernel: &KernelSpec, points: &Points, lambdas: &[f64]) -> Result<SpectralReport> {
    let n = points.len() as f64;
    let rho: Vec<f64> = gram_spectrum(kernel, points)?.into_iter().map(|m| m / n).collect();
    let effective_dimension = lambdas
        .iter()
        .map(|&l| effective_dimension(&rho, l))
        .collect::<Result<Vec<_>>>()?;
    let (decay, decay_error) = match eigendecay_fit(&rho) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SpectralReport {
        numerical_rank: numerical_rank(&rho),
        eigenvalues: rho,
        lambdas: lambdas.to_vec(),
        effective_dimension,
        decay,
        decay_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BaseKernel, Family, Smoothness};
    use crate::rng;

    #[test]
    fn unit_eigenvalues_closed_form() {
        let e = vec![1.0; 7];
        assert!((effective_dimension(&e, 0.5).unwrap() - 7.0 / 1.5).abs() < 1e-14);
        assert!(effective_dimension(&e, 1e9).unwrap() <= 1e-8 * 7.0);
        assert!(effective_dimension(&e, 0.0).is_err());
    }

    #[test]
    fn power_law_effective_dimension() {
        let rho: Vec<f64> = (1..=10_000).map(|j| (j as f64).powi(-2)).collect();
        let lambda = 1e-4;
        let g = effective_dimension(&rho, lambda).unwrap();
        // Direct summation from the smallest term upward as the oracle.
        let oracle: f64 = rho.iter().rev().map(|&r| r / (r + lambda)).sum();
        assert!((g - oracle).abs() <= 1e-12 * oracle);
        // For rho_j = j^-2 the sum tracks (pi/2) lambda^{-1/2}.
        let scale = std::f64::consts::FRAC_PI_2 / lambda.sqrt();
        assert!(g / scale > 0.9 && g / scale < 1.1, "{}", g / scale);
    }

    #[test]
    fn effective_dimension_decreases() {
        let rho = [0.5, 0.1, 0.01, 0.0];
        let mut prev = f64::INFINITY;
        for e in -6..3 {
            let g = effective_dimension(&rho, 10f64.powi(e)).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn exact_power_law_fit() {
        let rho: Vec<f64> = (1..=60).map(|j| (j as f64).powi(-4)).collect();
        let fit = eigendecay_fit(&rho).unwrap();
        assert!((fit.ell - 2.0).abs() < 1e-10);
        assert!(fit.polynomial);
        assert!(fit.curvature.abs() < 1e-9);
    }

    #[test]
    fn exponential_decay_flagged() {
        let rho: Vec<f64> = (1..=60).map(|j| (-(j as f64)).exp()).collect();
        let fit = eigendecay_fit(&rho).unwrap();
        assert!(!fit.polynomial, "r2 = {}", fit.r_squared);
        assert!(fit.r_squared < POLYNOMIAL_R2);
        assert!(fit.curvature < 0.0);
    }

    #[test]
    fn parabola_coefficient() {
        let x: Vec<f64> = (0..12).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - v + 0.75 * v * v).collect();
        assert!((quadratic_coefficient(&x, &y) - 0.75).abs() < 1e-10);
    }

    #[test]
    fn rbf_spectrum_is_log_concave() {
        let mut r = rng::rng(23);
        let pts = Points::from_scalars(&(0..300).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect::<Vec<_>>());
        let k = KernelSpec::joint(BaseKernel::new(Family::SquaredExponential, 0.3).unwrap());
        let rep = spectral_report(&k, &pts, &[1e-3]).unwrap();
        let fit = rep.decay.expect("enough eigenvalues above the floor");
        assert!(fit.curvature < 0.0);
    }

    #[test]
    fn too_few_eigenvalues() {
        assert!(eigendecay_fit(&[1.0, 0.5, 0.1]).is_err());
        assert!(eigendecay_fit(&[]).is_err());
    }

    #[test]
    fn matern32_decay_band() {
        let mut r = rng::rng(17);
        let pts = Points::from_scalars(&(0..500).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect::<Vec<_>>());
        let k = KernelSpec::joint(BaseKernel::matern(Smoothness::ThreeHalves, 1.0).unwrap());
        let rep = spectral_report(&k, &pts, &[1e-4, 1e-3, 1e-2]).unwrap();
        let fit = rep.decay.unwrap();
        assert!(fit.ell >= 1.6 && fit.ell <= 2.4, "{}", fit.ell);
        assert!(rep.effective_dimension.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn linear_kernel_rank() {
        let mut r = rng::rng(3);
        let q = 4;
        let pts = Points::new(q, (0..200 * q).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect()).unwrap();
        let k = KernelSpec::joint(BaseKernel::new(Family::Linear, 1.0).unwrap());
        let mu = gram_spectrum(&k, &pts).unwrap();
        assert!(numerical_rank(&mu) <= q);
        assert!(mu.windows(2).all(|w| w[0] >= w[1]));
    }
}
