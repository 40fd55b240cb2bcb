use serde::{Deserialize, Serialize};

use crate::tef::{Distribution, Interval};
use crate::{Error, Result};

/// Minimum grid size accepted by [`sup_error`].
pub const SUP_GRID_MIN: usize = 512;

/// Nodes and weights (summing to one) of a quadrature rule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    /// Trapezoid rule for the uniform distribution on `domain`.
    pub fn trapezoid(domain: Interval, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::invalid("points", "trapezoid rule needs at least 2 nodes"));
        }
        let nodes = domain.grid(points);
        let inner = 1.0 / (points - 1) as f64;
        let weights = (0..points)
            .map(|i| if i == 0 || i == points - 1 { 0.5 * inner } else { inner })
            .collect();
        Ok(Quadrature { nodes, weights })
    }

    /// Trapezoid rule for a uniform law; the exact weighted sum over the
    /// support for a discrete one.
    pub fn for_distribution(dist: &Distribution, points: usize) -> Result<Self> {
        match dist.clone().validated()? {
            Distribution::Uniform { lo, hi } => Self::trapezoid(Interval::new(lo, hi)?, points),
            Distribution::Discrete { points, weights } => Ok(Quadrature {
                nodes: points,
                weights,
            }),
        }
    }
}

fn check_pair(estimate: &[f64], truth: &[f64]) -> Result<()> {
    if estimate.is_empty() {
        return Err(Error::Empty("evaluation grid"));
    }
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "estimate vs truth values",
            expected: truth.len(),
            actual: estimate.len(),
        });
    }
    Ok(())
}

/// `sum_k w_k (estimate_k - truth_k)^2` over quadrature nodes.
pub fn mise_quadrature(estimate: &[f64], truth: &[f64], quad: &Quadrature) -> Result<f64> {
    check_pair(estimate, truth)?;
    if quad.weights.len() != estimate.len() {
        return Err(Error::DimensionMismatch {
            context: "quadrature weights vs values",
            expected: quad.weights.len(),
            actual: estimate.len(),
        });
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .zip(&quad.weights)
        .map(|((e, t), w)| w * (e - t) * (e - t))
        .sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMise {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Sample mean of squared differences at reference draws, with its standard error.
pub fn mise_monte_carlo(estimate: &[f64], truth: &[f64]) -> Result<MonteCarloMise> {
    check_pair(estimate, truth)?;
    let sq: Vec<f64> = estimate.iter().zip(truth).map(|(e, t)| (e - t) * (e - t)).collect();
    let m = sq.len();
    let mean = sq.iter().sum::<f64>() / m as f64;
    let std_error = if m > 1 {
        let var = sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(MonteCarloMise {
        mean,
        std_error,
        draws: m,
    })
}

/// Largest absolute difference over a dense grid.
pub fn sup_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(estimate, truth)?;
    if estimate.len() < SUP_GRID_MIN {
        return Err(Error::invalid(
            "grid",
            format!("sup error needs at least {SUP_GRID_MIN} grid points, got {}", estimate.len()),
        ));
    }
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use std::f64::consts::PI;

    fn unit() -> Interval {
        Interval::new(-PI, PI).unwrap()
    }

    #[test]
    fn identical_functions() {
        let q = Quadrature::trapezoid(unit(), 1024).unwrap();
        let v: Vec<f64> = q.nodes.iter().map(|a| a.sin()).collect();
        assert_eq!(mise_quadrature(&v, &v, &q).unwrap(), 0.0);
        assert_eq!(sup_error(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset() {
        let q = Quadrature::trapezoid(unit(), 1024).unwrap();
        let t: Vec<f64> = q.nodes.iter().map(|a| a.cos()).collect();
        let e: Vec<f64> = t.iter().map(|v| v + 0.1).collect();
        assert!((mise_quadrature(&e, &t, &q).unwrap() - 0.01).abs() < 1e-15);
        assert!((q.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bump_sup_error() {
        let t = vec![0.5; 600];
        let mut e = t.clone();
        e[123] += 0.1;
        assert!((sup_error(&e, &t).unwrap() - 0.1).abs() < 1e-15);
        assert!(sup_error(&e[..100], &t[..100]).is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_quadrature() {
        let q = Quadrature::trapezoid(unit(), 1024).unwrap();
        let s: Vec<f64> = q.nodes.iter().map(|a| a.sin()).collect();
        let quad = mise_quadrature(&s, &vec![0.0; 1024], &q).unwrap();
        let mut r = rng::rng(5);
        let draws: Vec<f64> = (0..100_000).map(|_| rng::uniform(&mut r, -PI, PI).sin()).collect();
        let mc = mise_monte_carlo(&draws, &vec![0.0; draws.len()]).unwrap();
        assert!((mc.mean - quad).abs() <= 3.0 * mc.std_error);
        assert!((quad - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sup_dominates_root_mise() {
        let q = Quadrature::trapezoid(Interval::new(0.0, 1.0).unwrap(), 512).unwrap();
        for seed in 0..20 {
            let mut r = rng::rng(seed);
            let e: Vec<f64> = (0..512).map(|_| rng::normal(&mut r)).collect();
            let t = vec![0.0; 512];
            let m = mise_quadrature(&e, &t, &q).unwrap();
            assert!(sup_error(&e, &t).unwrap() + 1e-9 >= m.sqrt());
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let q = Quadrature {
            nodes: vec![],
            weights: vec![],
        };
        assert!(mise_quadrature(&[], &[], &q).is_err());
        assert!(mise_monte_carlo(&[], &[]).is_err());
    }
}
