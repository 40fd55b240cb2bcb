//! Median-heuristic length scales.
//!
//! For a correlation target `rho` the candidate length scale solves
//! `K(r_med; l) / K(0; l) = rho`, where `r_med` is the median pairwise
//! distance. The correlation is strictly increasing in `l`, so plain
//! bisection on a wide bracket is enough.

use serde::{Deserialize, Serialize};

use super::{BaseKernel, Family};
use crate::{rng, Error, Points, Result};

/// Points beyond this count are subsampled before the O(n^2) median.
const MEDIAN_EXACT_LIMIT: usize = 2000;
const SUBSAMPLE_SEED: u64 = 0x6d65_6469_616e;
const BRACKET: (f64, f64) = (1e-6, 1e6);
const MAX_ITER: usize = 200;
const ROOT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthScaleGrid {
    pub correlation_targets: Vec<f64>,
    pub solved_scales: Vec<f64>,
    pub median_distance: f64,
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, &mut hi, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Median Euclidean distance over all unordered pairs of distinct indices.
///
/// Above 2000 points a seeded subsample of 2000 points is used.
pub fn median_pairwise_distance(points: &Points) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("points", "need at least two points for a pairwise median"));
    }
    let sample;
    let pts = if points.len() > MEDIAN_EXACT_LIMIT {
        let mut r = rng::rng(SUBSAMPLE_SEED);
        let mut idx = rng::permutation(&mut r, points.len());
        idx.truncate(MEDIAN_EXACT_LIMIT);
        idx.sort_unstable();
        sample = points.select(&idx);
        &sample
    } else {
        points
    };
    let n = pts.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        let zi = pts.row(i);
        for j in i + 1..n {
            let d2: f64 = zi.iter().zip(pts.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            dists.push(d2.sqrt());
        }
    }
    Ok(median(&mut dists))
}

fn solve_one(family: Family, r_med: f64, rho: f64) -> Result<f64> {
    let corr = |l: f64| -> f64 {
        BaseKernel {
            family,
            length_scale: l,
            variance: 1.0,
        }
        .correlation(r_med)
        .expect("stationary family")
    };
    let (mut lo, mut hi) = (r_med * BRACKET.0, r_med * BRACKET.1);
    if !(corr(lo) < rho && corr(hi) > rho) {
        return Err(Error::Unsolvable(format!(
            "correlation target {rho} not bracketed for {family} at r_med = {r_med}"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_ITER {
        mid = 0.5 * (lo + hi);
        let c = corr(mid);
        if c < rho {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid {
            break;
        }
    }
    let residual = (corr(mid) - rho).abs();
    if residual > ROOT_TOL {
        return Err(Error::Unsolvable(format!(
            "bisection residual {residual:e} for target {rho}"
        )));
    }
    Ok(mid)
}

/// Solves one length scale per correlation target at the median pairwise distance.
pub fn select_length_scale(
    family: Family,
    points: &Points,
    correlation_targets: &[f64],
) -> Result<LengthScaleGrid> {
    if !family.is_stationary() {
        return Err(Error::invalid(
            "family",
            "median-heuristic length scales need a stationary kernel",
        ));
    }
    if correlation_targets.is_empty() {
        return Err(Error::Empty("correlation targets"));
    }
    if let Some(&bad) = correlation_targets.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::invalid(
            "correlation_targets",
            format!("targets must lie in (0, 1), got {bad}"),
        ));
    }
    let r_med = median_pairwise_distance(points)?;
    if r_med <= 0.0 {
        return Err(Error::invalid(
            "points",
            "median pairwise distance is zero (points are identical)",
        ));
    }
    let solved_scales = correlation_targets
        .iter()
        .map(|&rho| solve_one(family, r_med, rho))
        .collect::<Result<_>>()?;
    Ok(LengthScaleGrid {
        correlation_targets: correlation_targets.to_vec(),
        solved_scales,
        median_distance: r_med,
    })
}

/// Correlation levels cross-validated when none are given.
pub const DEFAULT_CORRELATION_TARGETS: [f64; 5] = [0.15, 0.3, 0.5, 0.7, 0.85];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Smoothness;

    fn line(n: usize) -> Points {
        Points::from_scalars(&(0..n).map(|i| i as f64 * 0.37).collect::<Vec<_>>())
    }

    /// Independent bisection for (1 + t) e^{-t} = rho, on t in (0, 50).
    fn solve_matern32_t(rho: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 50.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (1.0 + mid) * (-mid).exp() > rho {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn median_of_small_sets() {
        // Pairwise distances 1, 2, 3 -> median 2.
        let p = Points::from_scalars(&[0.0, 1.0, 3.0]);
        assert_eq!(median_pairwise_distance(&p).unwrap(), 2.0);
        // 0, 1, 2, 4: distances 1,2,4,1,3,2 -> sorted 1,1,2,2,3,4 -> 2.
        let p = Points::from_scalars(&[0.0, 1.0, 2.0, 4.0]);
        assert_eq!(median_pairwise_distance(&p).unwrap(), 2.0);
    }

    #[test]
    fn rbf_inverts_analytically() {
        let p = line(40);
        let rho = (-0.5f64).exp();
        let g = select_length_scale(Family::SquaredExponential, &p, &[rho]).unwrap();
        let rel = (g.solved_scales[0] - g.median_distance).abs() / g.median_distance;
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn laplace_inverts_analytically() {
        let p = line(25);
        let g = select_length_scale(Family::Matern(Smoothness::Half), &p, &[0.5]).unwrap();
        let expected = g.median_distance / std::f64::consts::LN_2;
        assert!((g.solved_scales[0] - expected).abs() / expected < 1e-9);
    }

    #[test]
    fn matern32_matches_independent_root() {
        let p = line(31);
        let g = select_length_scale(Family::Matern(Smoothness::ThreeHalves), &p, &[0.5]).unwrap();
        let t = solve_matern32_t(0.5);
        assert!((t - 1.678_346_990_016_661).abs() < 1e-9, "{t}");
        let expected = 3f64.sqrt() * g.median_distance / t;
        assert!((g.solved_scales[0] - expected).abs() / expected < 1e-9);
    }

    #[test]
    fn scales_increase_with_target_and_hit_residual() {
        let p = line(50);
        let fam = Family::Matern(Smoothness::FiveHalves);
        let g = select_length_scale(fam, &p, &DEFAULT_CORRELATION_TARGETS).unwrap();
        assert!(g.solved_scales.windows(2).all(|w| w[0] < w[1]));
        for (&rho, &l) in g.correlation_targets.iter().zip(&g.solved_scales) {
            let k = BaseKernel::new(fam, l).unwrap();
            assert!((k.correlation(g.median_distance).unwrap() - rho).abs() <= 1e-10);
        }
    }

    #[test]
    fn degenerate_inputs() {
        let same = Points::from_scalars(&[1.0, 1.0, 1.0]);
        let fam = Family::Matern(Smoothness::ThreeHalves);
        assert!(select_length_scale(fam, &same, &[0.5]).is_err());
        assert!(select_length_scale(fam, &line(5), &[1.0]).is_err());
        assert!(select_length_scale(fam, &line(5), &[0.0]).is_err());
        assert!(select_length_scale(Family::Linear, &line(5), &[0.5]).is_err());
    }

    #[test]
    fn large_sets_are_subsampled_deterministically() {
        let p = line(2500);
        let a = median_pairwise_distance(&p).unwrap();
        let b = median_pairwise_distance(&p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        // Full-set median of |i - j| * 0.37 is about 0.37 * 2500 * (1 - 1/sqrt 2).
        let approx = 0.37 * 2500.0 * (1.0 - std::f64::consts::FRAC_1_SQRT_2);
        assert!((a - approx).abs() / approx < 0.05);
    }
}
