//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 stream keyed by a
//! 64-bit seed. Child seeds are derived with a SplitMix64 finalizer so that
//! sub-tasks (data generation, sample splitting, query sampling, ...) get
//! disjoint streams that do not depend on execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

/// Generator used for all draws.
pub type StreamRng = ChaCha20Rng;

/// Algorithm names recorded in run metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RngAlgorithms {
    pub generator: &'static str,
    pub seed_derivation: &'static str,
    pub uniform: &'static str,
    pub gaussian: &'static str,
    pub gamma: &'static str,
    pub beta: &'static str,
    pub rademacher: &'static str,
}

pub const ALGORITHMS: RngAlgorithms = RngAlgorithms {
    generator: "chacha20",
    seed_derivation: "splitmix64",
    uniform: "53-bit-mantissa",
    gaussian: "ziggurat",
    gamma: "marsaglia-tsang",
    beta: "gamma-ratio",
    rademacher: "bernoulli-0.5",
};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `parent` and a label.
pub fn derive(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ label.rotate_left(17))
}

/// Labels for the sub-streams used inside one estimator run.
pub mod stream {
    pub const DATA: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const QUERIES_TRAIN: u64 = 3;
    pub const QUERIES_VAL: u64 = 4;
    pub const TEST_POINTS: u64 = 5;
    pub const NYSTROM: u64 = 6;
    pub const MC_CHECK: u64 = 7;
    pub const INJECTION: u64 = 8;
    pub const SUBSAMPLE: u64 = 9;
}

pub fn rng(seed: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut StreamRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn normal(rng: &mut StreamRng) -> f64 {
    rng.sample(StandardNormal)
}

/// Beta(alpha, beta) as `G1 / (G1 + G2)` with independent Gamma draws.
pub fn beta(rng: &mut StreamRng, alpha: f64, beta: f64) -> f64 {
    let g1 = Gamma::new(alpha, 1.0).expect("positive shape").sample(rng);
    let g2 = Gamma::new(beta, 1.0).expect("positive shape").sample(rng);
    let total = g1 + g2;
    if total > 0.0 {
        g1 / total
    } else {
        0.5
    }
}

pub fn rademacher(rng: &mut StreamRng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Uniformly random permutation of `0..n` (Fisher-Yates).
pub fn permutation(rng: &mut StreamRng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_streams_differ_and_repeat() {
        let a = derive(42, stream::DATA);
        let b = derive(42, stream::SPLIT);
        assert_ne!(a, b);
        assert_eq!(a, derive(42, stream::DATA));
        let mut r1 = rng(a);
        let mut r2 = rng(a);
        assert_eq!(normal(&mut r1).to_bits(), normal(&mut r2).to_bits());
    }

    #[test]
    fn beta_moments() {
        // Beta(10, 10): mean 1/2, variance 1/84.
        let n = 1_000_000;
        let mut r = rng(7);
        let draws: Vec<f64> = (0..n).map(|_| beta(&mut r, 10.0, 10.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_var = 1.0 / 84.0;
        let mean_sd = (true_var / n as f64).sqrt();
        // Var of the sample variance: (mu4 - sigma^4) / n, mu4 from the Beta kurtosis.
        let (a, b) = (10.0f64, 10.0f64);
        let excess = 6.0 * ((a - b).powi(2) * (a + b + 1.0) - a * b * (a + b + 2.0))
            / (a * b * (a + b + 2.0) * (a + b + 3.0));
        let mu4 = (excess + 3.0) * true_var * true_var;
        let var_sd = ((mu4 - true_var * true_var) / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 4.0 * mean_sd, "mean {mean}");
        assert!((var - true_var).abs() < 4.0 * var_sd, "var {var}");
    }

    #[test]
    fn permutation_is_bijection() {
        let mut r = rng(3);
        let mut p = permutation(&mut r, 100);
        p.sort_unstable();
        assert_eq!(p, (0..100).collect::<Vec<_>>());
    }
}
