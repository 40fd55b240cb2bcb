//! Kernel ridge regression in dual form.
//!
//! The empirical loss is `(1/n) sum (y_i - f(z_i))^2 + lambda ||f||^2`, so the
//! dual weights solve `(K + n lambda I) alpha = y`.

use serde::{Deserialize, Serialize};

use crate::kernels::{cross_gram_buffer, gram, KernelSpec};
use crate::linalg::{self, shifted_cholesky, Matrix};
use crate::{rng, Error, Points, Result};

/// Leverages at or above this are treated as degenerate.
const LEVERAGE_LIMIT: f64 = 1.0 - 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub weights: Vec<f64>,
    /// Diagonal jitter added on top of `n lambda` to factorize.
    pub jitter: f64,
}

fn check_system(gram: &Matrix, targets: &[f64], lambda: f64) -> Result<()> {
    if gram.nrows() == 0 {
        return Err(Error::Empty("gram matrix"));
    }
    if gram.nrows() != gram.ncols() {
        return Err(Error::DimensionMismatch {
            context: "gram matrix columns",
            expected: gram.nrows(),
            actual: gram.ncols(),
        });
    }
    if targets.len() != gram.nrows() {
        return Err(Error::DimensionMismatch {
            context: "targets vs gram size",
            expected: gram.nrows(),
            actual: targets.len(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// Dual weights `(K + n lambda I)^{-1} y` together with the jitter used.
pub fn fit_dual(gram: &Matrix, targets: &[f64], lambda: f64) -> Result<DualSolution> {
    check_system(gram, targets, lambda)?;
    let n = targets.len() as f64;
    let chol = shifted_cholesky(gram, n * lambda)?;
    Ok(DualSolution {
        weights: chol.solve(targets),
        jitter: chol.jitter,
    })
}

/// Dual weights `(K + n lambda I)^{-1} y`.
pub fn fit(gram: &Matrix, targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
    Ok(fit_dual(gram, targets, lambda)?.weights)
}

/// Closed-form leave-one-out mean squared error of the ridge fit.
///
/// With `A = K + n lambda I` the LOO residual is `alpha_i / (A^{-1})_{ii}`.
pub fn loocv_score(gram: &Matrix, targets: &[f64], lambda: f64) -> Result<f64> {
    check_system(gram, targets, lambda)?;
    let n = targets.len();
    let chol = shifted_cholesky(gram, n as f64 * lambda)?;
    let alpha = chol.solve(targets);
    let inv_diag = chol.inverse_diagonal();
    let mut total = 0.0;
    for i in 0..n {
        let leverage = 1.0 - chol.total_shift * inv_diag[i];
        if !(leverage < LEVERAGE_LIMIT) {
            return Err(Error::DegenerateLeverage { index: i, leverage });
        }
        let r = alpha[i] / inv_diag[i];
        total += r * r;
    }
    Ok(total / n as f64)
}

/// A fitted ridge regressor stored as a kernel expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrrModel {
    pub kernel: KernelSpec,
    pub training_points: Points,
    pub dual_weights: Vec<f64>,
    pub regularizer: f64,
    #[serde(default)]
    pub jitter: f64,
}

impl KrrModel {
    pub fn fit(kernel: &KernelSpec, points: &Points, targets: &[f64], lambda: f64) -> Result<Self> {
        let k = gram(kernel, points)?;
        Self::fit_with_gram(kernel, points, &k, targets, lambda)
    }

    /// Fits with a precomputed Gram matrix of `points`.
    pub fn fit_with_gram(
        kernel: &KernelSpec,
        points: &Points,
        gram: &Matrix,
        targets: &[f64],
        lambda: f64,
    ) -> Result<Self> {
        if gram.nrows() != points.len() {
            return Err(Error::DimensionMismatch {
                context: "gram vs training points",
                expected: points.len(),
                actual: gram.nrows(),
            });
        }
        let sol = fit_dual(gram, targets, lambda)?;
        Ok(KrrModel {
            kernel: *kernel,
            training_points: points.clone(),
            dual_weights: sol.weights,
            regularizer: lambda,
            jitter: sol.jitter,
        })
    }

    pub fn len(&self) -> usize {
        self.dual_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dual_weights.is_empty()
    }

    /// Same centers and kernel with different dual weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "replacement dual weights",
                expected: self.len(),
                actual: weights.len(),
            });
        }
        Ok(KrrModel {
            dual_weights: weights,
            ..self.clone()
        })
    }

    pub fn predict(&self, query: &Points) -> Result<Vec<f64>> {
        predict_expansion(&self.kernel, &self.training_points, &self.dual_weights, query)
    }
}

pub fn predict(model: &KrrModel, query: &Points) -> Result<Vec<f64>> {
    model.predict(query)
}

fn predict_expansion(
    kernel: &KernelSpec,
    centers: &Points,
    weights: &[f64],
    query: &Points,
) -> Result<Vec<f64>> {
    if query.is_empty() {
        return Ok(Vec::new());
    }
    if query.dim() != centers.dim() {
        return Err(Error::DimensionMismatch {
            context: "query point dimension",
            expected: centers.dim(),
            actual: query.dim(),
        });
    }
    let m = centers.len();
    let buf = cross_gram_buffer(kernel, query, centers)?;
    Ok(buf
        .chunks_exact(m)
        .map(|row| row.iter().zip(weights).map(|(k, a)| k * a).sum())
        .collect())
}

/// Subset-of-regressors (Nyström) ridge fit on `m` uniformly drawn landmarks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NystromModel {
    pub kernel: KernelSpec,
    pub landmark_indices: Vec<usize>,
    pub landmarks: Points,
    /// Prediction is `k(x, landmarks) . reduced_weights`.
    pub reduced_weights: Vec<f64>,
    pub regularizer: f64,
    pub jitter: f64,
}

impl NystromModel {
    pub fn predict(&self, query: &Points) -> Result<Vec<f64>> {
        predict_expansion(&self.kernel, &self.landmarks, &self.reduced_weights, query)
    }
}

struct NystromSystem {
    landmark_indices: Vec<usize>,
    landmarks: Points,
    /// `n x m` features `K_nm L^{-T}` with `K_mm = L L^T`.
    features: Matrix,
    kmm_jitter: f64,
}

fn nystrom_system(kernel: &KernelSpec, points: &Points, m: usize, seed: u64) -> Result<NystromSystem> {
    let n = points.len();
    if m == 0 || m > n {
        return Err(Error::invalid(
            "nystrom_m",
            format!("landmark count must lie in 1..={n}, got {m}"),
        ));
    }
    let mut r = rng::rng(seed);
    let mut idx = rng::permutation(&mut r, n);
    idx.truncate(m);
    idx.sort_unstable();
    let landmarks = points.select(&idx);
    let kmm = gram(kernel, &landmarks)?;
    let chol = shifted_cholesky(&kmm, 0.0)?;
    let buf = cross_gram_buffer(kernel, &landmarks, points)?;
    // K_mn, then L^{-1} K_mn, transposed into n x m features.
    let kmn = Matrix::from_fn(m, n, |i, j| buf[i * n + j]);
    let half = chol.forward(&kmn);
    Ok(NystromSystem {
        landmark_indices: idx,
        landmarks,
        features: half.transpose().to_owned(),
        kmm_jitter: chol.jitter,
    })
}

struct FeatureRidge {
    chol: linalg::ShiftedCholesky,
    w: Vec<f64>,
}

fn feature_ridge(features: &Matrix, targets: &[f64], lambda: f64) -> Result<FeatureRidge> {
    let n = features.nrows();
    if targets.len() != n {
        return Err(Error::DimensionMismatch {
            context: "targets vs points",
            expected: n,
            actual: targets.len(),
        });
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("must be positive and finite, got {lambda}")));
    }
    let gram = features.transpose() * features;
    let chol = shifted_cholesky(&gram, n as f64 * lambda)?;
    let rhs = features.transpose() * linalg::column(targets);
    let w = chol.solve_matrix(&rhs);
    Ok(FeatureRidge {
        w: (0..w.nrows()).map(|i| w[(i, 0)]).collect(),
        chol,
    })
}

/// Nyström ridge fit with `m` landmarks drawn under `seed`.
pub fn nystrom_fit(
    kernel: &KernelSpec,
    points: &Points,
    targets: &[f64],
    lambda: f64,
    m: usize,
    seed: u64,
) -> Result<NystromModel> {
    let sys = nystrom_system(kernel, points, m, seed)?;
    let ridge = feature_ridge(&sys.features, targets, lambda)?;
    // Feature weights w map back to kernel weights L^{-T} w.
    let kmm = gram(kernel, &sys.landmarks)?;
    let chol = shifted_cholesky(&kmm, 0.0)?;
    let beta = chol.backward(&linalg::column(&ridge.w));
    Ok(NystromModel {
        kernel: *kernel,
        landmark_indices: sys.landmark_indices,
        landmarks: sys.landmarks,
        reduced_weights: (0..m).map(|i| beta[(i, 0)]).collect(),
        regularizer: lambda,
        jitter: sys.kmm_jitter.max(ridge.chol.jitter),
    })
}

/// Leave-one-out scores of the Nyström ridge fit for every `lambda`.
///
/// The landmark features are computed once and shared across the grid.
pub fn nystrom_loocv_scores(
    kernel: &KernelSpec,
    points: &Points,
    targets: &[f64],
    lambdas: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sys = nystrom_system(kernel, points, m, seed)?;
    let phi = &sys.features;
    let n = phi.nrows();
    lambdas
        .iter()
        .map(|&lambda| {
            let ridge = feature_ridge(phi, targets, lambda)?;
            // H_ii = phi_i^T A^{-1} phi_i, via ||L_A^{-1} phi_i||^2.
            let half = ridge.chol.forward(&phi.transpose().to_owned());
            let mut total = 0.0;
            for i in 0..n {
                let leverage: f64 = (0..half.nrows()).map(|r| half[(r, i)] * half[(r, i)]).sum();
                if !(leverage < LEVERAGE_LIMIT) {
                    return Err(Error::DegenerateLeverage { index: i, leverage });
                }
                let fit: f64 = (0..phi.ncols()).map(|c| phi[(i, c)] * ridge.w[c]).sum();
                let r = (targets[i] - fit) / (1.0 - leverage);
                total += r * r;
            }
            Ok(total / n as f64)
        })
        .collect()
}
