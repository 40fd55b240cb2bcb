//! The two-stage estimator: nuisance fit, marginalization into pseudo-outcomes,
//! and a second ridge regression on the treatment axis.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::{gram, BaseKernel, KernelSpec, StatMap};
use crate::krr::KrrModel;
use crate::{rng, Error, Points, Result};

/// Covariate rows per tile of the precomputed pair-statistic block.
const STAT_TILE_BYTES: usize = 64 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(
                "interval",
                format!("need finite lo < hi, got [{lo}, {hi}]"),
            ));
        }
        Ok(Interval { lo, hi })
    }

    pub fn contains(&self, a: f64) -> bool {
        a >= self.lo && a <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// `k` equally spaced points including both endpoints.
    pub fn grid(&self, k: usize) -> Vec<f64> {
        match k {
            0 => Vec::new(),
            1 => vec![0.5 * (self.lo + self.hi)],
            _ => {
                let step = self.width() / (k - 1) as f64;
                (0..k)
                    .map(|i| if i == k - 1 { self.hi } else { self.lo + step * i as f64 })
                    .collect()
            }
        }
    }
}

/// An observed sample `(x_i, a_i, y_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    covariates: Points,
    treatments: Vec<f64>,
    outcomes: Vec<f64>,
    domain: Interval,
}

impl Dataset {
    pub fn new(
        covariates: Points,
        treatments: Vec<f64>,
        outcomes: Vec<f64>,
        domain: Interval,
    ) -> Result<Self> {
        let n = covariates.len();
        if n < 2 {
            return Err(Error::invalid("dataset", format!("need at least 2 rows, got {n}")));
        }
        for (context, len) in [("treatments", treatments.len()), ("outcomes", outcomes.len())] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual: len,
                });
            }
        }
        if let Some(i) = treatments.iter().position(|&a| !domain.contains(a)) {
            return Err(Error::invalid(
                "treatments",
                format!(
                    "row {i}: treatment {} outside domain [{}, {}]",
                    treatments[i], domain.lo, domain.hi
                ),
            ));
        }
        if covariates.as_slice().iter().chain(&outcomes).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset", "non-finite covariate or outcome"));
        }
        Ok(Dataset {
            covariates,
            treatments,
            outcomes,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.treatments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatments.is_empty()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn covariates(&self) -> &Points {
        &self.covariates
    }

    pub fn treatments(&self) -> &[f64] {
        &self.treatments
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// Joint points `z_i = (x_i, a_i)`.
    pub fn joint_points(&self) -> Points {
        Points::with_trailing(&self.covariates, &self.treatments).expect("validated lengths")
    }

    pub fn treatment_points(&self) -> Points {
        Points::from_scalars(&self.treatments)
    }

    /// Rows at `indices`, keeping the domain.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.covariates.select(indices),
            indices.iter().map(|&i| self.treatments[i]).collect(),
            indices.iter().map(|&i| self.outcomes[i]).collect(),
            self.domain,
        )
    }

    pub fn with_outcomes(&self, outcomes: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.covariates.clone(), self.treatments.clone(), outcomes, self.domain)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Uniform { lo: f64, hi: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

impl Distribution {
    pub fn uniform(interval: Interval) -> Self {
        Distribution::Uniform {
            lo: interval.lo,
            hi: interval.hi,
        }
    }

    pub fn validated(self) -> Result<Self> {
        match &self {
            Distribution::Uniform { lo, hi } => {
                Interval::new(*lo, *hi)?;
            }
            Distribution::Discrete { points, weights } => {
                if points.is_empty() {
                    return Err(Error::Empty("discrete distribution support"));
                }
                if points.len() != weights.len() {
                    return Err(Error::DimensionMismatch {
                        context: "discrete weights vs points",
                        expected: points.len(),
                        actual: weights.len(),
                    });
                }
                if weights.iter().any(|&w| !(w >= 0.0)) {
                    return Err(Error::invalid("weights", "must be nonnegative"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("weights", format!("must sum to 1, got {total}")));
                }
            }
        }
        Ok(self)
    }

    pub fn sample(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        let mut r = rng::rng(seed);
        match self.clone().validated()? {
            Distribution::Uniform { lo, hi } => {
                Ok((0..count).map(|_| rng::uniform(&mut r, lo, hi)).collect())
            }
            Distribution::Discrete { points, weights } => {
                let index = WeightedIndex::new(&weights)
                    .map_err(|e| Error::invalid("weights", e.to_string()))?;
                Ok((0..count).map(|_| points[index.sample(&mut r)]).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub distribution: Distribution,
    pub count: usize,
    pub seed: u64,
}

pub fn sample_queries(spec: &SamplingSpec) -> Result<Vec<f64>> {
    if spec.count == 0 {
        return Err(Error::invalid("count", "need at least one query point"));
    }
    spec.distribution.sample(spec.count, spec.seed)
}

/// How the stage-1 regularizer is set for a sample of size `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Lambda0 {
    Fixed(f64),
    /// `c0 ln(n) / n`.
    LogRate { c0: f64 },
}

impl Default for Lambda0 {
    fn default() -> Self {
        Lambda0::LogRate { c0: 1.0 }
    }
}

impl Lambda0 {
    pub fn resolve(&self, n: usize) -> Result<f64> {
        let v = match *self {
            Lambda0::Fixed(v) => v,
            Lambda0::LogRate { c0 } => nuisance_lambda(n, c0),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid("lambda0", format!("must be positive, got {v}")));
        }
        Ok(v)
    }
}

/// `c0 ln(n) / n`.
pub fn nuisance_lambda(n: usize, c0: f64) -> f64 {
    c0 * (n as f64).ln() / n as f64
}

/// Ridge regression of `y` on `z = (x, a)`.
pub fn fit_stage1(data: &Dataset, kernel_f: &KernelSpec, lambda0: f64) -> Result<KrrModel> {
    KrrModel::fit(kernel_f, &data.joint_points(), data.outcomes(), lambda0)
}

struct JointMarginal<'a> {
    stats: &'a [f64],
    rows: usize,
    treatments: &'a [f64],
    weights: &'a [f64],
    queries: &'a [f64],
    stationary: bool,
}

impl StatMap for JointMarginal<'_> {
    type Output = Vec<f64>;

    fn apply<F: Fn(f64) -> f64 + Copy + Send + Sync>(self, f: F) -> Vec<f64> {
        let nt = self.treatments.len();
        self.queries
            .par_iter()
            .map(|&q| {
                let da: Vec<f64> = self
                    .treatments
                    .iter()
                    .map(|&a| if self.stationary { (q - a) * (q - a) } else { q * a })
                    .collect();
                let mut total = 0.0;
                for i in 0..self.rows {
                    let row = &self.stats[i * nt..(i + 1) * nt];
                    let mut acc = 0.0;
                    for k in 0..nt {
                        acc += self.weights[k] * f(row[k] + da[k]);
                    }
                    total += acc;
                }
                total
            })
            .collect()
    }
}

fn check_marginal_inputs(stage1: &KrrModel, covariates: &Points) -> Result<()> {
    let dz = stage1.training_points.dim();
    if dz < 2 {
        return Err(Error::DimensionMismatch {
            context: "stage-1 training point dimension (covariates + treatment)",
            expected: 2,
            actual: dz,
        });
    }
    if covariates.dim() != dz - 1 {
        return Err(Error::DimensionMismatch {
            context: "averaging covariate dimension",
            expected: dz - 1,
            actual: covariates.dim(),
        });
    }
    if covariates.is_empty() {
        return Err(Error::Empty("averaging covariates"));
    }
    Ok(())
}

/// Pseudo-outcomes `m_j = (1/n) sum_i f(x_i, a'_j)`.
///
/// Joint kernels accumulate over a precomputed covariate pair-statistic block
/// (tiled over covariate rows); tensor kernels use the factorized form
/// `m_j = sum_k alpha_k K_A(a'_j, a_k) c_k` with `c_k = (1/n) sum_i K_X(x_i, x_k)`.
pub fn marginalize(stage1: &KrrModel, covariates: &Points, queries: &[f64]) -> Result<Vec<f64>> {
    check_marginal_inputs(stage1, covariates)?;
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    let n = covariates.len();
    let z = &stage1.training_points;
    let q = z.dim() - 1;
    let nt = z.len();
    let alpha = &stage1.dual_weights;
    let train_x = z.leading(q)?;
    let train_a = z.column(q);
    match stage1.kernel {
        KernelSpec::Joint { kernel } => {
            let tile = (STAT_TILE_BYTES / (8 * nt)).max(1);
            let mut totals = vec![0.0; queries.len()];
            for start in (0..n).step_by(tile) {
                let end = (start + tile).min(n);
                let stats = pair_stat_block(&kernel, covariates, start..end, &train_x);
                let part = kernel.map_stat(JointMarginal {
                    stats: &stats,
                    rows: end - start,
                    treatments: &train_a,
                    weights: alpha,
                    queries,
                    stationary: kernel.family.is_stationary(),
                });
                for (t, p) in totals.iter_mut().zip(part) {
                    *t += p;
                }
            }
            Ok(totals.into_iter().map(|t| t / n as f64).collect())
        }
        KernelSpec::Tensor {
            covariate,
            treatment,
        } => {
            let c: Vec<f64> = (0..nt)
                .into_par_iter()
                .map(|k| {
                    let xk = train_x.row(k);
                    covariates.rows().map(|xi| covariate.eval(xi, xk)).sum::<f64>() / n as f64
                })
                .collect();
            let weighted: Vec<f64> = alpha.iter().zip(&c).map(|(a, c)| a * c).collect();
            Ok(queries
                .par_iter()
                .map(|&q| {
                    train_a
                        .iter()
                        .zip(&weighted)
                        .map(|(&a, w)| w * treatment.eval(&[q], &[a]))
                        .sum()
                })
                .collect())
        }
    }
}

fn pair_stat_block(
    kernel: &BaseKernel,
    covariates: &Points,
    rows: std::ops::Range<usize>,
    train_x: &Points,
) -> Vec<f64> {
    let nt = train_x.len();
    let mut stats = vec![0.0; rows.len() * nt];
    stats
        .par_chunks_mut(nt)
        .zip(rows)
        .for_each(|(out, i)| {
            let xi = covariates.row(i);
            for (k, o) in out.iter_mut().enumerate() {
                *o = kernel.pair_stat(xi, train_x.row(k));
            }
        });
    stats
}

/// Reference implementation: predict at every `(x_i, a'_j)` and average.
pub fn marginalize_naive(
    stage1: &KrrModel,
    covariates: &Points,
    queries: &[f64],
) -> Result<Vec<f64>> {
    check_marginal_inputs(stage1, covariates)?;
    let n = covariates.len();
    queries
        .iter()
        .map(|&q| {
            let z = Points::with_trailing(covariates, &vec![q; n])?;
            Ok(stage1.predict(&z)?.iter().sum::<f64>() / n as f64)
        })
        .collect()
}

/// Ridge regression of the pseudo-outcomes on the query treatments.
pub fn fit_stage2(
    queries: &[f64],
    pseudo_outcomes: &[f64],
    kernel_h: &KernelSpec,
    lambda: f64,
) -> Result<KrrModel> {
    check_stage2(queries, pseudo_outcomes, kernel_h)?;
    KrrModel::fit(kernel_h, &Points::from_scalars(queries), pseudo_outcomes, lambda)
}

fn check_stage2(queries: &[f64], pseudo_outcomes: &[f64], kernel_h: &KernelSpec) -> Result<()> {
    if queries.len() != pseudo_outcomes.len() {
        return Err(Error::DimensionMismatch {
            context: "pseudo-outcomes vs queries",
            expected: queries.len(),
            actual: pseudo_outcomes.len(),
        });
    }
    if matches!(kernel_h, KernelSpec::Tensor { .. }) {
        return Err(Error::invalid(
            "kernel_h",
            "the treatment-axis kernel must use joint composition",
        ));
    }
    Ok(())
}

/// Stage-1 fit and its pseudo-outcomes, shared by all second-stage regularizers.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoOutcomes {
    pub stage1: KrrModel,
    pub lambda0: f64,
    pub queries: Vec<f64>,
    pub values: Vec<f64>,
    pub domain: Interval,
}

impl PseudoOutcomes {
    pub fn compute(
        data: &Dataset,
        kernel_f: &KernelSpec,
        lambda0: f64,
        queries: Vec<f64>,
    ) -> Result<Self> {
        let stage1 = fit_stage1(data, kernel_f, lambda0)?;
        let values = marginalize(&stage1, data.covariates(), &queries)?;
        Ok(PseudoOutcomes {
            stage1,
            lambda0,
            queries,
            values,
            domain: data.domain(),
        })
    }

    /// One second-stage model per regularizer, sharing a single Gram matrix.
    pub fn smooth(&self, kernel_h: &KernelSpec, lambdas: &[f64]) -> Result<Vec<TefModel>> {
        check_stage2(&self.queries, &self.values, kernel_h)?;
        let points = Points::from_scalars(&self.queries);
        let k = gram(kernel_h, &points)?;
        lambdas
            .iter()
            .map(|&lambda| {
                let stage2 = KrrModel::fit_with_gram(kernel_h, &points, &k, &self.values, lambda)?;
                Ok(TefModel {
                    stage1: self.stage1.clone(),
                    query_treatments: self.queries.clone(),
                    pseudo_outcomes: self.values.clone(),
                    stage2,
                    lambda0: self.lambda0,
                    lambda,
                    domain: self.domain,
                })
            })
            .collect()
    }
}

/// Output of the two-stage estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TefModel {
    pub stage1: KrrModel,
    pub query_treatments: Vec<f64>,
    pub pseudo_outcomes: Vec<f64>,
    pub stage2: KrrModel,
    pub lambda0: f64,
    pub lambda: f64,
    pub domain: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TefPrediction {
    pub values: Vec<f64>,
    /// Number of grid points outside the treatment domain.
    pub outside_domain: usize,
}

impl TefModel {
    pub fn predict(&self, a_grid: &[f64]) -> Result<Vec<f64>> {
        self.stage2.predict(&Points::from_scalars(a_grid))
    }
}

pub fn estimate_tef(
    data: &Dataset,
    kernel_f: &KernelSpec,
    kernel_h: &KernelSpec,
    lambda0: f64,
    lambda: f64,
    sampling: &SamplingSpec,
) -> Result<TefModel> {
    let queries = sample_queries(sampling)?;
    let pseudo = PseudoOutcomes::compute(data, kernel_f, lambda0, queries)?;
    Ok(pseudo.smooth(kernel_h, &[lambda])?.remove(0))
}

pub fn predict_tef(model: &TefModel, a_grid: &[f64]) -> Result<TefPrediction> {
    let outside_domain = a_grid.iter().filter(|&&a| !model.domain.contains(a)).count();
    Ok(TefPrediction {
        values: model.predict(a_grid)?,
        outside_domain,
    })
}
