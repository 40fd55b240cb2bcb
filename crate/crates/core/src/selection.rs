//! Choice of the second-stage regularizer by proxy validation, and hold-out
//! tuning for single-stage ridge fits.
//!
//! Proxy validation splits the sample in half. Candidates are fit on the
//! first half for every grid value; a deliberately undersmoothed proxy is fit
//! on the second half; the candidate closest to the proxy on test points
//! drawn from the reference distribution wins.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernels::{gram, KernelSpec};
use crate::krr::{self, KrrModel};
use crate::tef::{Dataset, Distribution, Lambda0, PseudoOutcomes, TefModel};
use crate::{rng, Error, Points, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridKind {
    Theorem,
    Experiment { c: f64 },
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerGrid {
    pub values: Vec<f64>,
    pub kind: GridKind,
}

impl RegularizerGrid {
    pub fn custom(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("regularizer grid"));
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("grid", "values must be positive and finite"));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("grid", "values must be strictly increasing"));
        }
        Ok(RegularizerGrid {
            values,
            kind: GridKind::Custom,
        })
    }

    /// Proxy regularizer paired with this grid: `ln(n)/n` for the theorem
    /// grid, `c/n2` for the experiment grid and for custom grids (`c = 0.1`).
    pub fn default_proxy_lambda(&self, n: usize, n2: usize) -> f64 {
        match self.kind {
            GridKind::Theorem => (n as f64).ln() / n as f64,
            GridKind::Experiment { c } => c / n2 as f64,
            GridKind::Custom => DEFAULT_GRID_C / n2 as f64,
        }
    }
}

pub const DEFAULT_GRID_C: f64 = 0.1;
pub const DEFAULT_GRID_LEN: usize = 9;

/// `2^{k-1} ln(n) / n` for `k = 1..=ceil(log2 n) + 1`.
pub fn make_theorem_grid(n: usize) -> Result<RegularizerGrid> {
    if n < 2 {
        return Err(Error::invalid("n", format!("theorem grid needs n >= 2, got {n}")));
    }
    let len = (n as f64).log2().ceil() as usize + 1;
    let base = (n as f64).ln() / n as f64;
    Ok(RegularizerGrid {
        values: (0..len).map(|k| base * 2f64.powi(k as i32)).collect(),
        kind: GridKind::Theorem,
    })
}

/// `c 2^{k-1} / n1` for `k = 1..=len`.
pub fn make_experiment_grid(n1: usize, c: f64, len: usize) -> Result<RegularizerGrid> {
    if n1 == 0 {
        return Err(Error::invalid("n1", "must be at least 1"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid("c", format!("must be positive, got {c}")));
    }
    if len == 0 {
        return Err(Error::Empty("regularizer grid"));
    }
    Ok(RegularizerGrid {
        values: (0..len).map(|k| c * 2f64.powi(k as i32) / n1 as f64).collect(),
        kind: GridKind::Experiment { c },
    })
}

/// Seeded half split: `floor(n/2)` training rows and `ceil(n/2)` validation
/// rows, each sorted ascending.
pub fn split_indices(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut r = rng::rng(rng::derive(seed, rng::stream::SPLIT));
    let perm = rng::permutation(&mut r, n);
    let n1 = n / 2;
    let mut train = perm[..n1].to_vec();
    let mut val = perm[n1..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

fn split(data: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(data.len(), seed);
    if train.len() < 2 {
        return Err(Error::invalid(
            "dataset",
            format!("half split leaves {} training rows; need n >= 4", train.len()),
        ));
    }
    Ok((data.subset(&train)?, data.subset(&val)?))
}

/// Smallest index among the minimal entries.
fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub chosen_lambda: f64,
    pub chosen_index: usize,
    pub grid: Vec<f64>,
    pub distances: Vec<f64>,
    pub proxy_lambda: f64,
    pub lambda0_train: f64,
    pub lambda0_val: f64,
    pub n1: usize,
    pub n2: usize,
    pub m: usize,
    pub seed: u64,
}

impl SelectionReport {
    /// Recomputes the choice from the stored distances.
    pub fn recompute_choice(&self) -> usize {
        argmin_first(&self.distances)
    }
}

/// Settings for proxy validation beyond the data and kernels.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionSettings {
    pub lambda0: Lambda0,
    pub grid: RegularizerGrid,
    /// Proxy regularizer; the grid's default when `None`.
    pub proxy_lambda: Option<f64>,
    /// Number of test points; `n` when `None`.
    pub test_points: Option<usize>,
    pub p_samp: Distribution,
    pub p_ref: Distribution,
    pub seed: u64,
}

pub struct Selection {
    pub model: TefModel,
    pub candidates: Vec<TefModel>,
    pub proxy: TefModel,
    pub test_points: Vec<f64>,
    pub report: SelectionReport,
}

/// Proxy-validation choice of the second-stage regularizer.
///
/// The returned model is the candidate fitted on the training half; there is
/// no refit on the full sample.
pub fn select_model(
    data: &Dataset,
    kernel_f: &KernelSpec,
    kernel_h: &KernelSpec,
    settings: &SelectionSettings,
) -> Result<Selection> {
    if settings.grid.values.is_empty() {
        return Err(Error::Empty("regularizer grid"));
    }
    let n = data.len();
    let (train, val) = split(data, settings.seed)?;
    let (n1, n2) = (train.len(), val.len());
    let lambda0_train = settings.lambda0.resolve(n1)?;
    let lambda0_val = settings.lambda0.resolve(n2)?;
    let proxy_lambda = settings
        .proxy_lambda
        .unwrap_or_else(|| settings.grid.default_proxy_lambda(n, n2));
    let m = settings.test_points.unwrap_or(n);
    if m == 0 {
        return Err(Error::invalid("test_points", "must be at least 1"));
    }
    let seed = settings.seed;
    let q_train = settings
        .p_samp
        .sample(n1, rng::derive(seed, rng::stream::QUERIES_TRAIN))?;
    let q_val = settings
        .p_samp
        .sample(n2, rng::derive(seed, rng::stream::QUERIES_VAL))?;
    let test = settings
        .p_ref
        .sample(m, rng::derive(seed, rng::stream::TEST_POINTS))?;

    let (cand, proxy) = rayon::join(
        || -> Result<Vec<TefModel>> {
            PseudoOutcomes::compute(&train, kernel_f, lambda0_train, q_train)?
                .smooth(kernel_h, &settings.grid.values)
        },
        || -> Result<TefModel> {
            Ok(PseudoOutcomes::compute(&val, kernel_f, lambda0_val, q_val)?
                .smooth(kernel_h, &[proxy_lambda])?
                .remove(0))
        },
    );
    let candidates = cand?;
    let proxy = proxy?;
    let proxy_values = proxy.predict(&test)?;
    let distances = candidates
        .iter()
        .map(|c| {
            let v = c.predict(&test)?;
            Ok(v.iter().zip(&proxy_values).map(|(a, b)| (a - b) * (a - b)).sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    let chosen_index = argmin_first(&distances);
    let report = SelectionReport {
        chosen_lambda: settings.grid.values[chosen_index],
        chosen_index,
        grid: settings.grid.values.clone(),
        distances,
        proxy_lambda,
        lambda0_train,
        lambda0_val,
        n1,
        n2,
        m,
        seed,
    };
    Ok(Selection {
        model: candidates[chosen_index].clone(),
        candidates,
        proxy,
        test_points: test,
        report,
    })
}

/// Inputs of a single-stage ridge fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regressors {
    /// `y` on `z = (x, a)`.
    Joint,
    /// `y` on `a` alone.
    TreatmentOnly,
}

impl Regressors {
    pub fn points(self, data: &Dataset) -> Points {
        match self {
            Regressors::Joint => data.joint_points(),
            Regressors::TreatmentOnly => data.treatment_points(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutReport {
    pub chosen_lambda: f64,
    pub chosen_index: usize,
    pub grid: Vec<f64>,
    pub validation_mse: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    pub split_seed: u64,
}

pub struct HoldoutSelection {
    /// Fit on the training half at the chosen regularizer.
    pub model: KrrModel,
    pub report: HoldoutReport,
}

/// Picks the grid value with the smallest validation MSE.
pub fn holdout_select(
    data: &Dataset,
    kernel: &KernelSpec,
    regressors: Regressors,
    grid: &RegularizerGrid,
    split_seed: u64,
) -> Result<HoldoutSelection> {
    if grid.values.is_empty() {
        return Err(Error::Empty("regularizer grid"));
    }
    let (train, val) = split(data, split_seed)?;
    let points = regressors.points(&train);
    let val_points = regressors.points(&val);
    let k = gram(kernel, &points)?;
    let fits = grid
        .values
        .par_iter()
        .map(|&lambda| KrrModel::fit_with_gram(kernel, &points, &k, train.outcomes(), lambda))
        .collect::<Result<Vec<_>>>()?;
    let validation_mse = fits
        .iter()
        .map(|f| {
            let pred = f.predict(&val_points)?;
            Ok(pred
                .iter()
                .zip(val.outcomes())
                .map(|(p, y)| (p - y) * (p - y))
                .sum::<f64>()
                / val.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let chosen_index = argmin_first(&validation_mse);
    Ok(HoldoutSelection {
        model: fits.into_iter().nth(chosen_index).expect("index in range"),
        report: HoldoutReport {
            chosen_lambda: grid.values[chosen_index],
            chosen_index,
            grid: grid.values.clone(),
            validation_mse,
            n1: train.len(),
            n2: val.len(),
            split_seed,
        },
    })
}

/// The hold-out choice of regularizer.
pub fn holdout_select_krr(
    data: &Dataset,
    kernel: &KernelSpec,
    regressors: Regressors,
    grid: &RegularizerGrid,
    split_seed: u64,
) -> Result<f64> {
    Ok(holdout_select(data, kernel, regressors, grid, split_seed)?
        .report
        .chosen_lambda)
}

/// Exact leave-one-out scores over the grid, sharing one Gram matrix.
pub fn loocv_scores(
    data: &Dataset,
    kernel: &KernelSpec,
    regressors: Regressors,
    grid: &RegularizerGrid,
) -> Result<Vec<f64>> {
    let points = regressors.points(data);
    let k = gram(kernel, &points)?;
    grid.values
        .par_iter()
        .map(|&lambda| krr::loocv_score(&k, data.outcomes(), lambda))
        .collect()
}

pub(crate) fn first_minimum(values: &[f64]) -> usize {
    argmin_first(values)
}
