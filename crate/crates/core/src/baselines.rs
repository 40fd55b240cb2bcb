//! Comparison estimators: plug-in marginalization without a second smoothing
//! stage, and direct regression of the outcome on the treatment.

use serde::{Deserialize, Serialize};

use crate::kernels::KernelSpec;
use crate::krr::{self, KrrModel};
use crate::selection::{self, holdout_select, HoldoutReport, Regressors, RegularizerGrid};
use crate::tef::{marginalize, Dataset};
use crate::{rng, Points, Result};

pub const DEFAULT_NYSTROM_M: usize = 700;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum Tuning {
    /// Validation MSE on a seeded half split; the final fit uses the training half.
    Holdout,
    /// Leave-one-out over the full sample; scores use a Nyström fit with
    /// `min(nystrom_m, n)` landmarks, or exact scores when `nystrom_m` is 0.
    Loocv {
        #[serde(default = "default_nystrom_m")]
        nystrom_m: usize,
    },
}

fn default_nystrom_m() -> usize {
    DEFAULT_NYSTROM_M
}

impl Default for Tuning {
    fn default() -> Self {
        Tuning::Holdout
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TuningReport {
    Holdout(HoldoutReport),
    Loocv {
        grid: Vec<f64>,
        scores: Vec<f64>,
        chosen_lambda: f64,
        chosen_index: usize,
        nystrom_m: Option<usize>,
    },
}

impl TuningReport {
    pub fn chosen_lambda(&self) -> f64 {
        match self {
            TuningReport::Holdout(r) => r.chosen_lambda,
            TuningReport::Loocv { chosen_lambda, .. } => *chosen_lambda,
        }
    }

    pub fn chosen_index(&self) -> usize {
        match self {
            TuningReport::Holdout(r) => r.chosen_index,
            TuningReport::Loocv { chosen_index, .. } => *chosen_index,
        }
    }
}

fn tune(
    data: &Dataset,
    kernel: &KernelSpec,
    regressors: Regressors,
    grid: &RegularizerGrid,
    tuning: Tuning,
    seed: u64,
) -> Result<(KrrModel, TuningReport)> {
    match tuning {
        Tuning::Holdout => {
            let sel = holdout_select(data, kernel, regressors, grid, seed)?;
            Ok((sel.model, TuningReport::Holdout(sel.report)))
        }
        Tuning::Loocv { nystrom_m } => {
            let n = data.len();
            let (scores, used) = if nystrom_m == 0 {
                (selection::loocv_scores(data, kernel, regressors, grid)?, None)
            } else {
                let m = nystrom_m.min(n);
                let s = krr::nystrom_loocv_scores(
                    kernel,
                    &regressors.points(data),
                    data.outcomes(),
                    &grid.values,
                    m,
                    rng::derive(seed, rng::stream::NYSTROM),
                )?;
                (s, Some(m))
            };
            let chosen_index = selection::first_minimum(&scores);
            let lambda = grid.values[chosen_index];
            let model = KrrModel::fit(kernel, &regressors.points(data), data.outcomes(), lambda)?;
            Ok((
                model,
                TuningReport::Loocv {
                    grid: grid.values.clone(),
                    scores,
                    chosen_lambda: lambda,
                    chosen_index,
                    nystrom_m: used,
                },
            ))
        }
    }
}

/// Stage-1 fit averaged over stored covariates, with no second smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PluginModel {
    pub stage1: KrrModel,
    pub covariates: Points,
    pub tuning: TuningReport,
}

impl PluginModel {
    pub fn predict(&self, a_grid: &[f64]) -> Result<Vec<f64>> {
        marginalize(&self.stage1, &self.covariates, a_grid)
    }
}

/// Plug-in estimate; averages over all `n` covariate rows of `data`.
pub fn plugin_estimate(
    data: &Dataset,
    kernel_f: &KernelSpec,
    grid: &RegularizerGrid,
    tuning: Tuning,
    split_seed: u64,
) -> Result<PluginModel> {
    let (stage1, report) = tune(data, kernel_f, Regressors::Joint, grid, tuning, split_seed)?;
    Ok(PluginModel {
        stage1,
        covariates: data.covariates().clone(),
        tuning: report,
    })
}

/// Ridge regression of `y` on `a` alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectModel {
    pub krr: KrrModel,
    pub tuning: TuningReport,
}

impl DirectModel {
    pub fn predict(&self, a_grid: &[f64]) -> Result<Vec<f64>> {
        self.krr.predict(&Points::from_scalars(a_grid))
    }
}

pub fn direct_estimate(
    data: &Dataset,
    kernel_a: &KernelSpec,
    grid: &RegularizerGrid,
    split_seed: u64,
) -> Result<DirectModel> {
    let (krr, tuning) = tune(
        data,
        kernel_a,
        Regressors::TreatmentOnly,
        grid,
        Tuning::Holdout,
        split_seed,
    )?;
    Ok(DirectModel { krr, tuning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BaseKernel, Smoothness};
    use crate::selection::make_experiment_grid;
    use crate::tef::{marginalize_naive, Interval};

    fn m32(l: f64) -> KernelSpec {
        KernelSpec::joint(BaseKernel::matern(Smoothness::ThreeHalves, l).unwrap())
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut r = rng::rng(seed);
        let x = Points::new(2, (0..2 * n).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect()).unwrap();
        let a: Vec<f64> = (0..n).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
        let y = a
            .iter()
            .zip(x.rows())
            .map(|(a, x)| a.sin() + x[0] * x[1] + 0.1 * rng::normal(&mut r))
            .collect();
        Dataset::new(x, a, y, Interval::new(-1.0, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn plugin_matches_marginalize() {
        let data = toy(40, 1);
        let grid = make_experiment_grid(20, 0.1, 5).unwrap();
        let model = plugin_estimate(&data, &m32(1.0), &grid, Tuning::Holdout, 3).unwrap();
        let g = [-0.9, -0.3, 0.0, 0.4, 0.95];
        let p = model.predict(&g).unwrap();
        let m = marginalize(&model.stage1, data.covariates(), &g).unwrap();
        assert_eq!(p, m);
        let naive = marginalize_naive(&model.stage1, data.covariates(), &g).unwrap();
        for (a, b) in p.iter().zip(&naive) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn plugin_with_identical_covariates_is_stage1_slice() {
        let base = toy(30, 2);
        let same = Points::new(2, [0.2, 0.1].repeat(30)).unwrap();
        let data = Dataset::new(same, base.treatments().to_vec(), base.outcomes().to_vec(), base.domain()).unwrap();
        let grid = make_experiment_grid(15, 0.1, 3).unwrap();
        let model = plugin_estimate(&data, &m32(1.0), &grid, Tuning::Holdout, 1).unwrap();
        let g = [-0.5, 0.5];
        let z = Points::with_trailing(&data.covariates().select(&[0, 0]), &g).unwrap();
        let direct = model.stage1.predict(&z).unwrap();
        let p = model.predict(&g).unwrap();
        for (a, b) in p.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loocv_tuning_modes() {
        let data = toy(60, 4);
        let grid = make_experiment_grid(60, 0.1, 5).unwrap();
        let exact = plugin_estimate(&data, &m32(1.0), &grid, Tuning::Loocv { nystrom_m: 0 }, 1).unwrap();
        let full = plugin_estimate(&data, &m32(1.0), &grid, Tuning::Loocv { nystrom_m: 60 }, 1).unwrap();
        match (&exact.tuning, &full.tuning) {
            (TuningReport::Loocv { scores: a, .. }, TuningReport::Loocv { scores: b, nystrom_m, .. }) => {
                assert_eq!(*nystrom_m, Some(60));
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-6 * x);
                }
            }
            _ => panic!("expected loocv reports"),
        }
        assert_eq!(exact.stage1.len(), 60);
        let small = plugin_estimate(&data, &m32(1.0), &grid, Tuning::Loocv { nystrom_m: 700 }, 1).unwrap();
        assert!(matches!(small.tuning, TuningReport::Loocv { nystrom_m: Some(60), .. }));
    }

    #[test]
    fn direct_on_constant_outcomes() {
        let data = toy(30, 5).with_outcomes(vec![1.5; 30]).unwrap();
        let grid = make_experiment_grid(15, 0.1, 4).unwrap();
        let model = direct_estimate(&data, &m32(1.0), &grid, 2).unwrap();
        assert_eq!(model.krr.training_points.dim(), 1);
        let p = model.predict(&[-0.5, 0.0, 0.5]).unwrap();
        for v in p {
            assert!((v - 1.5).abs() < 0.2, "{v}");
        }
    }

    #[test]
    fn tuning_serialization() {
        let t: Tuning = serde_json::from_str(r#"{"mode": "loocv"}"#).unwrap();
        assert_eq!(t, Tuning::Loocv { nystrom_m: 700 });
        let h: Tuning = serde_json::from_str(r#"{"mode": "holdout"}"#).unwrap();
        assert_eq!(h, Tuning::Holdout);
    }
}
