//! Multi-seed benchmark runner.
//!
//! The data seed of replicate `k` at size `n` is
//! `derive(derive(master_seed, n), k)`. All methods in a cell see the same
//! data, and each replicate can be rerun alone.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mise_monte_carlo, mise_quadrature, sup_error, Quadrature, SUP_GRID_MIN};
use crate::baselines::{direct_estimate, plugin_estimate, DirectModel, PluginModel, Tuning};
use crate::kernels::{KernelSpec, KernelTemplate};
use crate::selection::{
    make_experiment_grid, make_theorem_grid, select_model, RegularizerGrid, Selection,
    SelectionSettings, DEFAULT_GRID_C, DEFAULT_GRID_LEN,
};
use crate::synth::{gen_hard_instance, gen_synthetic, HardInstanceSpec, ResponseCurve, Sample, SyntheticSpec};
use crate::tef::{estimate_tef, Dataset, Distribution, Lambda0, SamplingSpec, TefModel};
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    TwoStage,
    Plugin,
    Direct,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::TwoStage => "two_stage",
            Method::Plugin => "plugin",
            Method::Direct => "direct",
        }
    }
}

fn default_q() -> usize {
    10
}

fn one() -> f64 {
    1.0
}

/// Generator with everything but `n` and the seed fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpTemplate {
    Synthetic {
        #[serde(default = "default_q")]
        q: usize,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    HardInstance {
        d: usize,
        gamma: f64,
        #[serde(default = "one")]
        tau: f64,
        #[serde(default = "one")]
        c0: f64,
        #[serde(default)]
        curve: ResponseCurve,
        #[serde(default = "one")]
        noise_sd: f64,
    },
}

impl DgpTemplate {
    pub fn generate(&self, n: usize, seed: u64) -> Result<Sample> {
        match *self {
            DgpTemplate::Synthetic { q, noise_sd } => gen_synthetic(&SyntheticSpec { n, q, noise_sd, seed }),
            DgpTemplate::HardInstance {
                d,
                gamma,
                tau,
                c0,
                curve,
                noise_sd,
            } => gen_hard_instance(&HardInstanceSpec {
                n,
                d,
                gamma,
                tau,
                c0,
                curve,
                noise_sd,
                seed,
            }),
        }
    }
}

/// Kernel templates for every method; `direct` falls back to `stage2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelTemplates {
    pub stage1: KernelTemplate,
    pub stage2: KernelTemplate,
    #[serde(default)]
    pub direct: Option<KernelTemplate>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodKernels {
    pub stage1: KernelSpec,
    pub stage2: KernelSpec,
    pub direct: KernelSpec,
    pub notes: Vec<String>,
}

impl KernelTemplates {
    pub fn resolve(&self, data: &Dataset) -> Result<MethodKernels> {
        let pair = KernelTemplate::resolve_pair(&self.stage1, &self.stage2, data.covariates(), data.treatments())?;
        let (direct, note) = self
            .direct
            .as_ref()
            .unwrap_or(&self.stage2)
            .resolve_treatment(data.treatments(), Some(&pair.stage1))?;
        let mut notes = pair.notes;
        notes.extend(note.map(|n| format!("direct: {n}")));
        Ok(MethodKernels {
            stage1: pair.stage1,
            stage2: pair.stage2,
            direct,
            notes,
        })
    }
}

fn default_c() -> f64 {
    DEFAULT_GRID_C
}

fn default_len() -> usize {
    DEFAULT_GRID_LEN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    /// `c 2^{k-1} / n1` with `n1 = floor(n / 2)`.
    Experiment {
        #[serde(default = "default_c")]
        c: f64,
        #[serde(default = "default_len")]
        len: usize,
    },
    Theorem,
    Custom { values: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Experiment {
            c: DEFAULT_GRID_C,
            len: DEFAULT_GRID_LEN,
        }
    }
}

impl GridSpec {
    pub fn build(&self, n: usize) -> Result<RegularizerGrid> {
        match self {
            GridSpec::Experiment { c, len } => make_experiment_grid(n / 2, *c, *len),
            GridSpec::Theorem => make_theorem_grid(n),
            GridSpec::Custom { values } => RegularizerGrid::custom(values.clone()),
        }
    }
}

/// Estimator settings shared by the benchmark and the command line.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSettings {
    #[serde(default)]
    pub lambda0: Lambda0,
    #[serde(default)]
    pub grid: GridSpec,
    /// Fixed second-stage regularizer; skips selection when set.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub proxy_lambda: Option<f64>,
    /// Test points for proxy validation; `n` when unset.
    #[serde(default)]
    pub test_points: Option<usize>,
    /// Query treatments in fixed-regularizer mode; `n` when unset.
    #[serde(default)]
    pub queries: Option<usize>,
    /// Uniform on the treatment domain when unset.
    #[serde(default)]
    pub p_samp: Option<Distribution>,
    /// Uniform on the treatment domain when unset.
    #[serde(default)]
    pub p_ref: Option<Distribution>,
    #[serde(default)]
    pub plugin_tuning: Tuning,
    /// Grid for plug-in and direct tuning; `grid` when unset.
    #[serde(default)]
    pub baseline_grid: Option<GridSpec>,
}

impl EstimatorSettings {
    pub fn p_samp(&self, data: &Dataset) -> Distribution {
        self.p_samp.clone().unwrap_or_else(|| Distribution::uniform(data.domain()))
    }

    pub fn p_ref(&self, data: &Dataset) -> Distribution {
        self.p_ref.clone().unwrap_or_else(|| Distribution::uniform(data.domain()))
    }

    pub fn selection_settings(&self, data: &Dataset, seed: u64) -> Result<SelectionSettings> {
        Ok(SelectionSettings {
            lambda0: self.lambda0,
            grid: self.grid.build(data.len())?,
            proxy_lambda: self.proxy_lambda,
            test_points: self.test_points,
            p_samp: self.p_samp(data),
            p_ref: self.p_ref(data),
            seed,
        })
    }

    fn baseline_grid(&self, n: usize) -> Result<RegularizerGrid> {
        self.baseline_grid.as_ref().unwrap_or(&self.grid).build(n)
    }
}

/// A fitted estimator of any method.
pub enum Fitted {
    TwoStage {
        model: TefModel,
        selection: Option<Box<Selection>>,
    },
    Plugin(PluginModel),
    Direct(DirectModel),
}

impl Fitted {
    pub fn predict(&self, a_grid: &[f64]) -> Result<Vec<f64>> {
        match self {
            Fitted::TwoStage { model, .. } => model.predict(a_grid),
            Fitted::Plugin(m) => m.predict(a_grid),
            Fitted::Direct(m) => m.predict(a_grid),
        }
    }

    pub fn chosen_lambda(&self) -> Option<f64> {
        match self {
            Fitted::TwoStage { selection, .. } => selection.as_ref().map(|s| s.report.chosen_lambda),
            Fitted::Plugin(m) => Some(m.tuning.chosen_lambda()),
            Fitted::Direct(m) => Some(m.tuning.chosen_lambda()),
        }
    }
}

/// Fits one method; `seed` drives every split and sampling step.
pub fn fit_method(
    method: Method,
    data: &Dataset,
    kernels: &MethodKernels,
    settings: &EstimatorSettings,
    seed: u64,
) -> Result<Fitted> {
    let n = data.len();
    match method {
        Method::TwoStage => match settings.lambda {
            Some(lambda) => {
                let sampling = SamplingSpec {
                    distribution: settings.p_samp(data),
                    count: settings.queries.unwrap_or(n),
                    seed: rng::derive(seed, rng::stream::QUERIES_TRAIN),
                };
                let lambda0 = settings.lambda0.resolve(n)?;
                let model = estimate_tef(data, &kernels.stage1, &kernels.stage2, lambda0, lambda, &sampling)?;
                Ok(Fitted::TwoStage { model, selection: None })
            }
            None => {
                let sel = select_model(
                    data,
                    &kernels.stage1,
                    &kernels.stage2,
                    &settings.selection_settings(data, seed)?,
                )?;
                Ok(Fitted::TwoStage {
                    model: sel.model.clone(),
                    selection: Some(Box::new(sel)),
                })
            }
        },
        Method::Plugin => Ok(Fitted::Plugin(plugin_estimate(
            data,
            &kernels.stage1,
            &settings.baseline_grid(n)?,
            settings.plugin_tuning,
            seed,
        )?)),
        Method::Direct => Ok(Fitted::Direct(direct_estimate(
            data,
            &kernels.direct,
            &settings.baseline_grid(n)?,
            seed,
        )?)),
    }
}

fn default_methods() -> Vec<Method> {
    vec![Method::TwoStage, Method::Plugin, Method::Direct]
}

fn default_quadrature() -> usize {
    1024
}

fn default_mc_points() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    pub dgp: DgpTemplate,
    pub kernels: KernelTemplates,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    /// Nodes of the MISE quadrature rule.
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
    /// Reference draws for the Monte Carlo cross-check; 0 disables it.
    #[serde(default = "default_mc_points")]
    pub mc_check_points: usize,
    /// Record failed seeds and continue instead of aborting.
    #[serde(default)]
    pub allow_failures: bool,
    /// Wall-clock timing is not reproducible and is left out unless asked for.
    #[serde(default)]
    pub record_timing: bool,
}

impl BenchConfig {
    pub fn data_seed(&self, n: usize, seed_index: usize) -> u64 {
        rng::derive(rng::derive(self.master_seed, n as u64), seed_index as u64)
    }

    pub fn validated(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Empty("methods"));
        }
        if self.ns.is_empty() {
            return Err(Error::Empty("ns"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds", "need at least one seed"));
        }
        if self.quadrature_points < 2 {
            return Err(Error::invalid("quadrature_points", "need at least 2"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloCheck {
    pub mean: f64,
    pub std_error: f64,
    /// Quadrature MISE within three Monte Carlo standard errors.
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed_index: usize,
    pub data_seed: u64,
    pub mise: f64,
    pub sup_error: Option<f64>,
    pub mc_check: Option<MonteCarloCheck>,
    pub chosen_lambda: Option<f64>,
    /// MISE of every fitted second-stage candidate, in grid order.
    pub candidate_mises: Option<Vec<f64>>,
    pub secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailedSeed {
    pub seed_index: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub n: usize,
    pub seeds: usize,
    pub per_seed_mise: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(seeds)`; undefined for one seed.
    pub se: Option<f64>,
    pub secs_per_run: Option<f64>,
    pub failed: Vec<FailedSeed>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
}

impl RunSummary {
    pub fn from_records(method: Method, n: usize, records: &[SeedRecord], failed: Vec<FailedSeed>) -> Self {
        let per_seed_mise: Vec<f64> = records.iter().map(|r| r.mise).collect();
        let (mean, se) = mean_se(&per_seed_mise);
        let secs_per_run = if records.is_empty() || records.iter().any(|r| r.secs.is_none()) {
            None
        } else {
            Some(records.iter().filter_map(|r| r.secs).sum::<f64>() / records.len() as f64)
        };
        RunSummary {
            method,
            n,
            seeds: per_seed_mise.len(),
            per_seed_mise,
            mean,
            se,
            secs_per_run,
            failed,
            config_hash: None,
        }
    }
}

/// Mean and standard error `sd / sqrt(k)` with the `k - 1` denominator.
pub fn mean_se(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1) as f64;
    (mean, Some((var / k as f64).sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecords {
    pub method: Method,
    pub n: usize,
    pub records: Vec<SeedRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub summaries: Vec<RunSummary>,
    pub cells: Vec<CellRecords>,
}

/// Result of one method on one replicate.
pub type MethodResult = (Method, Result<SeedRecord>);

struct Evaluator {
    quad: Quadrature,
    truth_quad: Vec<f64>,
}

fn evaluate(
    config: &BenchConfig,
    sample: &Sample,
    eval: &Evaluator,
    fitted: &Fitted,
    seed_index: usize,
    data_seed: u64,
) -> Result<SeedRecord> {
    let est = fitted.predict(&eval.quad.nodes)?;
    let mise = mise_quadrature(&est, &eval.truth_quad, &eval.quad)?;
    let sup = if eval.quad.nodes.len() >= SUP_GRID_MIN {
        Some(sup_error(&est, &eval.truth_quad)?)
    } else {
        None
    };
    let mc_check = if config.mc_check_points > 0 {
        let draws = config
            .estimator
            .p_ref(&sample.data)
            .sample(config.mc_check_points, rng::derive(data_seed, rng::stream::MC_CHECK))?;
        let truth: Vec<f64> = draws.iter().map(|&a| sample.truth.h(a)).collect();
        let mc = mise_monte_carlo(&fitted.predict(&draws)?, &truth)?;
        Some(MonteCarloCheck {
            mean: mc.mean,
            std_error: mc.std_error,
            agrees: (mc.mean - mise).abs() <= 3.0 * mc.std_error,
        })
    } else {
        None
    };
    let candidate_mises = match fitted {
        Fitted::TwoStage {
            selection: Some(sel), ..
        } => Some(
            sel.candidates
                .iter()
                .map(|c| mise_quadrature(&c.predict(&eval.quad.nodes)?, &eval.truth_quad, &eval.quad))
                .collect::<Result<Vec<f64>>>()?,
        ),
        _ => None,
    };
    Ok(SeedRecord {
        seed_index,
        data_seed,
        mise,
        sup_error: sup,
        mc_check,
        chosen_lambda: fitted.chosen_lambda(),
        candidate_mises,
        secs: None,
    })
}

/// Runs every configured method on replicate `seed_index` at size `n`.
///
/// Data-generation and kernel-resolution failures are reported against every
/// method.
pub fn run_seed(config: &BenchConfig, n: usize, seed_index: usize) -> Vec<MethodResult> {
    let data_seed = config.data_seed(n, seed_index);
    let prepared = (|| -> Result<(Sample, MethodKernels, Evaluator)> {
        let sample = config.dgp.generate(n, data_seed)?;
        let kernels = config.kernels.resolve(&sample.data)?;
        let quad = Quadrature::for_distribution(&config.estimator.p_ref(&sample.data), config.quadrature_points)?;
        let truth_quad = quad.nodes.iter().map(|&a| sample.truth.h(a)).collect();
        Ok((sample, kernels, Evaluator { quad, truth_quad }))
    })();
    let (sample, kernels, eval) = match prepared {
        Ok(p) => p,
        Err(e) => return config.methods.iter().map(|&m| (m, Err(e.clone()))).collect(),
    };
    config
        .methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let record = fit_method(method, &sample.data, &kernels, &config.estimator, data_seed).and_then(|fitted| {
                let secs = config.record_timing.then(|| start.elapsed().as_secs_f64());
                let mut rec = evaluate(config, &sample, &eval, &fitted, seed_index, data_seed)?;
                rec.secs = secs;
                Ok(rec)
            });
            (method, record)
        })
        .collect()
}

/// Runs all cells, seeds in parallel, and aggregates in seed order.
///
/// `log` is called once per finished replicate.
pub fn run_benchmark_logged(
    config: &BenchConfig,
    log: &(dyn Fn(usize, usize, &[MethodResult]) + Sync),
) -> Result<BenchOutcome> {
    config.validated()?;
    let mut summaries = Vec::new();
    let mut cells = Vec::new();
    for &n in &config.ns {
        let results: Vec<Vec<MethodResult>> = (0..config.seeds)
            .into_par_iter()
            .map(|k| {
                let r = run_seed(config, n, k);
                log(n, k, &r);
                r
            })
            .collect();
        let mut columns: Vec<Vec<Result<SeedRecord>>> = config.methods.iter().map(|_| Vec::new()).collect();
        for per_method in results {
            for (mi, (_, r)) in per_method.into_iter().enumerate() {
                columns[mi].push(r);
            }
        }
        for (&method, column) in config.methods.iter().zip(columns) {
            let mut records = Vec::new();
            let mut failed = Vec::new();
            for (k, result) in column.into_iter().enumerate() {
                match result {
                    Ok(rec) => records.push(rec),
                    Err(e) => {
                        if !config.allow_failures {
                            return Err(Error::Seed {
                                seed: k as u64,
                                source: Box::new(e),
                            });
                        }
                        failed.push(FailedSeed {
                            seed_index: k,
                            error: e.to_string(),
                        });
                    }
                }
            }
            summaries.push(RunSummary::from_records(method, n, &records, failed));
            cells.push(CellRecords { method, n, records });
        }
    }
    Ok(BenchOutcome { summaries, cells })
}

pub fn run_benchmark(config: &BenchConfig) -> Result<BenchOutcome> {
    run_benchmark_logged(config, &|_, _, _| {})
}
