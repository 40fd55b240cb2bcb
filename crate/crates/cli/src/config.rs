//! Experiment configuration file (TOML).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tef_core::eval::bench::{BenchConfig, DgpTemplate, EstimatorSettings, KernelTemplates};
use tef_core::eval::Method;
use tef_core::kernels::KernelTemplate;
use tef_core::synth::{CsvSchema, ResponseCurve};
use tef_core::tef::Interval;

use crate::CliError;

fn default_q() -> usize {
    10
}

fn one() -> f64 {
    1.0
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DgpConfig {
    Synthetic {
        #[serde(default)]
        n: Option<usize>,
        #[serde(default = "default_q")]
        q: usize,
        #[serde(default = "one")]
        noise_sd: f64,
    },
    HardInstance {
        #[serde(default)]
        n: Option<usize>,
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
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
        /// Column of fitted values; when present the outcome is replaced by
        /// a sign-flipped residual injection around it.
        #[serde(default)]
        fitted_column: Option<String>,
    },
}

impl DgpConfig {
    pub fn template(&self) -> Option<DgpTemplate> {
        match *self {
            DgpConfig::Synthetic { q, noise_sd, .. } => Some(DgpTemplate::Synthetic { q, noise_sd }),
            DgpConfig::HardInstance {
                d,
                gamma,
                tau,
                c0,
                curve,
                noise_sd,
                ..
            } => Some(DgpTemplate::HardInstance {
                d,
                gamma,
                tau,
                c0,
                curve,
                noise_sd,
            }),
            DgpConfig::Csv { .. } => None,
        }
    }

    pub fn n(&self) -> Option<usize> {
        match *self {
            DgpConfig::Synthetic { n, .. } | DgpConfig::HardInstance { n, .. } => n,
            DgpConfig::Csv { .. } => None,
        }
    }

    /// Schema for reading a dataset file produced by or for this generator.
    pub fn schema(&self) -> CsvSchema {
        match self {
            DgpConfig::Synthetic { .. } => CsvSchema {
                domain: Some(Interval { lo: -PI, hi: PI }),
                ..CsvSchema::default()
            },
            DgpConfig::HardInstance { .. } => CsvSchema {
                domain: Some(Interval { lo: 0.0, hi: 1.0 }),
                ..CsvSchema::default()
            },
            DgpConfig::Csv { schema, .. } => schema.clone(),
        }
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
pub struct BenchSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub ns: Vec<usize>,
    pub seeds: usize,
    #[serde(default = "default_quadrature")]
    pub quadrature_points: usize,
    #[serde(default = "default_mc_points")]
    pub mc_check_points: usize,
    #[serde(default)]
    pub allow_failures: bool,
    #[serde(default)]
    pub record_timing: bool,
}

fn two_stage() -> Method {
    Method::TwoStage
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "sweep", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatesSection {
    /// Mean MISE over sample sizes, then a log-log fit.
    SampleSize {
        ns: Vec<usize>,
        seeds: usize,
        #[serde(default = "two_stage")]
        method: Method,
        #[serde(default)]
        predicted_exponent: Option<f64>,
    },
    /// Mean MISE over overlap degrees of the hard instance at fixed `n`.
    Gamma {
        n: usize,
        gammas: Vec<f64>,
        seeds: usize,
        #[serde(default = "two_stage")]
        method: Method,
    },
    /// Log-log fit of a CSV with columns `n` and `mean_mise`.
    File {
        path: PathBuf,
        #[serde(default)]
        predicted_exponent: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralPoints {
    Joint,
    Covariates,
    Treatment,
}

fn default_spectral_points() -> SpectralPoints {
    SpectralPoints::Joint
}

fn default_lambdas() -> Vec<f64> {
    vec![1e-5, 1e-4, 1e-3, 1e-2, 1e-1]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    /// Kernel to analyse; the stage-1 kernel when unset.
    #[serde(default)]
    pub kernel: Option<KernelTemplate>,
    #[serde(default = "default_spectral_points")]
    pub points: SpectralPoints,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    /// Random subsample size for large datasets.
    #[serde(default)]
    pub max_points: Option<usize>,
}

impl Default for SpectralSection {
    fn default() -> Self {
        SpectralSection {
            kernel: None,
            points: default_spectral_points(),
            lambdas: default_lambdas(),
            max_points: None,
        }
    }
}

fn default_grid_points() -> usize {
    256
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "two_stage")]
    pub method: Method,
    /// Size of the prediction grid over the treatment domain.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            method: Method::TwoStage,
            grid_points: default_grid_points(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub dgp: DgpConfig,
    #[serde(default)]
    pub kernels: Option<KernelTemplates>,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub bench: Option<BenchSection>,
    #[serde(default)]
    pub rates: Option<RatesSection>,
    #[serde(default)]
    pub spectral: Option<SpectralSection>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message)))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if let Some(b) = &self.bench {
            if b.ns.is_empty() || b.seeds == 0 || b.methods.is_empty() {
                return Err(CliError::config("[bench] needs non-empty methods and ns, and seeds >= 1"));
            }
        }
        if let Some(RatesSection::Gamma { gammas, .. }) = &self.rates {
            if !matches!(self.dgp, DgpConfig::HardInstance { .. }) {
                return Err(CliError::config("a gamma sweep needs dgp kind = \"hard_instance\""));
            }
            if gammas.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
                return Err(CliError::config("gammas must lie in (0, 1]"));
            }
        }
        if self.fit.grid_points < 2 {
            return Err(CliError::config("[fit] grid_points must be at least 2"));
        }
        Ok(())
    }

    pub fn kernels(&self) -> Result<&KernelTemplates, CliError> {
        self.kernels
            .as_ref()
            .ok_or_else(|| CliError::config("missing [kernels] section"))
    }

    /// Canonical JSON of the effective configuration: sorted keys, defaults filled in.
    pub fn canonical_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON text.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("config serializes");
        hex_digest(text.as_bytes())
    }

    pub fn bench_config(&self, ns: Vec<usize>, seeds: usize, methods: Vec<Method>) -> Result<BenchConfig, CliError> {
        let dgp = self
            .dgp
            .template()
            .ok_or_else(|| CliError::config("benchmarks need a generator with known ground truth, not a csv dgp"))?;
        let b = self.bench.clone();
        Ok(BenchConfig {
            methods,
            ns,
            seeds,
            master_seed: self.seed,
            dgp,
            kernels: self.kernels()?.clone(),
            estimator: self.estimator.clone(),
            quadrature_points: b.as_ref().map_or(default_quadrature(), |b| b.quadrature_points),
            mc_check_points: b.as_ref().map_or(default_mc_points(), |b| b.mc_check_points),
            allow_failures: b.as_ref().is_some_and(|b| b.allow_failures),
            record_timing: b.as_ref().is_some_and(|b| b.record_timing),
        })
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
seed = 3

[dgp]
kind = "synthetic"
n = 100

[kernels]
stage1 = { family = "matern1.5", length_scale = 3 }
stage2 = { family = "matern2.5", length_scale = "match" }

[estimator]
lambda0 = { c0 = 0.05 }
"#;

    #[test]
    fn parses_and_fills_defaults() {
        let cfg = ExperimentConfig::parse(BASIC).unwrap();
        assert_eq!(cfg.dgp.n(), Some(100));
        assert!(matches!(cfg.dgp, DgpConfig::Synthetic { q: 10, .. }));
        assert_eq!(cfg.fit.grid_points, 256);
        assert_eq!(cfg.out_dir, PathBuf::from("out"));
        let v = cfg.canonical_json();
        assert_eq!(v["estimator"]["plugin_tuning"]["mode"], "holdout");
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{BASIC}\nbogus = 1\n");
        assert!(ExperimentConfig::parse(&bad).is_err());
        let bad_dgp = BASIC.replace("n = 100", "n = 100\nwidth = 2");
        assert!(ExperimentConfig::parse(&bad_dgp).is_err());
        let bad_est = BASIC.replace("lambda0 = { c0 = 0.05 }", "lambda0 = { c0 = 0.05 }\nlamda = 0.1");
        assert!(ExperimentConfig::parse(&bad_est).is_err());
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::parse(BASIC).unwrap();
        let b = ExperimentConfig::parse(&BASIC.replace("seed = 3", "seed = 3\n")).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse(&BASIC.replace("seed = 3", "seed = 4")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn gamma_sweep_needs_hard_instance() {
        let text = format!("{BASIC}\n[rates]\nsweep = \"gamma\"\nn = 100\ngammas = [0.5, 1.0]\nseeds = 2\n");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            hex_digest(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
