use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use tef_core::eval::bench::{fit_method, run_benchmark_logged, BenchOutcome, Fitted, MethodResult};
use tef_core::eval::{mise_quadrature, rate_fit, spectral_report, trend_check, BenchConfig, Method, Quadrature};
use tef_core::selection::select_model;
use tef_core::synth::{load_column, load_csv, save_csv, semi_synthetic_inject, GroundTruth};
use tef_core::tef::Dataset;
use tef_core::{rng, Points};

use crate::config::{hex_digest, DgpConfig, ExperimentConfig, RatesSection, SpectralPoints};
use crate::CliError;

/// Artifact writer that stamps every JSON file with the config hash.
pub struct Output {
    dir: PathBuf,
    hash: String,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(format!("{}: {e}", path.display()))
}

impl Output {
    pub fn new(dir: &Path, hash: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Output {
            dir: dir.to_path_buf(),
            hash,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn json(&self, name: &str, body: impl Serialize) -> Result<(), CliError> {
        let mut v = serde_json::to_value(body).map_err(|e| CliError::data(e.to_string()))?;
        if let Value::Object(map) = &mut v {
            map.insert("config_hash".into(), Value::String(self.hash.clone()));
        }
        let mut text = serde_json::to_string_pretty(&v).map_err(|e| CliError::data(e.to_string()))?;
        text.push('\n');
        let path = self.path(name);
        std::fs::write(&path, text).map_err(|e| io_error(&path, e))
    }

    /// Writes a CSV and returns its SHA-256 for the JSON sidecar.
    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<String, CliError> {
        let path = self.path(name);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| io_error(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| io_error(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| io_error(&path, e))?;
        std::fs::write(&path, &bytes).map_err(|e| io_error(&path, e))?;
        Ok(hex_digest(&bytes))
    }

    fn digest_of(&self, name: &str) -> Result<String, CliError> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| io_error(&path, e))?;
        Ok(hex_digest(&bytes))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

struct Loaded {
    data: Dataset,
    truth: Option<GroundTruth>,
    meta: Value,
}

fn load_data(cfg: &ExperimentConfig, data_path: Option<&Path>) -> Result<Loaded, CliError> {
    if let Some(path) = data_path {
        let data = load_csv(path, &cfg.dgp.schema())?;
        return Ok(Loaded {
            data,
            truth: None,
            meta: json!({ "generator": "csv", "path": path }),
        });
    }
    match &cfg.dgp {
        DgpConfig::Csv {
            path,
            schema,
            fitted_column,
        } => {
            let mut data = load_csv(path, schema)?;
            if let Some(col) = fitted_column {
                let fitted = load_column(path, col)?;
                data = semi_synthetic_inject(&data, &fitted, cfg.seed)?;
            }
            Ok(Loaded {
                data,
                truth: None,
                meta: json!({ "generator": "csv", "path": path, "injected_from": fitted_column }),
            })
        }
        dgp => {
            let n = dgp
                .n()
                .ok_or_else(|| CliError::config("[dgp] needs `n` to generate a dataset"))?;
            let template = dgp.template().expect("generator dgp");
            let sample = template.generate(n, cfg.seed)?;
            Ok(Loaded {
                data: sample.data,
                truth: Some(sample.truth),
                meta: serde_json::to_value(&sample.meta).map_err(|e| CliError::data(e.to_string()))?,
            })
        }
    }
}

pub fn simulate(cfg: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let loaded = load_data(cfg, None)?;
    let path = out.path("data.csv");
    save_csv(&path, &loaded.data)?;
    out.json(
        "data.meta.json",
        json!({
            "data_file": "data.csv",
            "data_sha256": out.digest_of("data.csv")?,
            "rows": loaded.data.len(),
            "covariate_dim": loaded.data.covariate_dim(),
            "domain": loaded.data.domain(),
            "generator": loaded.meta,
            "truth": loaded.truth,
            "effective_config": cfg.canonical_json(),
        }),
    )
}

fn reference_mise(cfg: &ExperimentConfig, data: &Dataset, truth: &GroundTruth, fitted: &Fitted) -> Result<f64, CliError> {
    let quad = Quadrature::for_distribution(&cfg.estimator.p_ref(data), 1024)?;
    let est = fitted.predict(&quad.nodes)?;
    let t: Vec<f64> = quad.nodes.iter().map(|&a| truth.h(a)).collect();
    Ok(mise_quadrature(&est, &t, &quad)?)
}

fn model_json(method: Method, fitted: &Fitted) -> Result<Value, CliError> {
    let model = match fitted {
        Fitted::TwoStage { model, .. } => serde_json::to_value(model),
        Fitted::Plugin(m) => serde_json::to_value(m),
        Fitted::Direct(m) => serde_json::to_value(m),
    }
    .map_err(|e| CliError::data(e.to_string()))?;
    Ok(json!({ "method": method, "model": model }))
}

fn write_predictions(
    cfg: &ExperimentConfig,
    out: &Output,
    data: &Dataset,
    fitted: &Fitted,
) -> Result<String, CliError> {
    let grid = data.domain().grid(cfg.fit.grid_points);
    let pred = fitted.predict(&grid)?;
    let rows: Vec<Vec<String>> = grid
        .iter()
        .zip(&pred)
        .map(|(a, h)| vec![a.to_string(), h.to_string()])
        .collect();
    out.csv("predictions.csv", &["a", "estimate"], &rows)
}

pub fn fit(cfg: &ExperimentConfig, out: &Output, data_path: Option<&Path>) -> Result<(), CliError> {
    let loaded = load_data(cfg, data_path)?;
    let data = &loaded.data;
    let kernels = cfg.kernels()?.resolve(data)?;
    let method = cfg.fit.method;
    let fitted = fit_method(method, data, &kernels, &cfg.estimator, cfg.seed)?;
    let mut model = model_json(method, &fitted)?;
    model["kernels"] = serde_json::to_value(&kernels).map_err(|e| CliError::data(e.to_string()))?;
    out.json("model.json", model)?;
    let predictions_sha256 = write_predictions(cfg, out, data, &fitted)?;
    let mise = match &loaded.truth {
        Some(t) => Some(reference_mise(cfg, data, t, &fitted)?),
        None => None,
    };
    let mut report = json!({
        "method": method,
        "rows": data.len(),
        "predictions_file": "predictions.csv",
        "predictions_sha256": predictions_sha256,
        "grid_points": cfg.fit.grid_points,
        "kernel_notes": kernels.notes,
        "mise": mise,
    });
    match &fitted {
        Fitted::TwoStage { model, selection } => {
            report["lambda"] = json!(model.lambda);
            report["lambda0"] = json!(model.lambda0);
            match selection {
                None => report["selection"] = json!("none"),
                Some(sel) => {
                    report["selection"] = json!("proxy_validation");
                    out.json("selection.json", &sel.report)?;
                }
            }
        }
        Fitted::Plugin(m) => {
            report["selection"] = json!("none");
            report["tuning"] = serde_json::to_value(&m.tuning).map_err(|e| CliError::data(e.to_string()))?;
        }
        Fitted::Direct(m) => {
            report["selection"] = json!("none");
            report["tuning"] = serde_json::to_value(&m.tuning).map_err(|e| CliError::data(e.to_string()))?;
        }
    }
    out.json("fit_report.json", report)
}

pub fn select(cfg: &ExperimentConfig, out: &Output, data_path: Option<&Path>) -> Result<(), CliError> {
    let loaded = load_data(cfg, data_path)?;
    let data = &loaded.data;
    let kernels = cfg.kernels()?.resolve(data)?;
    let settings = cfg.estimator.selection_settings(data, cfg.seed)?;
    let sel = select_model(data, &kernels.stage1, &kernels.stage2, &settings)?;
    let fitted = Fitted::TwoStage {
        model: sel.model.clone(),
        selection: None,
    };
    let mut model = model_json(Method::TwoStage, &fitted)?;
    model["kernels"] = serde_json::to_value(&kernels).map_err(|e| CliError::data(e.to_string()))?;
    out.json("model.json", model)?;
    let mut body = serde_json::to_value(&sel.report).map_err(|e| CliError::data(e.to_string()))?;
    if let Some(t) = &loaded.truth {
        let quad = Quadrature::for_distribution(&cfg.estimator.p_ref(data), 1024)?;
        let truth: Vec<f64> = quad.nodes.iter().map(|&a| t.h(a)).collect();
        let mises = sel
            .candidates
            .iter()
            .map(|c| Ok(mise_quadrature(&c.predict(&quad.nodes)?, &truth, &quad)?))
            .collect::<Result<Vec<f64>, CliError>>()?;
        body["candidate_mises"] = json!(mises);
    }
    out.json("selection.json", body)
}

fn log_seed(n: usize, k: usize, results: &[MethodResult]) {
    let parts: Vec<String> = results
        .iter()
        .map(|(m, r)| match r {
            Ok(rec) => format!("{}={:.6}", m.tag(), rec.mise),
            Err(e) => format!("{}=failed({e})", m.tag()),
        })
        .collect();
    eprintln!("n={n} seed={k} {}", parts.join(" "));
}

fn run_logged(cfg: &BenchConfig) -> Result<BenchOutcome, CliError> {
    Ok(run_benchmark_logged(cfg, &log_seed)?)
}

fn stamp(outcome: &mut BenchOutcome, hash: &str) {
    for s in &mut outcome.summaries {
        s.config_hash = Some(hash.to_string());
    }
}

pub fn bench(cfg: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let section = cfg
        .bench
        .as_ref()
        .ok_or_else(|| CliError::config("missing [bench] section"))?;
    let bc = cfg.bench_config(section.ns.clone(), section.seeds, section.methods.clone())?;
    let mut outcome = run_logged(&bc)?;
    stamp(&mut outcome, &out.hash);
    let rows: Vec<Vec<String>> = outcome
        .summaries
        .iter()
        .map(|s| {
            vec![
                s.method.tag().to_string(),
                s.n.to_string(),
                s.mean.to_string(),
                fmt_opt(s.se),
                s.seeds.to_string(),
                fmt_opt(s.secs_per_run),
            ]
        })
        .collect();
    let digest = out.csv(
        "summary.csv",
        &["method", "n", "mean_mise", "se", "seeds", "secs_per_run"],
        &rows,
    )?;
    out.json(
        "summary.json",
        json!({
            "summary_file": "summary.csv",
            "summary_sha256": digest,
            "summaries": outcome.summaries,
            "cells": outcome.cells,
        }),
    )
}

pub fn rates(cfg: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let section = cfg
        .rates
        .as_ref()
        .ok_or_else(|| CliError::config("missing [rates] section"))?;
    let body = match section {
        RatesSection::SampleSize {
            ns,
            seeds,
            method,
            predicted_exponent,
        } => {
            let bc = cfg.bench_config(ns.clone(), *seeds, vec![*method])?;
            let mut outcome = run_logged(&bc)?;
            stamp(&mut outcome, &out.hash);
            let means: Vec<f64> = outcome.summaries.iter().map(|s| s.mean).collect();
            let fit = rate_fit(ns, &means, *predicted_exponent)?;
            json!({ "sweep": "sample_size", "fit": fit, "summaries": outcome.summaries })
        }
        RatesSection::Gamma {
            n,
            gammas,
            seeds,
            method,
        } => {
            let mut summaries = Vec::new();
            for &g in gammas {
                let mut c = cfg.clone();
                if let DgpConfig::HardInstance { gamma, .. } = &mut c.dgp {
                    *gamma = g;
                }
                let bc = c.bench_config(vec![*n], *seeds, vec![*method])?;
                let mut outcome = run_logged(&bc)?;
                stamp(&mut outcome, &out.hash);
                summaries.push(outcome.summaries.remove(0));
            }
            let means: Vec<f64> = summaries.iter().map(|s| s.mean).collect();
            let ses: Vec<f64> = summaries.iter().map(|s| s.se.unwrap_or(0.0)).collect();
            let trend = trend_check(gammas, &means, &ses)?;
            json!({ "sweep": "gamma", "gammas": gammas, "trend": trend, "summaries": summaries })
        }
        RatesSection::File {
            path,
            predicted_exponent,
        } => {
            let ns: Vec<usize> = load_column(path, "n")?
                .into_iter()
                .map(|v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(CliError::data(format!("{}: column `n` must hold positive integers", path.display())))
                    }
                })
                .collect::<Result<_, _>>()?;
            let means = load_column(path, "mean_mise")?;
            let fit = rate_fit(&ns, &means, *predicted_exponent)?;
            json!({ "sweep": "file", "source": path, "fit": fit })
        }
    };
    out.json("rates.json", body)
}

pub fn spectral(cfg: &ExperimentConfig, out: &Output, data_path: Option<&Path>) -> Result<(), CliError> {
    let section = cfg.spectral.clone().unwrap_or_default();
    let loaded = load_data(cfg, data_path)?;
    let mut data = loaded.data;
    if let Some(m) = section.max_points {
        if m < data.len() {
            let mut r = rng::rng(rng::derive(cfg.seed, rng::stream::SUBSAMPLE));
            let mut idx: Vec<usize> = rng::permutation(&mut r, data.len())[..m].to_vec();
            idx.sort_unstable();
            data = data.subset(&idx)?;
        }
    }
    let template = match &section.kernel {
        Some(k) => k.clone(),
        None => cfg.kernels()?.stage1.clone(),
    };
    let (kernel, points) = match section.points {
        SpectralPoints::Joint => (
            template.resolve_joint(data.covariates(), data.treatments())?,
            data.joint_points(),
        ),
        SpectralPoints::Covariates => (template.resolve_on(data.covariates())?, data.covariates().clone()),
        SpectralPoints::Treatment => {
            let p = Points::from_scalars(data.treatments());
            (template.resolve_on(&p)?, p)
        }
    };
    let report = spectral_report(&kernel, &points, &section.lambdas)?;
    out.json(
        "spectral.json",
        json!({
            "kernel": kernel,
            "points": section.points,
            "rows": points.len(),
            "dim": points.dim(),
            "report": report,
        }),
    )
}
