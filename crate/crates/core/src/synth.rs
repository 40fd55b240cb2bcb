//! Data generators, CSV I/O and semi-synthetic outcome injection.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::{self, RngAlgorithms, ALGORITHMS};
use crate::tef::{Dataset, Interval};
use crate::{Error, Points, Result};

fn default_q() -> usize {
    10
}

fn one() -> f64 {
    1.0
}

/// Confounded benchmark design on `[-1, 1]^q x [-pi, pi]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default = "one")]
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResponseCurve {
    /// `scale * sin(pi a)`.
    Sine { scale: f64 },
    /// `slope * a`.
    Linear { slope: f64 },
}

impl Default for ResponseCurve {
    fn default() -> Self {
        ResponseCurve::Sine { scale: 1.0 }
    }
}

impl ResponseCurve {
    pub fn eval(&self, a: f64) -> f64 {
        match *self {
            ResponseCurve::Sine { scale } => scale * (PI * a).sin(),
            ResponseCurve::Linear { slope } => slope * a,
        }
    }
}

/// Weak-overlap design: a point mass at `A = 0` mixed with a covariate-tilted
/// density on `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardInstanceSpec {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default)]
    pub curve: ResponseCurve,
    #[serde(default = "one")]
    pub noise_sd: f64,
    pub seed: u64,
}

impl HardInstanceSpec {
    pub fn validated(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if self.d < 2 {
            return Err(Error::invalid("d", format!("need d >= 2, got {}", self.d)));
        }
        if self.n < 2 {
            return Err(Error::invalid("n", "need at least 2 rows"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::invalid("noise_sd", "must be nonnegative"));
        }
        if self.curve.eval(0.0) != 0.0 {
            return Err(Error::invalid("curve", "response curve must vanish at 0"));
        }
        Ok(())
    }

    /// `min(1, 2 gamma)`.
    pub fn p_gamma(&self) -> f64 {
        (2.0 * self.gamma).min(1.0)
    }

    /// `1 - gamma / p_gamma`.
    pub fn c_gamma(&self) -> f64 {
        1.0 - self.gamma / self.p_gamma()
    }

    /// Density of the continuous part of `A | X = x` (times `p_gamma`).
    pub fn continuous_density(&self, x1: f64, a: f64) -> f64 {
        self.p_gamma() * (1.0 + self.c_gamma() * (2.0 * x1 - 1.0) * (2.0 * a - 1.0))
    }
}

/// Ground-truth regression and effect functions of a generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Synthetic,
    HardInstance { c0: f64, tau: f64, curve: ResponseCurve },
}

impl GroundTruth {
    /// The effect function `h*`.
    pub fn h(&self, a: f64) -> f64 {
        match self {
            GroundTruth::Synthetic => a.sin(),
            GroundTruth::HardInstance { c0, curve, .. } => c0 * curve.eval(a),
        }
    }

    /// The conditional mean `f*(x, a)`.
    pub fn f(&self, x: &[f64], a: f64) -> f64 {
        match self {
            GroundTruth::Synthetic => {
                let s = x.iter().map(|v| v.sin()).sum::<f64>() / x.len() as f64;
                a.sin() + 4.0 * s * (a.sin() + 1.0)
            }
            GroundTruth::HardInstance { c0, tau, curve } => c0 * curve.eval(a) + tau * (2.0 * x[0] - 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleMeta {
    pub generator: &'static str,
    pub spec: serde_json::Value,
    pub seed: u64,
    pub rng: RngAlgorithms,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub data: Dataset,
    pub truth: GroundTruth,
    pub meta: SampleMeta,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Sample> {
    if spec.q == 0 {
        return Err(Error::invalid("q", "need at least one covariate"));
    }
    if !(spec.noise_sd >= 0.0) {
        return Err(Error::invalid("noise_sd", "must be nonnegative"));
    }
    let truth = GroundTruth::Synthetic;
    let mut r = rng::rng(rng::derive(spec.seed, rng::stream::DATA));
    let (n, q) = (spec.n, spec.q);
    let mut xs = Vec::with_capacity(n * q);
    let mut a = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..q).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect();
        let p = sigmoid(2.0 * row.iter().sum::<f64>());
        let u = rng::beta(&mut r, 20.0 * p, 20.0 * (1.0 - p));
        let ai = PI * (2.0 * u - 1.0);
        let yi = truth.f(&row, ai) + spec.noise_sd * rng::normal(&mut r);
        xs.extend_from_slice(&row);
        a.push(ai);
        y.push(yi);
    }
    let data = Dataset::new(Points::new(q, xs)?, a, y, Interval::new(-PI, PI)?)?;
    Ok(Sample {
        data,
        truth,
        meta: SampleMeta {
            generator: "synthetic",
            spec: serde_json::to_value(spec).expect("plain struct"),
            seed: spec.seed,
            rng: ALGORITHMS,
            p_gamma: None,
            c_gamma: None,
        },
    })
}

/// Inverse CDF of the density `1 + b (2a - 1)` on `[0, 1]` at level `p`.
fn tilted_quantile(b: f64, p: f64) -> f64 {
    // F(a) = b a^2 + (1 - b) a; the root form below avoids cancellation.
    let c = 1.0 - b;
    let a = 2.0 * p / (c + (c * c + 4.0 * b * p).sqrt());
    a.clamp(0.0, 1.0)
}

pub fn gen_hard_instance(spec: &HardInstanceSpec) -> Result<Sample> {
    spec.validated()?;
    let truth = GroundTruth::HardInstance {
        c0: spec.c0,
        tau: spec.tau,
        curve: spec.curve,
    };
    let (p_gamma, c_gamma) = (spec.p_gamma(), spec.c_gamma());
    let q = spec.d - 1;
    let mut r = rng::rng(rng::derive(spec.seed, rng::stream::DATA));
    let mut xs = Vec::with_capacity(spec.n * q);
    let mut a = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let row: Vec<f64> = (0..q).map(|_| rng::uniform(&mut r, 0.0, 1.0)).collect();
        let coin = rng::uniform(&mut r, 0.0, 1.0);
        let level = rng::uniform(&mut r, 0.0, 1.0);
        let ai = if coin < p_gamma {
            tilted_quantile(c_gamma * (2.0 * row[0] - 1.0), level)
        } else {
            0.0
        };
        let yi = truth.f(&row, ai) + spec.noise_sd * rng::normal(&mut r);
        xs.extend_from_slice(&row);
        a.push(ai);
        y.push(yi);
    }
    let data = Dataset::new(Points::new(q, xs)?, a, y, Interval::new(0.0, 1.0)?)?;
    Ok(Sample {
        data,
        truth,
        meta: SampleMeta {
            generator: "hard_instance",
            spec: serde_json::to_value(spec).expect("plain struct"),
            seed: spec.seed,
            rng: ALGORITHMS,
            p_gamma: Some(p_gamma),
            c_gamma: Some(c_gamma),
        },
    })
}

/// Column layout of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    /// Covariate columns; every column other than treatment, outcome and
    /// `exclude` when `None`.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Treatment domain; `[min a, max a]` when `None`.
    #[serde(default)]
    pub domain: Option<Interval>,
}

fn default_treatment() -> String {
    "a".to_string()
}

fn default_outcome() -> String {
    "y".to_string()
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            covariates: None,
            treatment: default_treatment(),
            outcome: default_outcome(),
            exclude: Vec::new(),
            domain: None,
        }
    }
}

fn data_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Data {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => data_err(path, format!("{other:?}")),
    })
}

fn header_of(path: &Path) -> Result<Vec<String>> {
    Ok(open_reader(path)?
        .headers()
        .map_err(|e| data_err(path, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

/// Numeric rows of the `wanted` columns.
fn read_rows(path: &Path, header: &[String], wanted: &[usize]) -> Result<Vec<Vec<f64>>> {
    let mut reader = open_reader(path)?;
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| data_err(path, format!("row {}: {e}", r + 1)))?;
        let mut row = Vec::with_capacity(wanted.len());
        for &c in wanted {
            let cell = rec.get(c).unwrap_or("").trim();
            let v: f64 = cell.parse().map_err(|_| {
                data_err(
                    path,
                    format!("row {}, column `{}`: non-numeric value `{cell}`", r + 1, header[c]),
                )
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn column_index(path: &Path, header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| data_err(path, format!("missing column `{name}`")))
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let header = header_of(path)?;
    let ia = column_index(path, &header, &schema.treatment)?;
    let iy = column_index(path, &header, &schema.outcome)?;
    let cov_idx: Vec<usize> = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|c| column_index(path, &header, c))
            .collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| i != ia && i != iy && !schema.exclude.contains(&header[i]))
            .collect(),
    };
    if cov_idx.is_empty() {
        return Err(data_err(path, "no covariate columns"));
    }
    let mut wanted = cov_idx.clone();
    wanted.push(ia);
    wanted.push(iy);
    let rows = read_rows(path, &header, &wanted)?;
    if rows.is_empty() {
        return Err(data_err(path, "empty dataset"));
    }
    let q = cov_idx.len();
    let mut xs = Vec::with_capacity(rows.len() * q);
    let mut a = Vec::with_capacity(rows.len());
    let mut y = Vec::with_capacity(rows.len());
    for row in &rows {
        xs.extend_from_slice(&row[..q]);
        a.push(row[q]);
        y.push(row[q + 1]);
    }
    let domain = match schema.domain {
        Some(d) => d,
        None => {
            let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Interval::new(lo, hi)
                .map_err(|_| data_err(path, "treatment column has zero range; set a domain"))?
        }
    };
    Dataset::new(Points::new(q, xs)?, a, y, domain).map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => data_err(path, reason),
        other => other,
    })
}

/// One numeric column by name.
pub fn load_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let header = header_of(path)?;
    let i = column_index(path, &header, name)?;
    let rows = read_rows(path, &header, &[i])?;
    if rows.is_empty() {
        return Err(data_err(path, "empty dataset"));
    }
    Ok(rows.into_iter().map(|r| r[0]).collect())
}

/// Writes `x1..xq,a,y` with shortest round-trip float formatting.
pub fn save_csv(path: &Path, data: &Dataset) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => data_err(path, format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let q = data.covariate_dim();
    let mut header: Vec<String> = (1..=q).map(|i| format!("x{i}")).collect();
    header.push("a".into());
    header.push("y".into());
    w.write_record(&header).map_err(io)?;
    for (i, x) in data.covariates().rows().enumerate() {
        let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
        rec.push(data.treatments()[i].to_string());
        rec.push(data.outcomes()[i].to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// `y~_i = fitted_i + e_i (y_i - fitted_i)` with Rademacher signs `e_i`.
pub fn semi_synthetic_inject(data: &Dataset, fitted: &[f64], seed: u64) -> Result<Dataset> {
    if fitted.len() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "fitted values vs rows",
            expected: data.len(),
            actual: fitted.len(),
        });
    }
    let mut r = rng::rng(rng::derive(seed, rng::stream::INJECTION));
    let y = data
        .outcomes()
        .iter()
        .zip(fitted)
        .map(|(&y, &f)| {
            let e = rng::rademacher(&mut r);
            f + e * (y - f)
        })
        .collect();
    data.with_outcomes(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hard(n: usize, gamma: f64, seed: u64) -> HardInstanceSpec {
        HardInstanceSpec {
            n,
            d: 2,
            gamma,
            tau: 1.0,
            c0: 1.0,
            curve: ResponseCurve::default(),
            noise_sd: 1.0,
            seed,
        }
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn synthetic_truth_values() {
        let t = GroundTruth::Synthetic;
        assert_eq!(t.h(PI / 2.0), 1.0);
        assert_eq!(t.h(0.0), 0.0);
        assert_eq!(t.f(&[0.0; 10], 0.7), 0.7f64.sin());
    }

    #[test]
    fn synthetic_shape_and_determinism() {
        let spec = SyntheticSpec {
            n: 50,
            q: 10,
            noise_sd: 1.0,
            seed: 3,
        };
        let a = gen_synthetic(&spec).unwrap();
        let b = gen_synthetic(&spec).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.data.covariate_dim(), 10);
        assert!(a.data.treatments().iter().all(|t| t.abs() <= PI));
    }

    #[test]
    fn synthetic_is_confounded() {
        let s = gen_synthetic(&SyntheticSpec {
            n: 100_000,
            q: 10,
            noise_sd: 1.0,
            seed: 1,
        })
        .unwrap();
        let sums: Vec<f64> = s.data.covariates().rows().map(|r| r.iter().sum()).collect();
        assert!(corr(&sums, s.data.treatments()) > 0.3);
    }

    #[test]
    fn synthetic_marginal_identity() {
        let s = gen_synthetic(&SyntheticSpec {
            n: 100_000,
            q: 10,
            noise_sd: 1.0,
            seed: 2,
        })
        .unwrap();
        let grid = Interval::new(-PI, PI).unwrap().grid(41);
        let n = s.data.len() as f64;
        let sup = grid
            .iter()
            .map(|&a| {
                let m = s.data.covariates().rows().map(|x| s.truth.f(x, a)).sum::<f64>() / n;
                (m - a.sin()).abs()
            })
            .fold(0.0f64, f64::max);
        assert!(sup <= 0.02, "{sup}");
    }

    #[test]
    fn hard_instance_derived_constants() {
        let s = hard(10, 0.25, 0);
        assert_eq!((s.p_gamma(), s.c_gamma()), (0.5, 0.5));
        let s1 = hard(10, 1.0, 0);
        assert_eq!((s1.p_gamma(), s1.c_gamma()), (1.0, 0.0));
        assert!(hard(10, 0.0, 0).validated().is_err());
        assert!(hard(10, 1.5, 0).validated().is_err());
        let mut bad = hard(10, 0.5, 0);
        bad.curve = ResponseCurve::Sine { scale: 1.0 };
        bad.d = 1;
        assert!(bad.validated().is_err());
    }

    #[test]
    fn hard_instance_gamma_one_is_unconfounded() {
        let s = gen_hard_instance(&hard(100_000, 1.0, 5)).unwrap();
        let x1 = s.data.covariates().column(0);
        assert!(corr(&x1, s.data.treatments()).abs() <= 0.01);
        assert_eq!(s.meta.p_gamma, Some(1.0));
        assert_eq!(s.meta.c_gamma, Some(0.0));
    }

    #[test]
    fn hard_instance_atom_fraction() {
        let n = 10_000;
        let s = gen_hard_instance(&hard(n, 0.25, 6)).unwrap();
        let atoms = s.data.treatments().iter().filter(|&&a| a == 0.0).count() as f64;
        let sd = (n as f64 * 0.25).sqrt();
        assert!((atoms - 0.5 * n as f64).abs() <= 3.0 * sd, "{atoms}");
    }

    #[test]
    fn hard_instance_conditional_covariate_mean() {
        // E[u(X) | A = a] = (c_gamma / 3)(2a - 1) on the continuous part.
        let spec = hard(1_000_000, 0.25, 7);
        let s = gen_hard_instance(&spec).unwrap();
        let bins = 10;
        let mut sum = vec![0.0; bins];
        let mut cnt = vec![0usize; bins];
        for (x, &a) in s.data.covariates().rows().zip(s.data.treatments()) {
            if a == 0.0 {
                continue;
            }
            let b = ((a * bins as f64) as usize).min(bins - 1);
            sum[b] += 2.0 * x[0] - 1.0;
            cnt[b] += 1;
        }
        let c = spec.c_gamma();
        for b in 0..bins {
            // Bin average of the line (c/3)(2a - 1) weighted by the marginal density 1.
            let mid = (b as f64 + 0.5) / bins as f64;
            let expected = c / 3.0 * (2.0 * mid - 1.0);
            assert!((sum[b] / cnt[b] as f64 - expected).abs() < 0.01);
        }
    }

    #[test]
    fn hard_instance_overlap_bound() {
        for gamma in [0.1, 0.25, 0.5, 1.0] {
            let spec = hard(500, gamma, 8);
            let s = gen_hard_instance(&spec).unwrap();
            let grid = Interval::new(0.0, 1.0).unwrap().grid(101);
            let spec = &spec;
            let inf = s
                .data
                .covariates()
                .rows()
                .flat_map(|x| grid.iter().map(move |&a| spec.continuous_density(x[0], a)))
                .fold(f64::INFINITY, f64::min);
            assert!(inf >= gamma - 1e-12);
        }
    }

    #[test]
    fn tilted_quantile_inverts_cdf() {
        for &b in &[-0.5, -0.2, 0.0, 0.3, 0.5] {
            for &p in &[0.0, 0.1, 0.5, 0.9, 1.0] {
                let a = tilted_quantile(b, p);
                let f = b * a * a + (1.0 - b) * a;
                assert!((f - p).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let s = gen_synthetic(&SyntheticSpec {
            n: 3,
            q: 2,
            noise_sd: 1.0,
            seed: 4,
        })
        .unwrap();
        save_csv(&path, &s.data).unwrap();
        let schema = CsvSchema {
            domain: Some(s.data.domain()),
            ..CsvSchema::default()
        };
        let back = load_csv(&path, &schema).unwrap();
        assert_eq!(back, s.data);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x1,x2,a,y\n"));
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("e.csv");
        std::fs::write(&empty, "x1,a,y\n").unwrap();
        let err = load_csv(&empty, &CsvSchema::default()).unwrap_err();
        assert!(err.to_string().contains("empty dataset"));
        let bad = dir.path().join("b.csv");
        std::fs::write(&bad, "x1,a,y\n1,2,3\n1,oops,3\n").unwrap();
        let err = load_csv(&bad, &CsvSchema::default()).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("`a`"), "{err}");
        let missing = dir.path().join("m.csv");
        std::fs::write(&missing, "x1,t,y\n1,2,3\n").unwrap();
        assert!(load_csv(&missing, &CsvSchema::default()).unwrap_err().to_string().contains("`a`"));
        assert!(matches!(
            load_csv(&dir.path().join("none.csv"), &CsvSchema::default()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn csv_excluded_columns_and_default_domain() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        std::fs::write(&p, "x1,x2,a,y,fhat\n0,1,0.5,2,1.9\n1,0,1.5,3,3.1\n").unwrap();
        let schema = CsvSchema {
            exclude: vec!["fhat".into()],
            ..CsvSchema::default()
        };
        let d = load_csv(&p, &schema).unwrap();
        assert_eq!(d.covariate_dim(), 2);
        assert_eq!(d.domain(), Interval::new(0.5, 1.5).unwrap());
        assert_eq!(load_column(&p, "fhat").unwrap(), vec![1.9, 3.1]);
    }

    #[test]
    fn injection_limits() {
        let s = gen_synthetic(&SyntheticSpec {
            n: 20,
            q: 2,
            noise_sd: 1.0,
            seed: 9,
        })
        .unwrap();
        let same = semi_synthetic_inject(&s.data, s.data.outcomes(), 1).unwrap();
        assert_eq!(same.outcomes(), s.data.outcomes());
        assert!(semi_synthetic_inject(&s.data, &[0.0], 1).is_err());
        // Find a seed whose signs are all +1 on a 3-row dataset.
        let tiny = s.data.subset(&[0, 1, 2]).unwrap();
        let fitted = [0.0; 3];
        let seed = (0..1000u64)
            .find(|&sd| {
                let mut r = rng::rng(rng::derive(sd, rng::stream::INJECTION));
                (0..3).all(|_| rng::rademacher(&mut r) > 0.0)
            })
            .unwrap();
        let out = semi_synthetic_inject(&tiny, &fitted, seed).unwrap();
        assert_eq!(out.outcomes(), tiny.outcomes());
    }

    #[test]
    fn injection_is_mean_preserving() {
        let s = gen_synthetic(&SyntheticSpec {
            n: 2,
            q: 1,
            noise_sd: 1.0,
            seed: 10,
        })
        .unwrap();
        let fitted = [0.3, -0.1];
        let reps = 10_000;
        let mean = (0..reps)
            .map(|sd| semi_synthetic_inject(&s.data, &fitted, sd).unwrap().outcomes()[0])
            .sum::<f64>()
            / reps as f64;
        let g = (s.data.outcomes()[0] - fitted[0]).abs();
        // Each draw is fitted +- g, so the mean has sd g / 100.
        assert!((mean - fitted[0]).abs() <= 3.0 * g / 100.0);
    }
}
