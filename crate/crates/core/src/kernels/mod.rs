//! Kernel functions and Gram matrices.
//!
//! Stationary families are evaluated from the squared Euclidean distance and
//! the linear family from the inner product. Both statistics are sums over
//! coordinates, which lets the joint-kernel marginalization reuse a
//! precomputed covariate block (see [`BaseKernel::pair_stat`]).

mod bandwidth;
mod template;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::{Error, Points, Result};

pub use bandwidth::{
    median_pairwise_distance, select_length_scale, LengthScaleGrid, DEFAULT_CORRELATION_TARGETS,
};
pub use template::{BlockTemplate, KernelTemplate, LengthScaleRule, ResolvedKernels, TemplateNote};

/// Half-integer Matérn smoothness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn nu(self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    Matern(Smoothness),
    SquaredExponential,
    Linear,
}

impl Family {
    pub fn is_stationary(self) -> bool {
        !matches!(self, Family::Linear)
    }

    /// Polynomial eigendecay exponent `ell` (eigenvalues ~ j^{-2 ell}) of the
    /// one-dimensional kernel, when the family has one.
    pub fn decay_exponent_1d(self) -> Option<f64> {
        match self {
            Family::Matern(s) => Some(s.nu() + 0.5),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Matern(Smoothness::Half) => "matern0.5",
            Family::Matern(Smoothness::ThreeHalves) => "matern1.5",
            Family::Matern(Smoothness::FiveHalves) => "matern2.5",
            Family::SquaredExponential => "rbf",
            Family::Linear => "linear",
        };
        f.write_str(s)
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "matern0.5" => Ok(Family::Matern(Smoothness::Half)),
            "matern1.5" => Ok(Family::Matern(Smoothness::ThreeHalves)),
            "matern2.5" => Ok(Family::Matern(Smoothness::FiveHalves)),
            "rbf" => Ok(Family::SquaredExponential),
            "linear" => Ok(Family::Linear),
            other => Err(Error::invalid(
                "family",
                format!("unknown kernel family `{other}` (expected matern0.5|matern1.5|matern2.5|rbf|linear)"),
            )),
        }
    }
}

impl TryFrom<String> for Family {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.to_string()
    }
}

/// A single-block kernel: family, length scale and variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseKernel {
    pub family: Family,
    pub length_scale: f64,
    #[serde(default = "unit")]
    pub variance: f64,
}

fn unit() -> f64 {
    1.0
}

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

pub(crate) trait StatMap {
    type Output;
    fn apply<F: Fn(f64) -> f64 + Copy + Send + Sync>(self, f: F) -> Self::Output;
}

#[inline(always)]
fn rbf_at(v: f64, l: f64, s: f64) -> f64 {
    v * (-0.5 * s / (l * l)).exp()
}

#[inline(always)]
fn linear_at(v: f64, l: f64, s: f64) -> f64 {
    v * s / (l * l)
}

#[inline(always)]
fn matern12_at(v: f64, l: f64, s: f64) -> f64 {
    let t = s.max(0.0).sqrt() / l;
    v * (-t).exp()
}

#[inline(always)]
fn matern32_at(v: f64, l: f64, s: f64) -> f64 {
    let t = SQRT3 * (s.max(0.0).sqrt() / l);
    v * ((1.0 + t) * (-t).exp())
}

#[inline(always)]
fn matern52_at(v: f64, l: f64, s: f64) -> f64 {
    let t = SQRT5 * (s.max(0.0).sqrt() / l);
    v * ((1.0 + t + t * t / 3.0) * (-t).exp())
}

impl BaseKernel {
    pub fn new(family: Family, length_scale: f64) -> Result<Self> {
        BaseKernel {
            family,
            length_scale,
            variance: 1.0,
        }
        .validated()
    }

    pub fn matern(nu: Smoothness, length_scale: f64) -> Result<Self> {
        Self::new(Family::Matern(nu), length_scale)
    }

    pub fn with_variance(self, variance: f64) -> Result<Self> {
        BaseKernel { variance, ..self }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.length_scale > 0.0 && self.length_scale.is_finite()) {
            return Err(Error::invalid(
                "length_scale",
                format!("must be positive and finite, got {}", self.length_scale),
            ));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(Error::invalid(
                "variance",
                format!("must be positive and finite, got {}", self.variance),
            ));
        }
        Ok(self)
    }

    /// Additive pair statistic: squared distance (stationary) or inner product (linear).
    #[inline]
    pub fn pair_stat(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.family.is_stationary() {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
        } else {
            a.iter().zip(b).map(|(x, y)| x * y).sum()
        }
    }

    /// Kernel value from the pair statistic returned by [`pair_stat`](Self::pair_stat).
    #[inline]
    pub fn from_stat(&self, s: f64) -> f64 {
        let (v, l) = (self.variance, self.length_scale);
        match self.family {
            Family::SquaredExponential => rbf_at(v, l, s),
            Family::Linear => linear_at(v, l, s),
            Family::Matern(Smoothness::Half) => matern12_at(v, l, s),
            Family::Matern(Smoothness::ThreeHalves) => matern32_at(v, l, s),
            Family::Matern(Smoothness::FiveHalves) => matern52_at(v, l, s),
        }
    }

    /// Hands a family-specialized `stat -> value` closure to `m`, so hot loops
    /// avoid re-dispatching on the family per entry.
    pub(crate) fn map_stat<M: StatMap>(&self, m: M) -> M::Output {
        let (v, l) = (self.variance, self.length_scale);
        match self.family {
            Family::SquaredExponential => m.apply(move |s| rbf_at(v, l, s)),
            Family::Linear => m.apply(move |s| linear_at(v, l, s)),
            Family::Matern(Smoothness::Half) => m.apply(move |s| matern12_at(v, l, s)),
            Family::Matern(Smoothness::ThreeHalves) => m.apply(move |s| matern32_at(v, l, s)),
            Family::Matern(Smoothness::FiveHalves) => m.apply(move |s| matern52_at(v, l, s)),
        }
    }

    /// Stationary profile `K(r)` at Euclidean distance `r`.
    pub fn profile(&self, r: f64) -> Option<f64> {
        match self.family {
            Family::Linear => None,
            _ => Some(self.from_stat(r * r)),
        }
    }

    /// `K(r) / K(0)` for stationary families.
    pub fn correlation(&self, r: f64) -> Option<f64> {
        Some(self.profile(r)? / self.variance)
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        self.from_stat(self.pair_stat(a, b))
    }
}

/// How a kernel on `z = (x, a)` is assembled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "composition", rename_all = "snake_case")]
pub enum KernelSpec {
    /// One kernel on the concatenated point.
    Joint {
        #[serde(flatten)]
        kernel: BaseKernel,
    },
    /// `K_X(x, x') * K_A(a, a')`; the treatment is the last coordinate.
    Tensor {
        covariate: BaseKernel,
        treatment: BaseKernel,
    },
}

impl KernelSpec {
    pub fn joint(kernel: BaseKernel) -> Self {
        KernelSpec::Joint { kernel }
    }

    pub fn tensor(covariate: BaseKernel, treatment: BaseKernel) -> Self {
        KernelSpec::Tensor {
            covariate,
            treatment,
        }
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            KernelSpec::Joint { kernel } => {
                kernel.validated()?;
            }
            KernelSpec::Tensor {
                covariate,
                treatment,
            } => {
                covariate.validated()?;
                treatment.validated()?;
            }
        }
        Ok(self)
    }

    pub fn is_stationary(&self) -> bool {
        match self {
            KernelSpec::Joint { kernel } => kernel.family.is_stationary(),
            KernelSpec::Tensor {
                covariate,
                treatment,
            } => covariate.family.is_stationary() && treatment.family.is_stationary(),
        }
    }

    /// Kernel value on the diagonal for stationary compositions.
    pub fn diagonal(&self) -> Option<f64> {
        match self {
            KernelSpec::Joint { kernel } => kernel.profile(0.0),
            KernelSpec::Tensor {
                covariate,
                treatment,
            } => Some(covariate.profile(0.0)? * treatment.profile(0.0)?),
        }
    }

    /// The length scale that acts on the treatment axis.
    pub fn treatment_length_scale(&self) -> f64 {
        match self {
            KernelSpec::Joint { kernel } => kernel.length_scale,
            KernelSpec::Tensor { treatment, .. } => treatment.length_scale,
        }
    }

    fn min_dim(&self) -> usize {
        match self {
            KernelSpec::Joint { .. } => 1,
            KernelSpec::Tensor { .. } => 2,
        }
    }

    fn check_dim(&self, context: &'static str, dim: usize) -> Result<()> {
        if dim < self.min_dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.min_dim(),
                actual: dim,
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, z1: &[f64], z2: &[f64]) -> f64 {
        match self {
            KernelSpec::Joint { kernel } => kernel.eval(z1, z2),
            KernelSpec::Tensor {
                covariate,
                treatment,
            } => {
                let d = z1.len() - 1;
                covariate.eval(&z1[..d], &z2[..d]) * treatment.eval(&z1[d..], &z2[d..])
            }
        }
    }
}

/// Evaluates `k(z1, z2)`.
pub fn eval_kernel(spec: &KernelSpec, z1: &[f64], z2: &[f64]) -> Result<f64> {
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel arguments",
            expected: z1.len(),
            actual: z2.len(),
        });
    }
    spec.check_dim("kernel arguments", z1.len())?;
    Ok(spec.eval_unchecked(z1, z2))
}

/// Symmetric Gram matrix of `points`.
pub fn gram(spec: &KernelSpec, points: &Points) -> Result<Matrix> {
    if points.is_empty() {
        return Err(Error::Empty("gram points"));
    }
    spec.check_dim("gram points", points.dim())?;
    let n = points.len();
    // Upper triangle per row, mirrored afterwards.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let zi = points.row(i);
            (i..n).map(|j| spec.eval_unchecked(zi, points.row(j))).collect()
        })
        .collect();
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i <= j {
            rows[i][j - i]
        } else {
            rows[j][i - j]
        }
    }))
}

/// Row-major `rows.len() x cols.len()` buffer of kernel values.
pub(crate) fn cross_gram_buffer(spec: &KernelSpec, rows: &Points, cols: &Points) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::Empty("cross-gram rows"));
    }
    if cols.is_empty() {
        return Err(Error::Empty("cross-gram columns"));
    }
    if rows.dim() != cols.dim() {
        return Err(Error::DimensionMismatch {
            context: "cross-gram point sets",
            expected: cols.dim(),
            actual: rows.dim(),
        });
    }
    spec.check_dim("cross-gram points", rows.dim())?;
    let m = cols.len();
    let mut buf = vec![0.0; rows.len() * m];
    buf.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
        let zi = rows.row(i);
        for (j, o) in out.iter_mut().enumerate() {
            *o = spec.eval_unchecked(zi, cols.row(j));
        }
    });
    Ok(buf)
}

/// Entry `(i, j)` is `k(rows[i], cols[j])`.
pub fn cross_gram(spec: &KernelSpec, rows: &Points, cols: &Points) -> Result<Matrix> {
    let buf = cross_gram_buffer(spec, rows, cols)?;
    let m = cols.len();
    Ok(Matrix::from_fn(rows.len(), m, |i, j| buf[i * m + j]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use crate::rng;
    use proptest::prelude::*;

    fn m32(l: f64) -> KernelSpec {
        KernelSpec::joint(BaseKernel::matern(Smoothness::ThreeHalves, l).unwrap())
    }

    fn random_points(n: usize, d: usize, seed: u64) -> Points {
        let mut r = rng::rng(seed);
        let data = (0..n * d).map(|_| rng::uniform(&mut r, -2.0, 2.0)).collect();
        Points::new(d, data).unwrap()
    }

    #[test]
    fn matern32_values() {
        let k = m32(1.0);
        assert_eq!(eval_kernel(&k, &[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let v = eval_kernel(&k, &[0.0], &[1.0]).unwrap();
        // (1 + sqrt 3) e^{-sqrt 3}, evaluated with mpmath to 16 digits.
        assert!((v - 0.483_357_724_596_507_7).abs() < 1e-15, "{v}");
    }

    #[test]
    fn matern_closed_forms() {
        let r = 0.7;
        let l = 1.3;
        let half = BaseKernel::matern(Smoothness::Half, l).unwrap();
        let five = BaseKernel::matern(Smoothness::FiveHalves, l).unwrap();
        let rbf = BaseKernel::new(Family::SquaredExponential, l).unwrap();
        assert!((half.eval(&[0.0], &[r]) - (-r / l).exp()).abs() < 1e-15);
        let s = 5f64.sqrt() * r / l;
        assert!((five.eval(&[0.0], &[r]) - (1.0 + s + s * s / 3.0) * (-s).exp()).abs() < 1e-15);
        assert!((rbf.eval(&[0.0], &[r]) - (-r * r / (2.0 * l * l)).exp()).abs() < 1e-15);
    }

    #[test]
    fn tensor_laplace_is_product_of_blocks() {
        let (lx, la) = (1.7, 0.4);
        let spec = KernelSpec::tensor(
            BaseKernel::matern(Smoothness::Half, lx).unwrap(),
            BaseKernel::matern(Smoothness::Half, la).unwrap(),
        );
        let z1 = [0.1, 0.5, -0.3, 1.0];
        let z2 = [0.4, -0.2, 0.0, 0.25];
        let dx = ((0.3f64).powi(2) + 0.7f64.powi(2) + 0.3f64.powi(2)).sqrt();
        let expected = (-dx / lx).exp() * (-0.75f64 / la).exp();
        assert!((eval_kernel(&spec, &z1, &z2).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn dimension_errors() {
        let err = eval_kernel(&m32(1.0), &[0.0, 1.0], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 2, actual: 1, .. }));
        let tensor = KernelSpec::tensor(
            BaseKernel::matern(Smoothness::Half, 1.0).unwrap(),
            BaseKernel::matern(Smoothness::Half, 1.0).unwrap(),
        );
        assert!(eval_kernel(&tensor, &[0.0], &[1.0]).is_err());
        let a = Points::from_rows(&[[0.0, 1.0]]).unwrap();
        let b = Points::from_scalars(&[0.0]);
        assert!(cross_gram(&m32(1.0), &a, &b).is_err());
    }

    #[test]
    fn gram_small_cases() {
        assert!(matches!(
            gram(&m32(1.0), &Points::new(2, vec![]).unwrap()),
            Err(Error::Empty(_))
        ));
        let g = gram(&m32(1.0), &Points::from_scalars(&[0.4])).unwrap();
        assert_eq!((g.nrows(), g[(0, 0)]), (1, 1.0));
        let g = gram(&m32(1.0), &Points::from_scalars(&[0.4, 0.4])).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g[(i, j)], 1.0);
            }
        }
    }

    #[test]
    fn gram_five_points_psd() {
        let p = random_points(5, 3, 11);
        let g = gram(&m32(0.8), &p).unwrap();
        let eig = symmetric_eigenvalues(&g).unwrap();
        assert!(eig.iter().all(|&e| e >= -1e-10), "{eig:?}");
    }

    #[test]
    fn cross_gram_matches_pairwise() {
        let spec = m32(1.1);
        let rows = random_points(3, 2, 1);
        let cols = random_points(4, 2, 2);
        let c = cross_gram(&spec, &rows, &cols).unwrap();
        let mut max_diff: f64 = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                let direct = eval_kernel(&spec, rows.row(i), cols.row(j)).unwrap();
                max_diff = max_diff.max((c[(i, j)] - direct).abs());
            }
        }
        assert_eq!(max_diff, 0.0);
        let single = cross_gram(&spec, &rows.select(&[1]), &cols).unwrap();
        assert_eq!(single.nrows(), 1);
        for j in 0..4 {
            assert_eq!(single[(0, j)], c[(1, j)]);
        }
    }

    #[test]
    fn cross_gram_of_same_points_is_gram() {
        let spec = m32(0.5);
        let p = random_points(7, 2, 5);
        let g = gram(&spec, &p).unwrap();
        let c = cross_gram(&spec, &p, &p).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                assert_eq!(g[(i, j)], c[(i, j)]);
            }
        }
    }

    #[test]
    fn family_strings_round_trip() {
        for s in ["matern0.5", "matern1.5", "matern2.5", "rbf", "linear"] {
            assert_eq!(s.parse::<Family>().unwrap().to_string(), s);
        }
        assert!("matern3.5".parse::<Family>().is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(BaseKernel::matern(Smoothness::Half, 0.0).is_err());
        assert!(BaseKernel::matern(Smoothness::Half, 1.0)
            .unwrap()
            .with_variance(-1.0)
            .is_err());
    }

    fn any_family() -> impl Strategy<Value = Family> {
        prop_oneof![
            Just(Family::Matern(Smoothness::Half)),
            Just(Family::Matern(Smoothness::ThreeHalves)),
            Just(Family::Matern(Smoothness::FiveHalves)),
            Just(Family::SquaredExponential),
        ]
    }

    proptest! {
        #[test]
        fn symmetric_exactly(
            fam in any_family(),
            l in 0.05f64..10.0,
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let k = KernelSpec::joint(BaseKernel::new(fam, l).unwrap());
            prop_assert_eq!(
                eval_kernel(&k, &a, &b).unwrap().to_bits(),
                eval_kernel(&k, &b, &a).unwrap().to_bits()
            );
            prop_assert_eq!(eval_kernel(&k, &a, &a).unwrap(), 1.0);
        }

        #[test]
        fn gram_psd(fam in any_family(), l in 0.1f64..3.0, n in 2usize..50, seed in any::<u64>()) {
            let p = random_points(n, 2, seed);
            let g = gram(&KernelSpec::joint(BaseKernel::new(fam, l).unwrap()), &p).unwrap();
            let min = symmetric_eigenvalues(&g).unwrap().into_iter().fold(f64::INFINITY, f64::min);
            prop_assert!(min >= -1e-9 * n as f64, "min eigenvalue {}", min);
        }

        #[test]
        fn tensor_gram_is_hadamard_product(
            lx in 0.1f64..3.0, la in 0.1f64..3.0, n in 1usize..20, seed in any::<u64>()
        ) {
            let kx = BaseKernel::matern(Smoothness::ThreeHalves, lx).unwrap();
            let ka = BaseKernel::matern(Smoothness::Half, la).unwrap();
            let z = random_points(n, 3, seed);
            let x = z.leading(2).unwrap();
            let a = Points::from_scalars(&z.column(2));
            let g = gram(&KernelSpec::tensor(kx, ka), &z).unwrap();
            let gx = gram(&KernelSpec::joint(kx), &x).unwrap();
            let ga = gram(&KernelSpec::joint(ka), &a).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let h = gx[(i, j)] * ga[(i, j)];
                    prop_assert!((g[(i, j)] - h).abs() <= 1e-14 * h.abs().max(f64::MIN_POSITIVE));
                }
            }
        }

        #[test]
        fn correlation_increases_with_length_scale(
            fam in any_family(), r in 0.01f64..10.0, l in 0.01f64..10.0, f in 1.01f64..3.0
        ) {
            let lo = BaseKernel::new(fam, l).unwrap().correlation(r).unwrap();
            let hi = BaseKernel::new(fam, l * f).unwrap().correlation(r).unwrap();
            prop_assert!(hi >= lo);
            if lo > 1e-200 && hi < 1.0 - 1e-12 {
                prop_assert!(hi > lo, "not strictly increasing: {} vs {}", lo, hi);
            }
        }
    }
}
