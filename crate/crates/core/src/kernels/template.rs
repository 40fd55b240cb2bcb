//! Kernel descriptions whose length scales may depend on the data.
//!
//! A length scale is either a number, `"auto:<rho>"` (median heuristic at
//! correlation `rho`), or `"match"` (copy the treatment length scale of the
//! stage-1 kernel, for second-stage and direct kernels).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{select_length_scale, BaseKernel, Family, KernelSpec};
use crate::{Error, Points, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LengthScaleRule {
    Fixed(f64),
    Median { correlation: f64 },
    MatchTreatment,
}

impl fmt::Display for LengthScaleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LengthScaleRule::Fixed(v) => write!(f, "{v}"),
            LengthScaleRule::Median { correlation } => write!(f, "auto:{correlation}"),
            LengthScaleRule::MatchTreatment => f.write_str("match"),
        }
    }
}

impl FromStr for LengthScaleRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "match" {
            return Ok(LengthScaleRule::MatchTreatment);
        }
        if let Some(rho) = s.strip_prefix("auto:") {
            let correlation: f64 = rho
                .parse()
                .map_err(|_| Error::invalid("length_scale", format!("bad correlation in `{s}`")))?;
            if !(correlation > 0.0 && correlation < 1.0) {
                return Err(Error::invalid(
                    "length_scale",
                    format!("correlation must lie in (0, 1), got {correlation}"),
                ));
            }
            return Ok(LengthScaleRule::Median { correlation });
        }
        Err(Error::invalid(
            "length_scale",
            format!("expected a number, \"auto:<rho>\" or \"match\", got `{s}`"),
        ))
    }
}

impl Serialize for LengthScaleRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LengthScaleRule::Fixed(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for LengthScaleRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        let rule = match Raw::deserialize(d)? {
            Raw::Num(v) => LengthScaleRule::Fixed(v),
            Raw::Int(v) => LengthScaleRule::Fixed(v as f64),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom)?,
        };
        if let LengthScaleRule::Fixed(v) = rule {
            if !(v > 0.0 && v.is_finite()) {
                return Err(serde::de::Error::custom(format!(
                    "length_scale must be positive, got {v}"
                )));
            }
        }
        Ok(rule)
    }
}

/// One kernel block with a possibly data-dependent length scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockTemplate {
    pub family: Family,
    pub length_scale: LengthScaleRule,
    #[serde(default = "unit", skip_serializing_if = "is_unit")]
    pub variance: f64,
}

fn unit() -> f64 {
    1.0
}

fn is_unit(v: &f64) -> bool {
    *v == 1.0
}

impl BlockTemplate {
    pub fn fixed(kernel: BaseKernel) -> Self {
        BlockTemplate {
            family: kernel.family,
            length_scale: LengthScaleRule::Fixed(kernel.length_scale),
            variance: kernel.variance,
        }
    }

    fn resolve(&self, points: &Points, matched: Option<f64>) -> Result<BaseKernel> {
        let length_scale = match self.length_scale {
            LengthScaleRule::Fixed(v) => v,
            LengthScaleRule::Median { correlation } => {
                select_length_scale(self.family, points, &[correlation])?.solved_scales[0]
            }
            LengthScaleRule::MatchTreatment => matched.ok_or_else(|| {
                Error::invalid("length_scale", "\"match\" is only valid for treatment-axis kernels")
            })?,
        };
        BaseKernel {
            family: self.family,
            length_scale,
            variance: self.variance,
        }
        .validated()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Composition {
    Joint,
    Tensor,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTemplate {
    #[serde(skip_serializing_if = "Option::is_none")]
    composition: Option<Composition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    family: Option<Family>,
    #[serde(skip_serializing_if = "Option::is_none")]
    length_scale: Option<LengthScaleRule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariate: Option<BlockTemplate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    treatment: Option<BlockTemplate>,
}

/// A kernel description as written in a configuration file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub enum KernelTemplate {
    Joint(BlockTemplate),
    Tensor {
        covariate: BlockTemplate,
        treatment: BlockTemplate,
    },
}

impl TryFrom<RawTemplate> for KernelTemplate {
    type Error = Error;

    fn try_from(raw: RawTemplate) -> Result<Self> {
        match raw.composition.unwrap_or(Composition::Joint) {
            Composition::Joint => {
                if raw.covariate.is_some() || raw.treatment.is_some() {
                    return Err(Error::invalid(
                        "kernel",
                        "`covariate`/`treatment` blocks need composition = \"tensor\"",
                    ));
                }
                let family = raw
                    .family
                    .ok_or_else(|| Error::invalid("kernel", "missing `family`"))?;
                let length_scale = raw
                    .length_scale
                    .ok_or_else(|| Error::invalid("kernel", "missing `length_scale`"))?;
                let variance = raw.variance.unwrap_or(1.0);
                if !(variance > 0.0) {
                    return Err(Error::invalid("variance", "must be positive"));
                }
                Ok(KernelTemplate::Joint(BlockTemplate {
                    family,
                    length_scale,
                    variance,
                }))
            }
            Composition::Tensor => {
                if raw.family.is_some() || raw.length_scale.is_some() || raw.variance.is_some() {
                    return Err(Error::invalid(
                        "kernel",
                        "tensor kernels take `covariate` and `treatment` blocks only",
                    ));
                }
                match (raw.covariate, raw.treatment) {
                    (Some(covariate), Some(treatment)) => Ok(KernelTemplate::Tensor {
                        covariate,
                        treatment,
                    }),
                    _ => Err(Error::invalid(
                        "kernel",
                        "tensor kernels need both `covariate` and `treatment` blocks",
                    )),
                }
            }
        }
    }
}

impl From<KernelTemplate> for RawTemplate {
    fn from(t: KernelTemplate) -> Self {
        match t {
            KernelTemplate::Joint(b) => RawTemplate {
                family: Some(b.family),
                length_scale: Some(b.length_scale),
                variance: (b.variance != 1.0).then_some(b.variance),
                ..RawTemplate::default()
            },
            KernelTemplate::Tensor {
                covariate,
                treatment,
            } => RawTemplate {
                composition: Some(Composition::Tensor),
                covariate: Some(covariate),
                treatment: Some(treatment),
                ..RawTemplate::default()
            },
        }
    }
}

impl From<KernelSpec> for KernelTemplate {
    fn from(spec: KernelSpec) -> Self {
        match spec {
            KernelSpec::Joint { kernel } => KernelTemplate::Joint(BlockTemplate::fixed(kernel)),
            KernelSpec::Tensor {
                covariate,
                treatment,
            } => KernelTemplate::Tensor {
                covariate: BlockTemplate::fixed(covariate),
                treatment: BlockTemplate::fixed(treatment),
            },
        }
    }
}

/// Kernels after data-dependent length scales were filled in.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedKernels {
    pub stage1: KernelSpec,
    pub stage2: KernelSpec,
    pub notes: Vec<String>,
}

/// Marker for notes attached during resolution.
pub type TemplateNote = String;

impl KernelTemplate {
    /// Resolves a kernel on `z = (x, a)`.
    pub fn resolve_joint(&self, covariates: &Points, treatments: &[f64]) -> Result<KernelSpec> {
        match self {
            KernelTemplate::Joint(block) => {
                let z = Points::with_trailing(covariates, treatments)?;
                Ok(KernelSpec::joint(block.resolve(&z, None)?))
            }
            KernelTemplate::Tensor {
                covariate,
                treatment,
            } => {
                let a = Points::from_scalars(treatments);
                Ok(KernelSpec::tensor(
                    covariate.resolve(covariates, None)?,
                    treatment.resolve(&a, None)?,
                ))
            }
        }
    }

    /// Resolves a joint-composition kernel on arbitrary points.
    pub fn resolve_on(&self, points: &Points) -> Result<KernelSpec> {
        match self {
            KernelTemplate::Joint(block) => Ok(KernelSpec::joint(block.resolve(points, None)?)),
            KernelTemplate::Tensor { .. } => Err(Error::invalid(
                "kernel",
                "tensor kernels need separate covariate and treatment columns",
            )),
        }
    }

    /// Resolves a kernel on the treatment axis alone.
    ///
    /// `"match"` copies the treatment length scale of `stage1`; when `stage1`
    /// is a joint kernel its single length scale is reused and a note is
    /// returned.
    pub fn resolve_treatment(
        &self,
        treatments: &[f64],
        stage1: Option<&KernelSpec>,
    ) -> Result<(KernelSpec, Option<TemplateNote>)> {
        let KernelTemplate::Joint(block) = self else {
            return Err(Error::invalid(
                "kernel",
                "treatment-axis kernels must use joint composition",
            ));
        };
        let mut note = None;
        let matched = stage1.map(|s| {
            if matches!(s, KernelSpec::Joint { .. }) {
                note = Some(
                    "stage-2 length scale copied from a joint stage-1 kernel (no separate treatment block)"
                        .to_string(),
                );
            }
            s.treatment_length_scale()
        });
        if block.length_scale != LengthScaleRule::MatchTreatment {
            note = None;
        }
        let a = Points::from_scalars(treatments);
        Ok((KernelSpec::joint(block.resolve(&a, matched)?), note))
    }

    /// Resolves the stage-1 and stage-2 kernels of the two-stage estimator.
    pub fn resolve_pair(
        stage1: &KernelTemplate,
        stage2: &KernelTemplate,
        covariates: &Points,
        treatments: &[f64],
    ) -> Result<ResolvedKernels> {
        let s1 = stage1.resolve_joint(covariates, treatments)?;
        let (s2, note) = stage2.resolve_treatment(treatments, Some(&s1))?;
        Ok(ResolvedKernels {
            stage1: s1,
            stage2: s2,
            notes: note.into_iter().collect(),
        })
    }
}
