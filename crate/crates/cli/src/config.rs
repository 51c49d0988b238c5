//! Run-configuration parsing.
//!
//! A run is described by one JSON object with a `command` field naming
//! the pipeline and the remaining fields configuring it. Parsing happens
//! in two stages: the command name is extracted first (so an empty or
//! command-less file fails with a precise reason), then the rest of the
//! object is deserialized into the per-command struct with unknown
//! fields rejected.

use std::path::PathBuf;

use serde::Deserialize;
use stocycle::base::{BasePoint, BaseSystem};
use stocycle::cocycle::CocycleSpec;
use stocycle::transfer::PartitionFamily;

use crate::CliError;

/// One parsed run configuration.
#[derive(Debug)]
pub enum RunConfig {
    Gen(GenConfig),
    Lyap(LyapConfig),
    Dominate(DominateConfig),
    Perturb(PerturbConfig),
    Access(AccessConfig),
    Ruelle(RuelleConfig),
    Classify(ClassifyConfig),
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::Gen(_) => "gen",
            RunConfig::Lyap(_) => "lyap",
            RunConfig::Dominate(_) => "dominate",
            RunConfig::Perturb(_) => "perturb",
            RunConfig::Access(_) => "access",
            RunConfig::Ruelle(_) => "ruelle",
            RunConfig::Classify(_) => "classify",
        }
    }

    /// Seed stated in the configuration (before any flag override).
    pub fn seed(&self) -> u64 {
        match self {
            RunConfig::Gen(c) => c.seed,
            RunConfig::Lyap(c) => c.seed,
            RunConfig::Dominate(c) => c.seed,
            RunConfig::Perturb(c) => c.seed,
            RunConfig::Access(c) => c.seed,
            RunConfig::Ruelle(c) => c.seed,
            RunConfig::Classify(c) => c.seed,
        }
    }
}

/// Parses the raw bytes of a configuration file.
pub fn parse_config(raw: &[u8]) -> Result<RunConfig, CliError> {
    let text = std::str::from_utf8(raw)
        .map_err(|e| CliError::validation(format!("config is not UTF-8: {e}")))?;
    if text.trim().is_empty() {
        return Err(CliError::validation("missing command"));
    }
    let mut value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::validation(format!("config is not valid JSON: {e}")))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::validation("config must be a JSON object"))?;
    let command = match obj.remove("command") {
        None | Some(serde_json::Value::Null) => {
            return Err(CliError::validation("missing command"));
        }
        Some(serde_json::Value::String(s)) => s,
        Some(other) => {
            return Err(CliError::validation(format!(
                "command must be a string, got {other}"
            )));
        }
    };
    let rest = serde_json::Value::Object(std::mem::take(obj));
    let wrap = |r: serde_json::Result<RunConfig>| {
        r.map_err(|e| CliError::validation(format!("bad `{command}` config: {e}")))
    };
    match command.as_str() {
        "gen" => wrap(serde_json::from_value(rest).map(RunConfig::Gen)),
        "lyap" => wrap(serde_json::from_value(rest).map(RunConfig::Lyap)),
        "dominate" => wrap(serde_json::from_value(rest).map(RunConfig::Dominate)),
        "perturb" => wrap(serde_json::from_value(rest).map(RunConfig::Perturb)),
        "access" => wrap(serde_json::from_value(rest).map(RunConfig::Access)),
        "ruelle" => wrap(serde_json::from_value(rest).map(RunConfig::Ruelle)),
        "classify" => wrap(serde_json::from_value(rest).map(RunConfig::Classify)),
        other => Err(CliError::validation(format!(
            "unknown command `{other}` (expected gen, lyap, dominate, perturb, access, \
             ruelle, or classify)"
        ))),
    }
}

/// Row profile for random matrices: `"uniform"` or
/// `{"near_identity": eps}`.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileConfig {
    Uniform,
    NearIdentity(f64),
}

impl ProfileConfig {
    pub fn to_profile(self) -> stocycle::RowProfile {
        match self {
            ProfileConfig::Uniform => stocycle::RowProfile::Uniform,
            ProfileConfig::NearIdentity(eps) => stocycle::RowProfile::NearIdentity(eps),
        }
    }
}

/// Generate random cocycle spec files.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    #[serde(default)]
    pub seed: u64,
    pub count: usize,
    pub n: usize,
    /// Base system; one-point cycle when absent.
    #[serde(default)]
    pub base: Option<BaseSystem>,
    #[serde(default)]
    pub profile: Option<ProfileConfig>,
    /// Anchor count for interpolated generators over a rotation base;
    /// constant generators when absent.
    #[serde(default)]
    pub anchors: Option<usize>,
    /// File-name prefix, `spec` by default.
    #[serde(default)]
    pub prefix: Option<String>,
}

/// Estimate or exactly compute growth rates of one spec.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spec: Option<CocycleSpec>,
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
    #[serde(default)]
    pub point: Option<serde_json::Value>,
    /// Orbit length for the non-periodic estimator.
    #[serde(default)]
    pub len: Option<usize>,
    #[serde(default)]
    pub stride: Option<usize>,
}

/// Certify the fixed-line splitting of one spec.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DominateConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spec: Option<CocycleSpec>,
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
    #[serde(default)]
    pub point: Option<serde_json::Value>,
    /// Sample-orbit length over which norms are certified.
    #[serde(default)]
    pub len: Option<usize>,
}

/// Sweep the deformation parameter and report exponent shifts.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub spec: Option<CocycleSpec>,
    #[serde(default)]
    pub spec_path: Option<PathBuf>,
    #[serde(default)]
    pub point: Option<serde_json::Value>,
    /// Deformation parameters; 0.1 through 0.9 by 0.1 when absent.
    #[serde(default)]
    pub rhos: Option<Vec<f64>>,
    /// Probe vector for the fixed-point defect; first basis vector when
    /// absent.
    #[serde(default)]
    pub vector: Option<Vec<f64>>,
}

/// Batch-redirect random matrices along nearby directions.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccessConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub count: usize,
    /// Perturbation budget; `0.5 / c^2` for the dimension constant `c`
    /// when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

/// Run the interval-partition transfer pipeline.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuelleConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub family: Option<PartitionFamily>,
    #[serde(default)]
    pub family_path: Option<PathBuf>,
    #[serde(default)]
    pub point: Option<serde_json::Value>,
    #[serde(default)]
    pub orbit_len: Option<usize>,
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default)]
    pub pullback_depth: Option<usize>,
}

/// Classify random specs by spectrum shape.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyConfig {
    #[serde(default)]
    pub seed: u64,
    pub count: usize,
    pub n: usize,
    /// Cycle period of the generated specs; 1 when absent.
    #[serde(default)]
    pub period: Option<usize>,
    /// Largest iterate count tried when certifying multi-point spectra.
    #[serde(default)]
    pub m_max: Option<usize>,
    #[serde(default)]
    pub profile: Option<ProfileConfig>,
}

/// Interprets a config `point` value against the base system: cycles
/// take an index, rotations a coordinate in `[0, 1)`, torus bases a
/// two-entry array.
pub fn resolve_point(
    base: &BaseSystem,
    value: &Option<serde_json::Value>,
) -> Result<BasePoint, CliError> {
    let Some(v) = value else {
        return Ok(base.origin());
    };
    let point = match base {
        BaseSystem::Cycle { .. } => v
            .as_u64()
            .map(|i| BasePoint::Cycle(i as usize))
            .ok_or_else(|| CliError::validation("cycle point must be an index")),
        BaseSystem::Rotation { .. } => v
            .as_f64()
            .map(BasePoint::Circle)
            .ok_or_else(|| CliError::validation("rotation point must be a number in [0, 1)")),
        BaseSystem::Torus { .. } => {
            let arr = v.as_array().and_then(|a| {
                if a.len() == 2 {
                    Some((a[0].as_f64()?, a[1].as_f64()?))
                } else {
                    None
                }
            });
            arr.map(|(a, b)| BasePoint::Torus(a, b))
                .ok_or_else(|| CliError::validation("torus point must be a two-entry array"))
        }
    }?;
    base.validate_point(&point)
        .map_err(|e| CliError::validation(format!("bad point: {e}")))?;
    Ok(point)
}

/// Loads a spec either inline or from a file, re-running full validation
/// (deserialization alone does not cross-check generator and base).
pub fn resolve_spec(
    inline: &Option<CocycleSpec>,
    path: &Option<PathBuf>,
) -> Result<CocycleSpec, CliError> {
    let spec = match (inline, path) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation("give either `spec` or `spec_path`, not both"));
        }
        (None, None) => {
            return Err(CliError::validation("missing spec: set `spec` or `spec_path`"));
        }
        (Some(s), None) => s.clone(),
        (None, Some(p)) => {
            let raw = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("cannot read spec {}: {e}", p.display()))
            })?;
            serde_json::from_str(&raw).map_err(|e| {
                CliError::validation(format!("bad spec {}: {e}", p.display()))
            })?
        }
    };
    CocycleSpec::new(spec.base().clone(), spec.generator().clone())
        .map_err(|e| CliError::validation(format!("invalid spec: {e}")))
}

/// Loads a partition family either inline or from a file and re-validates.
pub fn resolve_family(
    inline: &Option<PartitionFamily>,
    path: &Option<PathBuf>,
) -> Result<PartitionFamily, CliError> {
    let family = match (inline, path) {
        (Some(_), Some(_)) => {
            return Err(CliError::validation(
                "give either `family` or `family_path`, not both",
            ));
        }
        (None, None) => {
            return Err(CliError::validation("missing family: set `family` or `family_path`"));
        }
        (Some(f), None) => f.clone(),
        (None, Some(p)) => {
            let raw = std::fs::read_to_string(p).map_err(|e| {
                CliError::validation(format!("cannot read family {}: {e}", p.display()))
            })?;
            serde_json::from_str(&raw).map_err(|e| {
                CliError::validation(format!("bad family {}: {e}", p.display()))
            })?
        }
    };
    family
        .validate()
        .map_err(|e| CliError::validation(format!("invalid family: {e}")))?;
    Ok(family)
}
