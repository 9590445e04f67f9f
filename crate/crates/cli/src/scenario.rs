//! Scenario files: TOML, versioned, unknown keys rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use hyers_core::algebra::{Algebra, Bimodule};
use hyers_core::maps::{inner_generalized, right_multiplier, ApproximateMapPair, GeneralizedDerivationPair, PerturbationSpec};
use hyers_core::verify::{LambdaSet, SampleSlots, CHECKS, CHECK_STAR_PRESERVATION, CHECK_SUPERSTABILITY};
use hyers_core::ControlFunction;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgebraSpec {
    Matrix { n: usize },
    /// JSON algebra descriptor, resolved relative to the scenario file.
    StructureConstants { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BimoduleSpec {
    #[default]
    #[serde(rename = "self")]
    SelfModule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExactMapSpec {
    /// `μ(a) = xa − ay`; coordinates are `[re, im]` pairs in the basis order.
    Inner { x: Vec<[f64; 2]>, y: Vec<[f64; 2]> },
    RightMultiplier { z: Vec<[f64; 2]> },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_ladder")]
    pub norm_ladder: (i32, i32),
    #[serde(default)]
    pub slots: SampleSlots,
}

fn default_samples() -> usize {
    200
}

fn default_ladder() -> (i32, i32) {
    (-4, 8)
}

impl Default for SamplerSection {
    fn default() -> Self {
        Self { samples: default_samples(), norm_ladder: default_ladder(), slots: SampleSlots::All }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarSection {
    #[serde(default = "default_unitaries")]
    pub unitaries: usize,
    #[serde(default = "default_star_depth")]
    pub depth: u32,
}

fn default_unitaries() -> usize {
    200
}

fn default_star_depth() -> u32 {
    48
}

impl Default for StarSection {
    fn default() -> Self {
        Self { unitaries: default_unitaries(), depth: default_star_depth() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperstabilitySection {
    #[serde(default = "default_m_max")]
    pub m_max: u32,
    #[serde(default = "default_n_max")]
    pub n_max: u32,
    #[serde(default = "default_probe_samples")]
    pub samples: usize,
    #[serde(default = "default_ladder_max")]
    pub ladder_log2_max: u32,
}

fn default_m_max() -> u32 {
    16
}
fn default_n_max() -> u32 {
    48
}
fn default_probe_samples() -> usize {
    64
}
fn default_ladder_max() -> u32 {
    8
}

impl Default for SuperstabilitySection {
    fn default() -> Self {
        Self {
            m_max: default_m_max(),
            n_max: default_n_max(),
            samples: default_probe_samples(),
            ladder_log2_max: default_ladder_max(),
        }
    }
}

fn zero_perturbation() -> PerturbationSpec {
    PerturbationSpec::zero()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    /// Extrapolation depth `N`; derived from the control when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<u32>,
    pub checks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub algebra: AlgebraSpec,
    #[serde(default)]
    pub bimodule: BimoduleSpec,
    pub exact_map: ExactMapSpec,
    #[serde(default = "zero_perturbation")]
    pub f_perturbation: PerturbationSpec,
    #[serde(default = "zero_perturbation")]
    pub g_perturbation: PerturbationSpec,
    pub control: ControlFunction,
    #[serde(default)]
    pub lambda_set: LambdaSet,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub star: StarSection,
    #[serde(default)]
    pub superstability: SuperstabilitySection,
}

/// A scenario with every object constructed.
#[derive(Debug, Clone)]
pub struct Built {
    pub pair: ApproximateMapPair,
    pub control: ControlFunction,
    pub depth: u32,
}

/// Bundled presets, runnable as `@name`.
pub const PRESETS: [(&str, &str); 4] = [
    ("general_power", include_str!("../scenarios/general_power.toml")),
    ("power_control", include_str!("../scenarios/power_control.toml")),
    ("star_inner", include_str!("../scenarios/star_inner.toml")),
    ("constant_control", include_str!("../scenarios/constant_control.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        if scenario.version != SCENARIO_VERSION {
            return Err(CliError::Parse(format!(
                "unsupported scenario version {} (expected {SCENARIO_VERSION})",
                scenario.version
            )));
        }
        Ok(scenario)
    }

    /// Loads `@preset` or a file path; returns the scenario and the directory
    /// relative paths resolve against.
    pub fn load(source: &str) -> Result<(Self, Option<PathBuf>), CliError> {
        if let Some(name) = source.strip_prefix('@') {
            let text = preset(name).ok_or_else(|| CliError::Parse(format!("unknown preset `{name}`")))?;
            return Ok((Self::from_toml_str(text)?, None));
        }
        let path = Path::new(source);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf);
        Ok((Self::from_toml_str(&text)?, base))
    }

    fn build_algebra(&self, base: Option<&Path>) -> Result<Algebra, CliError> {
        match &self.algebra {
            AlgebraSpec::Matrix { n } => Ok(Algebra::matrix(*n)?),
            AlgebraSpec::StructureConstants { file } => {
                let path = match base {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| CliError::Invalid(format!("structure constants {}: {e}", path.display())))?;
                Ok(Algebra::from_json(&text)?)
            }
        }
    }

    /// Constructs every object and checks cross-field invariants.
    pub fn build(&self, base: Option<&Path>) -> Result<Built, CliError> {
        let alg = Arc::new(self.build_algebra(base)?);
        let bm = match self.bimodule {
            BimoduleSpec::SelfModule => Arc::new(Bimodule::self_bimodule(alg.clone())),
        };
        let exact = match &self.exact_map {
            ExactMapSpec::Inner { x, y } => {
                inner_generalized(&bm, &bm.element_from_pairs(x)?, &bm.element_from_pairs(y)?)?
            }
            ExactMapSpec::RightMultiplier { z } => right_multiplier(&bm, &alg.element_from_pairs(z)?)?,
            ExactMapSpec::Zero => GeneralizedDerivationPair::zero(bm.clone()),
        };
        let pair = ApproximateMapPair::new(exact, self.f_perturbation.clone(), self.g_perturbation.clone())?;
        self.control.validate()?;

        let depth = self.depth.unwrap_or_else(|| self.control.default_depth());
        if !(1..=hyers_core::maps::MAX_LOG2_SCALE).contains(&depth) {
            return Err(CliError::Invalid(format!("depth {depth} outside 1..=512")));
        }
        if self.star.depth > hyers_core::maps::MAX_LOG2_SCALE {
            return Err(CliError::Invalid(format!("star depth {} exceeds 512", self.star.depth)));
        }
        if let LambdaSet::FullT { k } = self.lambda_set {
            if k == 0 {
                return Err(CliError::Invalid("lambda_set full_t needs k >= 1".into()));
            }
        }
        let (lo, hi) = self.sampler.norm_ladder;
        if lo > hi || lo < -64 || hi > 64 {
            return Err(CliError::Invalid(format!("norm ladder [{lo}, {hi}] must be ordered and within [-64, 64]")));
        }
        self.validate_checks(&alg)?;
        Ok(Built { pair, control: self.control.clone(), depth })
    }

    fn validate_checks(&self, alg: &Algebra) -> Result<(), CliError> {
        if self.checks.is_empty() {
            return Err(CliError::Invalid("no checks requested".into()));
        }
        for (i, name) in self.checks.iter().enumerate() {
            if !CHECKS.contains(&name.as_str()) {
                return Err(CliError::Invalid(format!("unknown check `{name}`; known: {}", CHECKS.join(", "))));
            }
            if self.checks[..i].contains(name) {
                return Err(CliError::Invalid(format!("check `{name}` listed twice")));
            }
        }
        if self.checks.iter().any(|c| c == CHECK_STAR_PRESERVATION) && !alg.is_cstar() {
            return Err(CliError::Invalid("star_preservation needs a C*-algebra (matrix algebra with involution)".into()));
        }
        if self.checks.iter().any(|c| c == CHECK_SUPERSTABILITY) && !matches!(self.control, ControlFunction::Constant { .. }) {
            return Err(CliError::Invalid("superstability needs a constant control".into()));
        }
        Ok(())
    }
}
