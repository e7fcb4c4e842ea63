use std::fmt;
use std::path::{Path, PathBuf};

use naifs::entropy::SpanningMode;
use naifs::properties::SpecInstance;
use naifs::{Grid, NaifsSchedule, Potential, ScheduleSpec, Space};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Malformed or inconsistent configuration (exit code 1).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Entropy,
    AsymptoticEntropy,
    Pressure,
    FixedScalePressure,
    Nonwandering,
    EntropyPoint,
    Specification,
    Expansivity,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Entropy => "entropy",
            ExperimentKind::AsymptoticEntropy => "asymptotic_entropy",
            ExperimentKind::Pressure => "pressure",
            ExperimentKind::FixedScalePressure => "fixed_scale_pressure",
            ExperimentKind::Nonwandering => "nonwandering",
            ExperimentKind::EntropyPoint => "entropy_point",
            ExperimentKind::Specification => "specification",
            ExperimentKind::Expansivity => "expansivity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedScaleConfig {
    pub eps: f64,
    pub delta: f64,
    /// Certificate written by an `expansivity` run; relative to the config
    /// file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonwanderingConfig {
    pub radius: f64,
    pub n_max: usize,
    pub m_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropyPointConfig {
    pub centers: Vec<Vec<f64>>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecificationConfig {
    pub delta: f64,
    /// Random instances drawn from the seed.
    #[serde(default)]
    pub random: usize,
    #[serde(default = "default_max_targets")]
    pub max_targets: usize,
    #[serde(default = "default_max_window")]
    pub max_window: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub instances: Vec<SpecInstance>,
}

fn default_max_targets() -> usize {
    4
}

fn default_max_window() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansivityConfig {
    pub delta: f64,
    pub gammas: Vec<f64>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_k_cap")]
    pub k_cap: usize,
}

fn default_pairs() -> usize {
    2000
}

fn default_k_cap() -> usize {
    12
}

fn default_budget() -> usize {
    4096
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub mesh: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps: Vec<f64>,
    /// Inclusive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_range: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub k_list: Vec<usize>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub spanning: SpanningMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    pub space: Space,
    pub schedule: ScheduleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Potential>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_scale: Option<FixedScaleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonwandering: Option<NonwanderingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_point: Option<EntropyPointConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub specification: Option<SpecificationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansivity: Option<ExpansivityConfig>,
}

/// Schedule and grid built from a validated config.
pub struct System {
    pub schedule: NaifsSchedule,
    pub grid: Grid,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn n_list(&self) -> Vec<usize> {
        self.n_range.map(|(a, b)| (a..=b).collect()).unwrap_or_default()
    }

    /// Checks the fields the experiment needs; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        if self.budget == 0 {
            return fail("budget must be at least 1");
        }
        let needs_counts = matches!(
            self.kind,
            ExperimentKind::Entropy
                | ExperimentKind::AsymptoticEntropy
                | ExperimentKind::Pressure
                | ExperimentKind::FixedScalePressure
                | ExperimentKind::EntropyPoint
        );
        if needs_counts {
            if self.kind != ExperimentKind::FixedScalePressure && self.eps.is_empty() {
                return fail("eps must list at least one scale");
            }
            match self.n_range {
                Some((a, b)) if a >= 1 && a <= b => {}
                Some(_) => return fail("n_range must be [a, b] with 1 <= a <= b"),
                None => return fail("n_range is required"),
            }
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0)) {
            return fail(format!("eps values must be positive, got {e}"));
        }
        for e in self.eps.iter().filter(|e| **e <= 2.0 * self.mesh) {
            warnings.push(format!("eps = {e} is not above twice the mesh {}", self.mesh));
        }
        let missing = |section: &str| fail(format!("kind {} needs a [{section}] section", self.kind.name()));
        match self.kind {
            ExperimentKind::AsymptoticEntropy if self.k_list.is_empty() => return fail("k_list is required"),
            ExperimentKind::Pressure | ExperimentKind::FixedScalePressure if self.potential.is_none() => {
                return missing("potential")
            }
            ExperimentKind::FixedScalePressure if self.fixed_scale.is_none() => return missing("fixed_scale"),
            ExperimentKind::Nonwandering if self.nonwandering.is_none() => return missing("nonwandering"),
            ExperimentKind::EntropyPoint if self.entropy_point.is_none() => return missing("entropy_point"),
            ExperimentKind::Specification => match &self.specification {
                None => return missing("specification"),
                Some(s) if s.random == 0 && s.instances.is_empty() => {
                    return fail("specification needs random > 0 or explicit instances")
                }
                Some(s) if s.max_targets < 1 => return fail("max_targets must be at least 1"),
                _ => {}
            },
            ExperimentKind::Expansivity if self.expansivity.is_none() => return missing("expansivity"),
            _ => {}
        }
        if let Some(p) = &self.potential {
            p.validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(warnings)
    }

    pub fn system(&self) -> Result<System, ConfigError> {
        let schedule = NaifsSchedule::from_spec(self.space, &self.schedule).map_err(|e| ConfigError(e.to_string()))?;
        let grid = Grid::new(self.space, self.mesh).map_err(|e| ConfigError(e.to_string()))?;
        Ok(System { schedule, grid })
    }
}
