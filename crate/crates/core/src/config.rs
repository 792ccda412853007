//! JSON run configuration.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "problem": { "fixture": "paper-regression" },
//!   "roster": { "f": 1, "r": 0, "fault": { "kind": "gradient-reverse" } },
//!   "gar": "cge",
//!   "iterations": 500,
//!   "seed": 7
//! }
//! ```
//!
//! Only `schema`, `problem` and `roster` are required; everything else falls
//! back to [`RunConfig::new`]. Unknown fields are rejected and error messages
//! carry the JSON path of the offending field.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::aggregation::GarSpec;
use crate::engine::{NoiseModel, RunConfig, StepSchedule, StragglerModel};
use crate::error::{Error, Result};
use crate::model::{AgentRoster, BoxDomain, FaultKind, RegressionProblem, BUNDLED_FIXTURE_NAME};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSource {
    Fixture(String),
    /// Relative paths resolve against the config file's directory.
    Csv(PathBuf),
}

impl ProblemSource {
    pub fn load(&self, base_dir: &Path) -> Result<RegressionProblem> {
        match self {
            ProblemSource::Fixture(name) => load_fixture(name),
            ProblemSource::Csv(path) => RegressionProblem::from_csv_path(base_dir.join(path)),
        }
    }
}

pub fn load_fixture(name: &str) -> Result<RegressionProblem> {
    if name == BUNDLED_FIXTURE_NAME {
        Ok(RegressionProblem::bundled_fixture())
    } else {
        Err(Error::InvalidConfig(format!(
            "unknown fixture {name:?}, available: {BUNDLED_FIXTURE_NAME}"
        )))
    }
}

fn default_fault() -> FaultKind {
    FaultKind::GradientReverse
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterSpec {
    pub f: usize,
    pub r: usize,
    /// Defaults to the first `f` agents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub byzantine: Option<Vec<usize>>,
    #[serde(default = "default_fault")]
    pub fault: FaultKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Serialized form of [`RunConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: u32,
    pub problem: ProblemSource,
    pub roster: RosterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gar: Option<GarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stragglers: Option<StragglerModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Deserializes `T`, reporting the JSON path on failure.
pub fn from_json_str<T: serde::de::DeserializeOwned>(text: &str, source_name: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::InvalidConfig(format!("{source_name}: at `{path}`: {inner}"))
    })
}

impl ConfigFile {
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let cfg: ConfigFile = from_json_str(text, source_name)?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "{source_name}: at `schema`: unsupported version {}, expected {SCHEMA_VERSION}",
                cfg.schema
            )));
        }
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Builds and validates the run configuration.
    pub fn resolve(&self, base_dir: &Path) -> Result<RunConfig> {
        let problem = self.problem.load(base_dir)?;
        self.resolve_with(problem)
    }

    pub fn resolve_with(&self, problem: RegressionProblem) -> Result<RunConfig> {
        let n = problem.n();
        let ro = &self.roster;
        let roster = match &ro.byzantine {
            Some(set) => AgentRoster::with_byzantine(n, ro.f, ro.r, set.clone(), ro.fault)?,
            None => AgentRoster::new(n, ro.f, ro.r, ro.fault)?,
        };
        let mut cfg = RunConfig::new(problem, roster);
        if let Some(w) = &self.domain {
            cfg.domain = BoxDomain::new(
                DVector::from_column_slice(&w.lower),
                DVector::from_column_slice(&w.upper),
            )?;
        }
        if let Some(g) = self.gar {
            cfg.gar = g;
        }
        if let Some(s) = &self.stragglers {
            cfg.stragglers = s.clone();
        }
        if let Some(s) = self.schedule {
            cfg.schedule = s;
        }
        if let Some(nm) = self.noise {
            cfg.noise = nm;
        }
        if let Some(x0) = &self.x0 {
            cfg.x0 = DVector::from_column_slice(x0);
        }
        if let Some(t) = self.iterations {
            cfg.iterations = t;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Directory that relative paths in a config file are resolved against.
pub fn base_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Reads, parses and validates a config file.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    ConfigFile::from_path(path)?.resolve(&base_dir_of(path))
}
