//! Versioned JSON scenario documents.

use std::path::Path;

use serde::{Deserialize, Serialize};
use velsched_core::scenarios::{generate, ScenarioConfig};
use velsched_core::solver::SolverConfig;
use velsched_core::trajectory::{SmoothingParams, WaypointPath};
use velsched_core::ProblemInstance;

use crate::error::{CliError, Result};
use crate::io::write_atomic;

pub const SCENARIO_VERSION: &str = "velsched-scenario/1";

/// Generator inputs, optional explicit routes and solver parameters.
///
/// When `paths` is present it defines the instance; otherwise the instance
/// is regenerated from `config`. Speed bounds, bandwidth and the safety
/// distance (explicit or density-derived) always come from `config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: String,
    pub config: ScenarioConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths: Option<Vec<WaypointPath>>,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl ScenarioFile {
    /// Generate the instance for `config` and embed its routes.
    pub fn generated(config: ScenarioConfig, solver: SolverConfig) -> Result<(Self, ProblemInstance)> {
        let instance = generate(&config)?.instance;
        let file = ScenarioFile {
            version: SCENARIO_VERSION.to_string(),
            config,
            paths: Some(instance.paths.clone()),
            solver,
        };
        Ok((file, instance))
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file = Self::from_json(&text).map_err(|source| CliError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if file.version != SCENARIO_VERSION {
            return Err(CliError::Usage(format!(
                "{}: unsupported scenario version {:?}, expected {SCENARIO_VERSION:?}",
                path.display(),
                file.version
            )));
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        let cfg = &self.config;
        match &self.paths {
            Some(paths) => Ok(ProblemInstance::new(
                paths.clone(),
                cfg.v_min,
                cfg.v_max,
                cfg.resolved_d_safe()?,
                SmoothingParams::from_bandwidth(cfg.bandwidth)?,
            )?),
            None => Ok(generate(cfg)?.instance),
        }
    }
}
