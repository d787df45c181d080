pub mod ablate;
pub mod estimate;
pub mod gen_data;
pub mod likelihood;
pub mod track;
pub mod train;

use std::path::Path;

use gpdm::net::{load_checkpoint, NetParams, Role};
use gpdm::sampler::{OdeConfig, OdeMethod};
use gpdm::sde::NoiseSchedule;
use gpdm::synth::SceneSample;

use crate::{CliError, CliResult};

pub fn load_dataset(path: &Path) -> CliResult<Vec<SceneSample>> {
    if !path.exists() {
        return Err(CliError::Data(format!("dataset not found: {}", path.display())));
    }
    gpdm::synth::read_dataset(path).map_err(|e| CliError::Data(e.to_string()))
}

pub fn load_params(path: &Path, want: Role, flag: &str) -> CliResult<NetParams> {
    if !path.exists() {
        return Err(CliError::Data(format!(
            "checkpoint for {flag} not found: {}",
            path.display()
        )));
    }
    let params = load_checkpoint(path).map_err(|e| CliError::Data(e.to_string()))?;
    if params.role != want {
        return Err(CliError::Data(format!(
            "{flag}: checkpoint role mismatch (expected {want:?})"
        )));
    }
    Ok(params)
}

/// Shared solver-settings block used by several subcommands.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct OdeSettings {
    pub method: OdeMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub fixed_steps: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        let d = OdeConfig::default();
        Self {
            method: d.method,
            abs_tol: d.abs_tol,
            rel_tol: d.rel_tol,
            fixed_steps: d.fixed_steps,
        }
    }
}

impl OdeSettings {
    pub fn to_config(self, schedule: &NoiseSchedule) -> OdeConfig {
        OdeConfig {
            method: self.method,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            fixed_steps: self.fixed_steps,
            t_start: 1.0,
            t_end: schedule.eps_min(),
        }
    }
}
