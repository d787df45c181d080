//! Config layering: defaults <- TOML file <- command-line flags.
//!
//! Each run writes the fully resolved configuration next to its outputs so
//! every artifact can be regenerated from the snapshot alone.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy)]
pub struct Common {
    pub seed: u64,
    pub workers: Option<usize>,
}

/// Raw TOML sections; every field optional so files stay minimal.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub common: Option<CommonSection>,
    #[serde(rename = "gen-data")]
    pub gen_data: Option<toml::Value>,
    pub train: Option<toml::Value>,
    pub estimate: Option<toml::Value>,
    pub track: Option<toml::Value>,
    #[serde(rename = "likelihood-check")]
    pub likelihood_check: Option<toml::Value>,
    pub ablate: Option<toml::Value>,
}

#[derive(Debug, Deserialize)]
pub struct CommonSection {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))
            }
        }
    }
}

/// Pulls a typed section out of the file config.
pub fn section<T: serde::de::DeserializeOwned + Default>(
    value: &Option<toml::Value>,
    name: &str,
) -> CliResult<T> {
    match value {
        None => Ok(T::default()),
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e| CliError::config(format!("[{name}]: {e}"))),
    }
}

/// Writes the resolved-config snapshot into the output directory.
pub fn write_snapshot<T: Serialize>(out_dir: &Path, resolved: &T) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    let text = toml::to_string_pretty(resolved)
        .map_err(|e| CliError::config(format!("snapshot: {e}")))?;
    std::fs::write(out_dir.join("resolved_config.toml"), text)
        .map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    Ok(())
}

/// Wall-clock telemetry sidecar, kept out of the deterministic outputs.
pub fn write_telemetry<T: Serialize>(out_dir: &Path, telemetry: &T) -> CliResult<()> {
    let f = std::fs::File::create(out_dir.join("telemetry.json"))
        .map_err(|e| CliError::Data(format!("{}: {e}", out_dir.display())))?;
    serde_json::to_writer_pretty(f, telemetry)
        .map_err(|e| CliError::Data(format!("telemetry: {e}")))?;
    Ok(())
}

/// Collects violations so a config error reports every problem at once.
#[derive(Default)]
pub struct Violations(Vec<String>);

impl Violations {
    pub fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.0.push(msg.into());
        }
    }

    pub fn finish(self) -> CliResult<()> {
        if self.0.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(self.0))
        }
    }
}
