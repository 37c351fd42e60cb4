//! Output directory handling and run sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Mode, RunConfig};
use crate::error::{CliError, CliResult};

pub const SIDECAR: &str = "run.json";

/// Everything needed to re-run a command.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub command: Mode,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    pub config: RunConfig,
}

/// TOML by default; a `.json` path is read as a sidecar.
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let side: Sidecar =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("sidecar {}: {e}", path.display())))?;
        return Ok(side.config);
    }
    RunConfig::load(path)
}

pub struct OutDir {
    dir: PathBuf,
    force: bool,
}

impl OutDir {
    pub fn new(dir: &Path, force: bool) -> CliResult<OutDir> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Data(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf(), force })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Fails before anything is written if a target exists and `--force` is off.
    pub fn claim<S: AsRef<str>>(&self, names: &[S]) -> CliResult<()> {
        if self.force {
            return Ok(());
        }
        let taken: Vec<String> = names
            .iter()
            .map(|n| self.path(n.as_ref()))
            .filter(|p| p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if taken.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(format!("refusing to overwrite {} (use --force)", taken.join(", "))))
        }
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn sidecar(&self, command: Mode, input: Option<&Path>, config: &RunConfig) -> CliResult<()> {
        self.write_json(
            SIDECAR,
            &Sidecar {
                command,
                version: env!("CARGO_PKG_VERSION").to_owned(),
                input: input.map(Path::to_path_buf),
                config: config.clone(),
            },
        )
    }
}
