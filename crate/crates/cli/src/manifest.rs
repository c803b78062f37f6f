use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ris_backcom::config::SystemConfig;

use crate::CliError;

/// Everything needed to repeat a run byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub core_version: String,
    pub command: String,
    /// Command line after the program name.
    pub args: Vec<String>,
    pub output: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: SystemConfig,
}

pub fn config_hash(config: &SystemConfig) -> String {
    Sha256::digest(config.to_toml_string().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// `results.csv` -> `results.csv.manifest.toml`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.toml");
    PathBuf::from(name)
}

impl RunManifest {
    pub fn new(command: &str, args: &[String], output: &Path, config: &SystemConfig) -> Self {
        Self {
            tool: "risbc".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            core_version: ris_backcom::VERSION.into(),
            command: command.into(),
            args: args.to_vec(),
            output: output.display().to_string(),
            seed: config.seed,
            config_sha256: config_hash(config),
            config: config.clone(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<PathBuf, CliError> {
        let path = manifest_path(out);
        let text = toml::to_string(self).map_err(|e| CliError::Config(format!("manifest: {e}")))?;
        std::fs::write(&path, text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let m: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        m.config.validate()?;
        let hash = config_hash(&m.config);
        if hash != m.config_sha256 {
            return Err(CliError::Config(format!(
                "{}: config hash {} does not match recorded {}",
                path.display(),
                hash,
                m.config_sha256
            )));
        }
        Ok(m)
    }
}
