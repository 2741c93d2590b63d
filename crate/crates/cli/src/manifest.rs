use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: Option<u64>,
    /// Not part of the reproducible output; everything else is.
    pub wall_time_s: f64,
    pub summary: Value,
}

impl RunManifest {
    pub fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed: None,
            wall_time_s: 0.0,
            summary: Value::Null,
        }
    }

    pub fn input(&mut self, p: &Path) {
        self.inputs.push(p.display().to_string());
    }

    pub fn output(&mut self, p: &Path) {
        self.outputs.push(p.display().to_string());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        write_json(path, self)
    }
}

/// `dir/manifest.json` for directory outputs.
pub fn in_dir(dir: &Path) -> PathBuf {
    dir.join("manifest.json")
}

/// `report.json` gets `report.manifest.json` beside it.
pub fn beside(file: &Path) -> PathBuf {
    let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    file.with_file_name(format!("{stem}.manifest.json"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_paths() {
        assert_eq!(beside(Path::new("out/report.json")), PathBuf::from("out/report.manifest.json"));
        assert_eq!(beside(Path::new("traj.dat")), PathBuf::from("traj.manifest.json"));
        assert_eq!(in_dir(Path::new("out")), PathBuf::from("out/manifest.json"));
    }
}
