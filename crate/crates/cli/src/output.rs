use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use levy_lp::report::hex_digest;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;

/// Output directory that records every file it writes for the run manifest.
pub struct Output {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), contents)?;
        self.files
            .push((name.to_string(), hex_digest(contents.as_bytes())));
        Ok(())
    }

    /// Pretty JSON with keys in sorted order.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let v = serde_json::to_value(value).map_err(|e| CliError::Validation(e.to_string()))?;
        let mut s =
            serde_json::to_string_pretty(&v).map_err(|e| CliError::Validation(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }

    /// manifest.json: command, config digest, seed, files with SHA-256
    /// digests; the wall-clock stamp sits in its own field outside them.
    pub fn finish(
        mut self,
        command: &str,
        config_digest: &str,
        seed: Option<u64>,
    ) -> Result<(), CliError> {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|(name, digest)| json!({"path": name, "sha256": digest}))
            .collect();
        let stamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = json!({
            "command": command,
            "config_sha256": config_digest,
            "seed": seed,
            "files": files,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_clock": {"unix_time": stamp},
        });
        let s = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Validation(e.to_string()))?
            + "\n";
        std::fs::write(self.dir.join("manifest.json"), s)?;
        self.files.clear();
        Ok(())
    }
}

/// Float in the CSV format: 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}
