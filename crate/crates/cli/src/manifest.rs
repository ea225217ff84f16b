use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

/// Record of one invocation, written next to its primary output as
/// `<output>.manifest.json`.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

pub struct Recorder {
    command: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    files: Vec<PathBuf>,
    start: Instant,
}

impl Recorder {
    pub fn new<C: Serialize>(command: &str, config: &C, seeds: Vec<u64>) -> Self {
        Recorder {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            seeds,
            files: Vec::new(),
            start: Instant::now(),
        }
    }

    pub fn produced(&mut self, path: &Path) {
        self.files.push(path.to_path_buf());
    }

    /// Hashes every produced file and writes the manifest beside `primary`.
    pub fn finish(self, primary: &Path) -> std::io::Result<PathBuf> {
        let artifacts = self
            .files
            .iter()
            .map(|p| {
                Ok(Artifact {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<std::io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config: self.config,
            seeds: self.seeds,
            artifacts,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        let path = manifest_path(primary);
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
