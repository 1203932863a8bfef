//! Run manifests.
//!
//! Every pipeline command records what it ran: the command name, a content
//! hash of the exact configuration, the seed, the code version and the
//! input/output paths. In deterministic mode the wall-clock fields are
//! omitted entirely so a rerun writes byte-identical JSON.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};

pub const RUN_MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Provenance record written next to a command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    /// Unix seconds; absent in deterministic mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub started_unix: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    #[serde(default)]
    pub finished_unix: Option<f64>,
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    /// Start a manifest for `command`. The clock starts immediately unless
    /// the config asks for deterministic output.
    pub fn begin(command: &str, cfg: &Config, code_version: &str) -> RunManifest {
        RunManifest {
            schema_version: RUN_MANIFEST_SCHEMA_VERSION,
            command: command.to_string(),
            config_hash: cfg.content_hash(),
            seed: cfg.seed,
            code_version: code_version.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_unix: (!cfg.deterministic).then(now_unix),
            finished_unix: None,
        }
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.display().to_string());
        self
    }

    /// Stamp the finish time (no-op when the clock never started) and write
    /// `run_<command>.json` into `dir`.
    pub fn finish(mut self, dir: &Path) -> Result<()> {
        if self.started_unix.is_some() {
            self.finished_unix = Some(now_unix());
        }
        let path = dir.join(format!("run_{}.json", self.command));
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("run manifest {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_manifests_omit_clock_and_reproduce() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = Config::default(); // deterministic by default
        for _ in 0..2 {
            let mut m = RunManifest::begin("synth", &cfg, "0.1.0");
            m.input(Path::new("a.toml")).output(Path::new("out/"));
            m.finish(dir.path()).unwrap();
        }
        let path = dir.path().join("run_synth.json");
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.contains("unix"), "clock fields must be absent: {text}");
        let m = RunManifest::load(&path).unwrap();
        assert_eq!(m.command, "synth");
        assert_eq!(m.seed, cfg.seed);
        assert_eq!(m.config_hash, cfg.content_hash());
        assert_eq!(m.inputs, ["a.toml"]);
        assert_eq!(m.started_unix, None);
    }

    #[test]
    fn wall_clock_runs_when_not_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        cfg.deterministic = false;
        let m = RunManifest::begin("train", &cfg, "0.1.0");
        assert!(m.started_unix.is_some());
        m.finish(dir.path()).unwrap();
        let back = RunManifest::load(&dir.path().join("run_train.json")).unwrap();
        assert!(back.finished_unix.unwrap() >= back.started_unix.unwrap());
    }

    #[test]
    fn missing_manifest_is_a_missing_artifact() {
        let err = RunManifest::load(Path::new("/nonexistent/run_x.json")).unwrap_err();
        assert!(matches!(err, Error::MissingArtifact(_)));
    }
}
