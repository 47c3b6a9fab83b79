//! `run.json`: written before a command does any work and rewritten when it
//! ends, so a crashed run shows up as a manifest stuck in `running`.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Completed,
    /// Finished, but some requested output is missing.
    Incomplete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub status: RunStatus,
    /// Resolved training and evaluation settings.
    pub config: serde_json::Value,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<InputFile>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub outputs: Vec<String>,
    pub error: Option<String>,
    /// Individual runs that failed inside a sweep or ablation.
    pub failures: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hashes a file, or every regular file directly inside a directory
/// (sorted, `run.json` skipped).
pub fn hash_inputs(paths: &[&Path]) -> Result<Vec<InputFile>> {
    let mut out = Vec::new();
    for &p in paths {
        let mut files = Vec::new();
        if p.is_dir() {
            for entry in fs::read_dir(p).with_context(|| format!("listing {}", p.display()))? {
                let path = entry?.path();
                if path.is_file() && path.file_name().is_some_and(|n| n != RUN_FILE) {
                    files.push(path);
                }
            }
            files.sort();
        } else {
            files.push(p.to_path_buf());
        }
        for f in files {
            out.push(InputFile {
                sha256: sha256_file(&f)?,
                path: f.display().to_string(),
            });
        }
    }
    Ok(out)
}

/// A command in progress.
pub struct Run {
    path: PathBuf,
    manifest: RunManifest,
}

impl Run {
    /// Creates `out_dir` and writes the initial manifest.
    pub fn start<C: Serialize>(out_dir: &Path, command: &str, config: &C, seed: u64, inputs: &[&Path]) -> Result<Run> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let manifest = RunManifest {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            status: RunStatus::Running,
            config: serde_json::to_value(config)?,
            config_hash: coba::eval::config_hash(config),
            seed,
            inputs: hash_inputs(inputs)?,
            started_at: now(),
            finished_at: None,
            outputs: Vec::new(),
            error: None,
            failures: Vec::new(),
        };
        let run = Run {
            path: out_dir.join(RUN_FILE),
            manifest,
        };
        run.write()?;
        Ok(run)
    }

    fn write(&self) -> Result<()> {
        coba::io::write_json(&self.path, &self.manifest).with_context(|| format!("writing {}", self.path.display()))
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    pub fn failure(&mut self, message: String) {
        self.manifest.failures.push(message);
    }

    /// Runs `body` and records how it ended. `body` returns whether every
    /// requested output was produced.
    pub fn execute(mut self, body: impl FnOnce(&mut Run) -> Result<bool>) -> Result<()> {
        let result = body(&mut self);
        self.manifest.finished_at = Some(now());
        let outcome = match result {
            Ok(true) => {
                self.manifest.status = RunStatus::Completed;
                Ok(())
            }
            Ok(false) => {
                self.manifest.status = RunStatus::Incomplete;
                Err(anyhow::anyhow!(
                    "some requested outputs were not produced; see {}",
                    self.path.display()
                ))
            }
            Err(e) => {
                self.manifest.status = RunStatus::Failed;
                self.manifest.error = Some(format!("{e:#}"));
                Err(e)
            }
        };
        self.write()?;
        outcome
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_written_before_work_and_updated_after() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.txt");
        fs::write(&input, "abc").unwrap();
        let run = Run::start(dir.path(), "test", &serde_json::json!({"a": 1}), 3, &[&input]).unwrap();
        let early: RunManifest = coba::io::read_json(&dir.path().join(RUN_FILE)).unwrap();
        assert_eq!(early.status, RunStatus::Running);
        assert_eq!(
            early.inputs[0].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let err = run
            .execute(|_| -> Result<bool> { anyhow::bail!("boom") })
            .unwrap_err();
        assert_eq!(err.to_string(), "boom");
        let done: RunManifest = coba::io::read_json(&dir.path().join(RUN_FILE)).unwrap();
        assert_eq!(done.status, RunStatus::Failed);
        assert_eq!(done.error.as_deref(), Some("boom"));
        assert!(done.finished_at.is_some());
    }

    #[test]
    fn incomplete_outputs_are_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let run = Run::start(dir.path(), "test", &(), 0, &[]).unwrap();
        assert!(run.execute(|_| Ok(false)).is_err());
        let done: RunManifest = coba::io::read_json(&dir.path().join(RUN_FILE)).unwrap();
        assert_eq!(done.status, RunStatus::Incomplete);
    }

    #[test]
    fn config_hash_ignores_key_order() {
        let a = serde_json::json!({"dim": 8, "mode": "full"});
        let b: serde_json::Value = serde_json::from_str(r#"{"mode":"full","dim":8}"#).unwrap();
        assert_eq!(coba::eval::config_hash(&a), coba::eval::config_hash(&b));
    }
}
