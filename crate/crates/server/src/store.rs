//! Append-only, content-addressed run storage.
//!
//! ```text
//! data_dir/
//!   datasets/<sha256>.csv
//!   runs/<run_id>/run.json
//!   runs/<run_id>/<artifact>
//! ```
//!
//! A run directory is claimed with `create_dir`, which fails if it exists, so
//! exactly one writer ever produces a run's artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Fit,
    Backtest,
    Scenario,
    Allocation,
}

impl RunKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RunKind::Fit => "fit",
            RunKind::Backtest => "backtest",
            RunKind::Scenario => "scenario",
            RunKind::Allocation => "allocation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub kind: RunKind,
    pub inputs_digest: String,
    pub config_digest: String,
    pub created_at: DateTime<Utc>,
    pub status: RunStatus,
    /// File names inside the run directory.
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Digest of the JSON encoding. Struct fields serialize in declaration order
/// and maps are B-trees, so equal values give equal digests.
pub fn digest_json<T: Serialize>(value: &T) -> String {
    digest(&serde_json::to_vec(value).expect("request types serialize"))
}

pub fn run_id(kind: RunKind, inputs_digest: &str, config_digest: &str) -> String {
    digest(format!("{}\n{inputs_digest}\n{config_digest}", kind.as_str()).as_bytes())
}

pub enum Claim {
    /// The caller now owns the run and must finish it.
    Fresh(RunRecord),
    Existing(RunRecord),
}

#[derive(Debug, Clone)]
pub struct RunStore {
    root: PathBuf,
}

fn is_hex_id(id: &str) -> bool {
    id.len() == 64 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    let tmp = path.with_extension("partial");
    let mut f = std::fs::File::create(&tmp).map_err(|e| ServiceError::io("create", e))?;
    f.write_all(bytes).map_err(|e| ServiceError::io("write", e))?;
    f.sync_all().map_err(|e| ServiceError::io("sync", e))?;
    std::fs::rename(&tmp, path).map_err(|e| ServiceError::io("rename", e))
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ServiceError> {
        let root = root.into();
        for sub in ["runs", "datasets"] {
            std::fs::create_dir_all(root.join(sub)).map_err(|e| ServiceError::io("data dir", e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn run_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if !is_hex_id(id) {
            return Err(ServiceError::NotFound(format!("unknown run {id:?}")));
        }
        Ok(self.root.join("runs").join(id))
    }

    pub fn get(&self, id: &str) -> Result<Option<RunRecord>, ServiceError> {
        let path = self.run_dir(id)?.join("run.json");
        match std::fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| ServiceError::Internal(format!("corrupt run record {id}: {e}"))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(ServiceError::io("read run", e)),
        }
    }

    /// Claims `run_id(kind, inputs, config)`, or returns the record already
    /// there.
    pub fn claim(&self, kind: RunKind, inputs_digest: &str, config_digest: &str) -> Result<Claim, ServiceError> {
        let id = run_id(kind, inputs_digest, config_digest);
        let dir = self.run_dir(&id)?;
        match std::fs::create_dir(&dir) {
            Ok(()) => {
                let record = RunRecord {
                    run_id: id,
                    kind,
                    inputs_digest: inputs_digest.into(),
                    config_digest: config_digest.into(),
                    created_at: Utc::now(),
                    status: RunStatus::Running,
                    artifacts: Vec::new(),
                    error: None,
                };
                self.put_record(&record)?;
                Ok(Claim::Fresh(record))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                // The owner may not have written run.json yet.
                for _ in 0..200 {
                    if let Some(r) = self.get(&id)? {
                        return Ok(Claim::Existing(r));
                    }
                    std::thread::sleep(std::time::Duration::from_millis(5));
                }
                Err(ServiceError::Internal(format!("run {id} has no record")))
            }
            Err(e) => Err(ServiceError::io("claim run", e)),
        }
    }

    fn put_record(&self, r: &RunRecord) -> Result<(), ServiceError> {
        let bytes = serde_json::to_vec_pretty(r).expect("records serialize");
        write_atomic(&self.run_dir(&r.run_id)?.join("run.json"), &bytes)
    }

    pub fn write_artifact(&self, record: &mut RunRecord, name: &str, bytes: &[u8]) -> Result<(), ServiceError> {
        write_atomic(&self.run_dir(&record.run_id)?.join(name), bytes)?;
        if !record.artifacts.iter().any(|a| a == name) {
            record.artifacts.push(name.into());
        }
        Ok(())
    }

    /// Records the outcome; the run's artifacts are fixed from here on.
    pub fn finish(&self, record: &mut RunRecord, error: Option<String>) -> Result<(), ServiceError> {
        record.status = if error.is_some() {
            RunStatus::Failed
        } else {
            RunStatus::Done
        };
        record.error = error;
        self.put_record(record)
    }

    pub fn read_artifact(&self, id: &str, name: &str) -> Result<Vec<u8>, ServiceError> {
        let record = self
            .get(id)?
            .ok_or_else(|| ServiceError::NotFound(format!("unknown run {id}")))?;
        if !record.artifacts.iter().any(|a| a == name) {
            return Err(ServiceError::NotFound(format!("run {id} has no artifact {name:?}")));
        }
        std::fs::read(self.run_dir(id)?.join(name)).map_err(|e| ServiceError::io("read artifact", e))
    }

    /// Waits until a run leaves `Running`.
    pub fn wait(&self, id: &str, timeout: std::time::Duration) -> Result<RunRecord, ServiceError> {
        let start = std::time::Instant::now();
        loop {
            let r = self
                .get(id)?
                .ok_or_else(|| ServiceError::NotFound(format!("unknown run {id}")))?;
            if r.status != RunStatus::Running || start.elapsed() > timeout {
                return Ok(r);
            }
            std::thread::sleep(std::time::Duration::from_millis(20));
        }
    }

    pub fn put_dataset(&self, bytes: &[u8]) -> Result<String, ServiceError> {
        let id = digest(bytes);
        let path = self.dataset_path(&id)?;
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(id)
    }

    pub fn dataset_path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        if !is_hex_id(id) {
            return Err(ServiceError::NotFound(format!("unknown dataset {id:?}")));
        }
        Ok(self.root.join("datasets").join(format!("{id}.csv")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn claims_are_exclusive_and_ids_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let id = run_id(RunKind::Fit, "a", "b");
        assert_eq!(id, run_id(RunKind::Fit, "a", "b"));
        assert_ne!(id, run_id(RunKind::Backtest, "a", "b"));
        assert_ne!(id, run_id(RunKind::Fit, "a", "c"));
        let Claim::Fresh(mut r) = store.claim(RunKind::Fit, "a", "b").unwrap() else {
            panic!()
        };
        store.write_artifact(&mut r, "x.json", b"{}").unwrap();
        store.finish(&mut r, None).unwrap();
        let Claim::Existing(again) = store.claim(RunKind::Fit, "a", "b").unwrap() else {
            panic!()
        };
        assert_eq!(again, r);
        assert_eq!(store.read_artifact(&id, "x.json").unwrap(), b"{}");
        assert!(matches!(
            store.read_artifact(&id, "y.json"),
            Err(ServiceError::NotFound(_))
        ));
        assert!(matches!(store.get("../../etc"), Err(ServiceError::NotFound(_))));
    }

    #[test]
    fn datasets_are_content_addressed() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path()).unwrap();
        let a = store.put_dataset(b"x,y\n1,2\n").unwrap();
        assert_eq!(a, store.put_dataset(b"x,y\n1,2\n").unwrap());
        assert_eq!(a, digest(b"x,y\n1,2\n"));
        assert!(store.dataset_path(&a).unwrap().exists());
    }
}
