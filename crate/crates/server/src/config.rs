use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

/// Service settings: a TOML file, then `EPIOPS_*` environment overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    pub port: u16,
    /// Run records, artifacts and uploaded datasets live here.
    pub data_dir: PathBuf,
    /// Cohort database loaded at startup for the aggregates endpoint and the
    /// clinical rates.
    pub cohort_csv: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// `region_id,effective_date,policy_class`, used to fit the policy tree.
    pub policy_log_csv: Option<PathBuf>,
    /// Built UI bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("data"),
            cohort_csv: None,
            manifest: None,
            policy_log_csv: None,
            static_dir: None,
        }
    }
}

pub const ENV_VARS: [&str; 7] = [
    "EPIOPS_BIND",
    "EPIOPS_PORT",
    "EPIOPS_DATA_DIR",
    "EPIOPS_COHORT_CSV",
    "EPIOPS_MANIFEST",
    "EPIOPS_POLICY_LOG_CSV",
    "EPIOPS_STATIC_DIR",
];

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::bad(format!("config: {e}")))
    }

    /// Reads `path` (defaults when `None`) and applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::bad(format!("config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        c.apply_env(|k| std::env::var(k).ok())?;
        Ok(c)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        let path = |k: &str| var(k).filter(|v| !v.is_empty()).map(PathBuf::from);
        if let Some(v) = var("EPIOPS_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("EPIOPS_PORT") {
            self.port = v
                .parse()
                .map_err(|_| ServiceError::bad(format!("EPIOPS_PORT: not a port number: {v:?}")))?;
        }
        if let Some(v) = path("EPIOPS_DATA_DIR") {
            self.data_dir = v;
        }
        for (key, slot) in [
            ("EPIOPS_COHORT_CSV", &mut self.cohort_csv),
            ("EPIOPS_MANIFEST", &mut self.manifest),
            ("EPIOPS_POLICY_LOG_CSV", &mut self.policy_log_csv),
            ("EPIOPS_STATIC_DIR", &mut self.static_dir),
        ] {
            if let Some(v) = path(key) {
                *slot = Some(v);
            }
        }
        Ok(())
    }
}
