use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CohortError;

/// The manifest shipped with the crate.
pub const BUILTIN_MANIFEST: &str = include_str!("../../data/manifest_v1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Symptom,
    Comorbidity,
    Treatment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabSpec {
    pub name: String,
}

/// Versioned list of count attributes and labs that a cohort CSV carries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub labs: Vec<LabSpec>,
}

/// Per-cohort columns present in every version.
pub const FIXED_COLUMNS: [&str; 8] = [
    "study_id",
    "region",
    "severity",
    "n_patients",
    "n_discharged",
    "n_deceased",
    "mean_los_days",
    "n_ventilated",
];

impl Manifest {
    pub fn builtin() -> Self {
        Self::from_toml(BUILTIN_MANIFEST).expect("shipped manifest parses")
    }

    pub fn from_toml(text: &str) -> Result<Self, CohortError> {
        let m: Manifest = toml::from_str(text).map_err(|e| CohortError::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn from_file(path: &Path) -> Result<Self, CohortError> {
        let text = std::fs::read_to_string(path).map_err(|e| CohortError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text)
    }

    fn validate(&self) -> Result<(), CohortError> {
        let mut seen = BTreeSet::new();
        let names = self
            .attributes
            .iter()
            .map(|a| &a.name)
            .chain(self.labs.iter().map(|l| &l.name));
        for name in names {
            let ok = !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
            if !ok {
                return Err(CohortError::Manifest(format!("bad column stem {name:?}")));
            }
            if !seen.insert(name.as_str()) {
                return Err(CohortError::Manifest(format!("{name} declared twice")));
            }
        }
        Ok(())
    }

    pub fn has_attribute(&self, name: &str) -> bool {
        self.attributes.iter().any(|a| a.name == name)
    }

    pub fn has_lab(&self, name: &str) -> bool {
        self.labs.iter().any(|l| l.name == name)
    }

    /// Every column the CSV header must contain, in canonical order.
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|c| c.to_string()).collect();
        for a in &self.attributes {
            cols.push(format!("{}_n_reporting", a.name));
            cols.push(format!("{}_n_positive", a.name));
        }
        for l in &self.labs {
            cols.push(format!("{}_n_reporting", l.name));
            cols.push(format!("{}_mean", l.name));
            cols.push(format!("{}_unit", l.name));
        }
        cols
    }
}
