//! Cohort-level clinical outcomes database.
//!
//! One row per published patient cohort. Columns come from a versioned
//! [`Manifest`]; a blank cell means the study did not report that quantity and
//! is kept as absent, never read as zero.

mod aggregate;
mod calibration;
mod manifest;
mod parse;

pub use aggregate::{
    aggregate_lab, aggregate_prevalence, projected_mortality, summary_table, write_stats_csv, AggregateStat, LabStat,
    Subpopulation, PROJECTED_MORTALITY, SUPPRESSION_THRESHOLD,
};
pub use calibration::{extract_calibration, CalibratedValue, CalibrationBundle, CalibrationDefaults, Provenance};
pub use manifest::{AttributeKind, AttributeSpec, LabSpec, Manifest, BUILTIN_MANIFEST, FIXED_COLUMNS};
pub use parse::{parse_cohort_csv, parse_cohort_file};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CohortError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("header: missing columns {missing:?}, unexpected columns {unexpected:?}")]
    Header {
        missing: Vec<String>,
        unexpected: Vec<String>,
    },
    #[error("row {row}: {message}")]
    Malformed { row: usize, message: String },
    #[error("row {row}: violates {invariant} ({detail})")]
    Invariant {
        row: usize,
        invariant: &'static str,
        detail: String,
    },
    #[error("row {row}: lab {lab} reported in {found}, earlier rows use {expected}")]
    MixedUnits {
        row: usize,
        lab: String,
        expected: String,
        found: String,
    },
    #[error("{0} is not in the manifest")]
    UnknownAttribute(String),
    #[error("no cohort reports a length of stay")]
    NoLengthOfStay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Asia,
    Europe,
    NorthAmerica,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Mild,
    Severe,
    Unspecified,
}

impl Region {
    pub const ALL: [Region; 4] = [Region::Asia, Region::Europe, Region::NorthAmerica, Region::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Region::Asia => "asia",
            Region::Europe => "europe",
            Region::NorthAmerica => "north_america",
            Region::Other => "other",
        }
    }
}

impl Severity {
    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Mild => "mild",
            Severity::Severe => "severe",
            Severity::Unspecified => "unspecified",
        }
    }
}

fn normalize(s: &str) -> String {
    s.trim()
        .chars()
        .filter(|c| !matches!(c, ' ' | '_' | '-'))
        .flat_map(char::to_lowercase)
        .collect()
}

impl FromStr for Region {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match normalize(s).as_str() {
            "asia" => Ok(Region::Asia),
            "europe" => Ok(Region::Europe),
            "northamerica" => Ok(Region::NorthAmerica),
            "other" => Ok(Region::Other),
            _ => Err(format!("unknown region {s:?}")),
        }
    }
}

impl FromStr for Severity {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match normalize(s).as_str() {
            "mild" => Ok(Severity::Mild),
            "severe" => Ok(Severity::Severe),
            "unspecified" => Ok(Severity::Unspecified),
            _ => Err(format!("unknown severity {s:?}")),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Patients reporting on a yes/no attribute, and how many of them had it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeCount {
    pub n_reporting: u64,
    pub n_positive: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabValue {
    pub n_reporting: u64,
    pub mean_value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRecord {
    pub study_id: String,
    pub region: Region,
    pub severity: Severity,
    pub n_patients: u64,
    /// Only attributes the study reported.
    pub attributes: BTreeMap<String, AttributeCount>,
    pub labs: BTreeMap<String, LabValue>,
    pub n_discharged: Option<u64>,
    pub n_deceased: Option<u64>,
    pub mean_los_days: Option<f64>,
    pub n_ventilated: Option<u64>,
}

impl CohortRecord {
    /// Discharged plus deceased, when both are reported.
    pub fn resolved(&self) -> Option<u64> {
        Some(self.n_discharged? + self.n_deceased?)
    }
}

/// Parsed records together with the manifest they were read against.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDb {
    pub manifest: Manifest,
    pub records: Vec<CohortRecord>,
}

impl CohortDb {
    pub fn prevalence(&self, attribute: &str, filter: Subpopulation) -> Result<AggregateStat, CohortError> {
        if !self.manifest.has_attribute(attribute) {
            return Err(CohortError::UnknownAttribute(attribute.to_string()));
        }
        Ok(aggregate_prevalence(&self.records, attribute, filter))
    }

    pub fn lab(&self, lab: &str, filter: Subpopulation) -> Result<LabStat, CohortError> {
        if !self.manifest.has_lab(lab) {
            return Err(CohortError::UnknownAttribute(lab.to_string()));
        }
        Ok(aggregate_lab(&self.records, lab, filter))
    }

    pub fn mortality(&self, filter: Subpopulation) -> AggregateStat {
        projected_mortality(&self.records, filter)
    }

    /// Every attribute for every subpopulation, then projected mortality.
    pub fn summary(&self, filters: &[Subpopulation]) -> Vec<AggregateStat> {
        summary_table(&self.records, &self.manifest, filters)
    }
}
