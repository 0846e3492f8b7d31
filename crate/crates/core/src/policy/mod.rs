//! Policy-driven response curves and counterfactual scenarios.
//!
//! Each fitted region contributes one `(policy in force, γ(t))` observation per
//! day of its fit window. A regression tree on the policy features predicts γ
//! for any policy, and a scenario replaces the fitted arctan response after
//! each counterfactual policy change by a linear ramp towards the predicted
//! value.

mod scenario;
mod tree;

pub use scenario::{simulate_scenario, spliced_gamma, ScenarioOutcome, SplicedGamma, DEFAULT_TRANSITION_DAYS};
pub use tree::{fit_tree_features, leaf_stats, Node, RegressionTree, THRESHOLD};

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fit::FitResult;
use crate::model::gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("unknown policy class {0:?}")]
    UnknownPolicy(String),
    #[error("schedule for {region}: {reason}")]
    InvalidSchedule { region: String, reason: String },
    #[error("CSV row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("no policy record for {region} on {date}")]
    Uncovered { region: String, date: NaiveDate },
    #[error("fit for {0} did not converge")]
    NotConverged(String),
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("no observations")]
    Empty,
}

/// The seven mutually exclusive policy classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    NoMeasure,
    RestrictMassGatherings,
    /// Mass gatherings allowed, other activities restricted.
    RestrictOthers,
    AuthorizeSchoolsRestrictMgAndOthers,
    RestrictMgAndSchools,
    RestrictMgSchoolsAndOthers,
    StayAtHome,
}

/// Feature order used by [`Policy::features`] and the fitted trees.
pub const FEATURE_NAMES: [&str; 4] = [
    "mass_gatherings_restricted",
    "schools_restricted",
    "others_restricted",
    "stay_at_home",
];

impl Policy {
    pub const ALL: [Policy; 7] = [
        Policy::NoMeasure,
        Policy::RestrictMassGatherings,
        Policy::RestrictOthers,
        Policy::AuthorizeSchoolsRestrictMgAndOthers,
        Policy::RestrictMgAndSchools,
        Policy::RestrictMgSchoolsAndOthers,
        Policy::StayAtHome,
    ];

    /// `[mass_gatherings, schools, others, stay_at_home]`.
    pub fn features(self) -> [bool; 4] {
        match self {
            Policy::NoMeasure => [false, false, false, false],
            Policy::RestrictMassGatherings => [true, false, false, false],
            Policy::RestrictOthers => [false, false, true, false],
            Policy::AuthorizeSchoolsRestrictMgAndOthers => [true, false, true, false],
            Policy::RestrictMgAndSchools => [true, true, false, false],
            Policy::RestrictMgSchoolsAndOthers => [true, true, true, false],
            Policy::StayAtHome => [true, true, true, true],
        }
    }

    /// Inverse of [`Policy::features`]; `None` for the nine combinations that
    /// are not a policy class.
    pub fn from_features(f: [bool; 4]) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.features() == f)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::NoMeasure => "no_measure",
            Policy::RestrictMassGatherings => "restrict_mass_gatherings",
            Policy::RestrictOthers => "restrict_others",
            Policy::AuthorizeSchoolsRestrictMgAndOthers => "authorize_schools_restrict_mg_and_others",
            Policy::RestrictMgAndSchools => "restrict_mg_and_schools",
            Policy::RestrictMgSchoolsAndOthers => "restrict_mg_schools_and_others",
            Policy::StayAtHome => "stay_at_home",
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Policy {
    type Err = PolicyError;
    /// Accepts the snake-case names and their CamelCase spellings.
    fn from_str(s: &str) -> Result<Self, PolicyError> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str().replace('_', "") == key)
            .ok_or_else(|| PolicyError::UnknownPolicy(s.to_string()))
    }
}

/// Dated policy changes for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySchedule {
    pub region_id: String,
    pub entries: Vec<(NaiveDate, Policy)>,
}

impl PolicySchedule {
    pub fn new(region_id: impl Into<String>, entries: Vec<(NaiveDate, Policy)>) -> Result<Self, PolicyError> {
        let s = Self {
            region_id: region_id.into(),
            entries,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let fail = |reason: String| PolicyError::InvalidSchedule {
            region: self.region_id.clone(),
            reason,
        };
        if self.entries.is_empty() {
            return Err(fail("no entries".into()));
        }
        if let Some(w) = self.entries.windows(2).find(|w| w[1].0 <= w[0].0) {
            return Err(fail(format!("dates not increasing at {}", w[1].0)));
        }
        Ok(())
    }

    /// Policy in force on `date`: the latest entry dated on or before it.
    pub fn policy_on(&self, date: NaiveDate) -> Option<Policy> {
        self.entries
            .iter()
            .take_while(|(d, _)| *d <= date)
            .last()
            .map(|(_, p)| *p)
    }
}

/// Reads `region_id,effective_date,policy_class` rows into one schedule per
/// region. Rows may come in any order.
pub fn read_policy_log_csv<R: Read>(reader: R) -> Result<BTreeMap<String, PolicySchedule>, PolicyError> {
    #[derive(Deserialize)]
    struct Row {
        region_id: String,
        effective_date: NaiveDate,
        policy_class: String,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut by_region: BTreeMap<String, Vec<(NaiveDate, Policy)>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| PolicyError::Csv {
            row: line,
            message: e.to_string(),
        })?;
        let policy = row.policy_class.parse().map_err(|e: PolicyError| PolicyError::Csv {
            row: line,
            message: e.to_string(),
        })?;
        by_region
            .entry(row.region_id)
            .or_default()
            .push((row.effective_date, policy));
    }
    by_region
        .into_iter()
        .map(|(region, mut entries)| {
            entries.sort_by_key(|(d, _)| *d);
            let s = PolicySchedule::new(region.clone(), entries)?;
            Ok((region, s))
        })
        .collect()
}

pub fn write_policy_log_csv<W: std::io::Write>(w: W, schedules: &[PolicySchedule]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["region_id", "effective_date", "policy_class"])?;
    for s in schedules {
        for (d, p) in &s.entries {
            wtr.write_record([s.region_id.as_str(), &d.to_string(), p.as_str()])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaObservation {
    pub region_id: String,
    pub date: NaiveDate,
    pub policy: Policy,
    pub gamma_value: f64,
}

/// One observation per region per day of its fit window, with γ evaluated
/// from the region's fitted `(t0, k)`.
pub fn build_observations(
    fits: &[FitResult],
    policy_log: &BTreeMap<String, PolicySchedule>,
) -> Result<Vec<GammaObservation>, PolicyError> {
    let mut out = Vec::new();
    for fit in fits {
        if !fit.converged {
            return Err(PolicyError::NotConverged(fit.region_id.clone()));
        }
        let schedule = policy_log.get(&fit.region_id);
        let (start, end) = fit.fit_window;
        let p = &fit.params.fitted;
        for date in start.iter_days().take_while(|d| *d <= end) {
            let policy = schedule
                .and_then(|s| s.policy_on(date))
                .ok_or_else(|| PolicyError::Uncovered {
                    region: fit.region_id.clone(),
                    date,
                })?;
            let t = (date - fit.params.start_date).num_days() as f64;
            let gamma_value = gamma(t, p.t0, p.k).map_err(|e| PolicyError::Scenario(e.to_string()))?;
            out.push(GammaObservation {
                region_id: fit.region_id.clone(),
                date,
                policy,
                gamma_value,
            });
        }
    }
    Ok(out)
}

/// Fits a tree on the four policy features.
pub fn fit_tree(obs: &[GammaObservation], max_depth: usize, min_leaf: usize) -> Result<RegressionTree, PolicyError> {
    if obs.is_empty() {
        return Err(PolicyError::Empty);
    }
    let x: Vec<Vec<bool>> = obs.iter().map(|o| o.policy.features().to_vec()).collect();
    let y: Vec<f64> = obs.iter().map(|o| o.gamma_value).collect();
    Ok(fit_tree_features(
        &x,
        &y,
        max_depth,
        min_leaf.max(1),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    ))
}

pub fn predict_gamma(tree: &RegressionTree, policy: Policy) -> f64 {
    tree.predict(&policy.features())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoroReport {
    /// Pooled out-of-sample R² over every held-out observation.
    pub r2: f64,
    pub n_regions: usize,
    pub n_observations: usize,
}

/// Leave-one-region-out R²: each region's observations are predicted by a
/// tree trained on all other regions. `None` with fewer than two regions or a
/// constant target.
pub fn leave_one_region_out(obs: &[GammaObservation], max_depth: usize, min_leaf: usize) -> Option<LoroReport> {
    let regions: Vec<&str> = {
        let mut r: Vec<&str> = obs.iter().map(|o| o.region_id.as_str()).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    if regions.len() < 2 {
        return None;
    }
    let mut sse = 0.0;
    for region in &regions {
        let train: Vec<GammaObservation> = obs.iter().filter(|o| o.region_id != *region).cloned().collect();
        let tree = fit_tree(&train, max_depth, min_leaf).ok()?;
        sse += obs
            .iter()
            .filter(|o| o.region_id == *region)
            .map(|o| (predict_gamma(&tree, o.policy) - o.gamma_value).powi(2))
            .sum::<f64>();
    }
    let mean = obs.iter().map(|o| o.gamma_value).sum::<f64>() / obs.len() as f64;
    let sst: f64 = obs.iter().map(|o| (o.gamma_value - mean).powi(2)).sum();
    (sst > 0.0).then(|| LoroReport {
        r2: 1.0 - sse / sst,
        n_regions: regions.len(),
        n_observations: obs.len(),
    })
}
