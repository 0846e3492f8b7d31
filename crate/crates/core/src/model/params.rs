use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ModelError;

pub const FITTED_PARAM_NAMES: [&str; 7] = ["alpha", "t0", "k", "p_d", "p_h", "m", "k_i"];

/// The seven parameters estimated per region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedParams {
    /// Baseline infection rate (1/day).
    pub alpha: f64,
    /// Day (since the region's start date) at which the response starts.
    pub t0: f64,
    /// Response strength (days).
    pub k: f64,
    /// Probability that an infection is detected.
    pub p_d: f64,
    /// Probability that a detected case is hospitalized.
    pub p_h: f64,
    /// Probability that a case ends in death.
    pub m: f64,
    /// Initial infectious population as a multiple of observed cases.
    pub k_i: f64,
}

impl FittedParams {
    pub fn to_array(&self) -> [f64; 7] {
        [self.alpha, self.t0, self.k, self.p_d, self.p_h, self.m, self.k_i]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        Self {
            alpha: v[0],
            t0: v[1],
            k: v[2],
            p_d: v[3],
            p_h: v[4],
            m: v[5],
            k_i: v[6],
        }
    }
}

/// The six clinical transition rates calibrated from the cohort database.
/// All rates are per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClinicalRates {
    /// E → I.
    pub sigma: f64,
    /// I → the six post-infectious branches.
    pub r_i: f64,
    /// Recovery outside hospital (U_R, DQ_R → R).
    pub r_r: f64,
    /// Death outside hospital (U_D, DQ_D → D).
    pub r_d: f64,
    /// Recovery in hospital (DH_R → R).
    pub r_rh: f64,
    /// Death in hospital (DH_D → D).
    pub r_dh: f64,
}

impl ClinicalRates {
    pub fn to_array(&self) -> [f64; 6] {
        [self.sigma, self.r_i, self.r_r, self.r_d, self.r_rh, self.r_dh]
    }
}

impl Default for ClinicalRates {
    /// Incubation 5 days, 2 days infectious before the branch, 10 days to
    /// recover and 20 days to die outside hospital, 11 days in hospital.
    fn default() -> Self {
        Self {
            sigma: 1.0 / 5.0,
            r_i: 1.0 / 2.0,
            r_r: 1.0 / 10.0,
            r_d: 1.0 / 20.0,
            r_rh: 1.0 / 11.0,
            r_dh: 1.0 / 11.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelphiParams {
    pub fitted: FittedParams,
    pub rates: ClinicalRates,
    /// Total population (persons).
    pub population: f64,
    /// Date of day 0: the first day the region recorded more than 100 cases.
    pub start_date: NaiveDate,
}

impl DelphiParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let f = &self.fitted;
        positive("alpha", f.alpha, true)?;
        positive("k", f.k, false)?;
        positive("k_i", f.k_i, false)?;
        finite("t0", f.t0)?;
        probability("p_d", f.p_d)?;
        probability("p_h", f.p_h)?;
        probability("m", f.m)?;
        let r = &self.rates;
        positive("sigma", r.sigma, false)?;
        positive("r_i", r.r_i, false)?;
        positive("r_r", r.r_r, false)?;
        positive("r_d", r.r_d, false)?;
        positive("r_rh", r.r_rh, false)?;
        positive("r_dh", r.r_dh, false)?;
        positive("population", self.population, false)?;
        Ok(())
    }

    /// Probabilities of the six branches out of `I`, in the order
    /// `U_R, U_D, DH_R, DH_D, DQ_R, DQ_D`.
    pub fn branch_probabilities(&self) -> [f64; 6] {
        let FittedParams { p_d, p_h, m, .. } = self.fitted;
        [
            (1.0 - p_d) * (1.0 - m),
            (1.0 - p_d) * m,
            p_d * p_h * (1.0 - m),
            p_d * p_h * m,
            p_d * (1.0 - p_h) * (1.0 - m),
            p_d * (1.0 - p_h) * m,
        ]
    }
}

fn finite(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be finite, got {v}"),
        })
    }
}

// alpha = 0 is allowed: it switches transmission off.
fn positive(name: &'static str, v: f64, allow_zero: bool) -> Result<(), ModelError> {
    finite(name, v)?;
    if v > 0.0 || (allow_zero && v == 0.0) {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must be positive, got {v}"),
        })
    }
}

fn probability(name: &'static str, v: f64) -> Result<(), ModelError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter {
            name,
            reason: format!("must lie in [0, 1], got {v}"),
        })
    }
}
