use serde::{Deserialize, Serialize};

use super::{DeathSeries, RegionSeries};
use crate::model::{initial_state, integrate, DelphiParams, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub cases: f64,
    pub deaths: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cases: 1.0,
            deaths: 3.0,
        }
    }
}

/// Weighted squared log errors, split by series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// `w_cases * Σ (ln(1 + model) - ln(1 + data))²` over cases.
    pub cases_term: f64,
    pub deaths_term: f64,
    pub total: f64,
}

impl LossReport {
    pub const FAILED: LossReport = LossReport {
        cases_term: f64::INFINITY,
        deaths_term: f64::INFINITY,
        total: f64::INFINITY,
    };
}

/// Integrates `p` from the series' first observation to its last and compares
/// on the `ln(1 + x)` scale. An integration failure yields an infinite loss.
pub fn loss(
    p: &DelphiParams,
    series: &RegionSeries,
    weights: LossWeights,
    step: f64,
    deaths: DeathSeries,
) -> LossReport {
    let Some(traj) = simulate_series(p, series, step, series.end_date()) else {
        return LossReport::FAILED;
    };
    let mut cases_sse = 0.0;
    let mut deaths_sse = 0.0;
    for (i, t) in series.offsets().into_iter().enumerate() {
        let Some(x) = traj.state_at(t) else {
            return LossReport::FAILED;
        };
        let model_deaths = match deaths {
            DeathSeries::Detected => x.deaths_detected,
            DeathSeries::All => x.d,
        };
        cases_sse += sq_log_err(x.cases_detected, series.cumulative_cases[i]);
        deaths_sse += sq_log_err(model_deaths, series.cumulative_deaths[i]);
    }
    let cases_term = weights.cases * cases_sse;
    let deaths_term = weights.deaths * deaths_sse;
    LossReport {
        cases_term,
        deaths_term,
        total: cases_term + deaths_term,
    }
}

fn sq_log_err(model: f64, data: f64) -> f64 {
    let e = model.ln_1p() - data.ln_1p();
    e * e
}

/// Trajectory seeded from the series' first observation, covering
/// `[start, until]` rounded up to whole steps.
pub fn simulate_series(
    p: &DelphiParams,
    series: &RegionSeries,
    step: f64,
    until: chrono::NaiveDate,
) -> Option<Trajectory> {
    let x0 = initial_state(p, series.cumulative_cases[0], series.cumulative_deaths[0]);
    let days = (until - series.start_date()).num_days() as f64;
    let horizon = ((days / step).ceil().max(1.0)) * step;
    integrate(p, &x0, horizon, step).ok()
}
