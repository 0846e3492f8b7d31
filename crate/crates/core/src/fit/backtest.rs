use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, simulate_series, DeathSeries, FitConfig, FitError, FitResult, RegionSeries};
use crate::model::ClinicalRates;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub region_id: String,
    pub cutoff: NaiveDate,
    pub horizon_end: NaiveDate,
    /// Percent.
    pub mape_cases: f64,
    /// Percent; `None` when no evaluation day had a nonzero death count.
    pub mape_deaths: Option<f64>,
    pub evaluated_days: usize,
    pub fit: FitResult,
}

/// Mean absolute percentage error in percent, skipping zero actuals.
/// `None` if nothing is left to average.
pub fn mape(predicted: &[f64], actual: &[f64]) -> Option<f64> {
    assert_eq!(predicted.len(), actual.len());
    let (sum, n) = predicted
        .iter()
        .zip(actual)
        .filter(|(_, a)| **a != 0.0)
        .fold((0.0, 0usize), |(s, n), (p, a)| (s + ((p - a) / a).abs(), n + 1));
    (n > 0).then(|| 100.0 * sum / n as f64)
}

/// Fits on observations up to `cutoff`, projects to `horizon_end`, and scores
/// the projection on the days in `(cutoff, horizon_end]`.
///
/// The fit only ever sees a truncated copy of the series.
pub fn backtest(
    series: &RegionSeries,
    rates: &ClinicalRates,
    cutoff: NaiveDate,
    horizon_end: NaiveDate,
    config: &FitConfig,
) -> Result<BacktestResult, FitError> {
    let fail = |reason: String| FitError::Backtest {
        region: series.region_id.clone(),
        reason,
    };
    if cutoff >= horizon_end {
        return Err(fail(format!("cutoff {cutoff} is not before {horizon_end}")));
    }
    if horizon_end > series.end_date() || cutoff < series.start_date() {
        return Err(fail(format!(
            "window {cutoff}..{horizon_end} is outside the series {}..{}",
            series.start_date(),
            series.end_date()
        )));
    }
    let training = series
        .truncated_through(cutoff)
        .ok_or_else(|| fail("no observations before the cutoff".into()))?;
    let fitted = fit(&training, rates, config)?;
    score(series, &fitted, cutoff, horizon_end, config.step, config.deaths)
}

fn score(
    series: &RegionSeries,
    fitted: &FitResult,
    cutoff: NaiveDate,
    horizon_end: NaiveDate,
    step: f64,
    deaths: DeathSeries,
) -> Result<BacktestResult, FitError> {
    let fail = |reason: String| FitError::Backtest {
        region: series.region_id.clone(),
        reason,
    };
    // Seeded from the training series' first point, which is also the full
    // series' first point.
    let traj = simulate_series(&fitted.params, series, step, horizon_end)
        .ok_or_else(|| fail("projection failed to integrate".into()))?;
    let start = series.start_date();
    let mut pred_c = Vec::new();
    let mut act_c = Vec::new();
    let mut pred_d = Vec::new();
    let mut act_d = Vec::new();
    for (i, date) in series.dates.iter().enumerate() {
        if *date <= cutoff || *date > horizon_end {
            continue;
        }
        let x = traj
            .state_at((*date - start).num_days() as f64)
            .ok_or_else(|| fail(format!("no projection for {date}")))?;
        pred_c.push(x.cases_detected);
        act_c.push(series.cumulative_cases[i]);
        pred_d.push(match deaths {
            DeathSeries::Detected => x.deaths_detected,
            DeathSeries::All => x.d,
        });
        act_d.push(series.cumulative_deaths[i]);
    }
    if act_c.is_empty() {
        return Err(fail("empty evaluation window".into()));
    }
    let mape_cases = mape(&pred_c, &act_c).ok_or_else(|| fail("no nonzero case counts to score".into()))?;
    Ok(BacktestResult {
        region_id: series.region_id.clone(),
        cutoff,
        horizon_end,
        mape_cases,
        mape_deaths: mape(&pred_d, &act_d),
        evaluated_days: act_c.len(),
        fit: fitted.clone(),
    })
}

/// One line of a per-region MAPE table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRow {
    pub region_id: String,
    pub mape_cases: Option<f64>,
    pub mape_deaths: Option<f64>,
    pub error: Option<String>,
}

/// Backtests every region in parallel. Rows are in input order; regions that
/// never reach the inclusion threshold before the cutoff carry an error.
pub fn backtest_regions(
    series: &[RegionSeries],
    rates: &ClinicalRates,
    cutoff: NaiveDate,
    horizon_end: NaiveDate,
    config: &FitConfig,
) -> Vec<BacktestRow> {
    series
        .par_iter()
        .map(|s| {
            let outcome = s
                .included()
                .ok_or_else(|| FitError::InclusionRule {
                    region: s.region_id.clone(),
                })
                .and_then(|inc| backtest(&inc, rates, cutoff, horizon_end, config));
            match outcome {
                Ok(r) => BacktestRow {
                    region_id: r.region_id,
                    mape_cases: Some(r.mape_cases),
                    mape_deaths: r.mape_deaths,
                    error: None,
                },
                Err(e) => BacktestRow {
                    region_id: s.region_id.clone(),
                    mape_cases: None,
                    mape_deaths: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}
