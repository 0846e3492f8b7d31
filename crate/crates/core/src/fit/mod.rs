//! Per-region parameter estimation and out-of-sample backtesting.
//!
//! The seven fitted parameters are searched in an unconstrained space: each
//! coordinate `u` maps into its box through a logistic, on a log scale for
//! rates and on a linear scale for the response start and the probabilities.
//! Nelder-Mead runs from a Halton set of starting points and the best terminal
//! point is then polished with fresh simplices and coordinate-kick restarts.

mod backtest;
mod loss;
mod nelder_mead;
mod series;

pub use backtest::{backtest, backtest_regions, mape, median, BacktestResult, BacktestRow};
pub use loss::{loss, simulate_series, LossReport, LossWeights};
pub use nelder_mead::{halton_points, minimize, Minimum, NelderMeadOptions};
pub use series::{
    read_populations_csv, read_series_csv, read_series_file, write_series_csv, RegionSeries, INCLUSION_THRESHOLD,
};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ClinicalRates, DelphiParams, FittedParams, FITTED_PARAM_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("series {region}: {reason}")]
    InvalidSeries { region: String, reason: String },
    #[error("series {region} does not start above 100 cases")]
    InclusionRule { region: String },
    #[error("CSV row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error("every restart failed for {region}")]
    AllRestartsFailed {
        region: String,
        restarts: Vec<RestartDiagnostics>,
    },
    #[error("backtest for {region}: {reason}")]
    Backtest { region: String, reason: String },
}

/// Which model series is compared against reported deaths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeathSeries {
    /// Deaths among detected cases only.
    #[default]
    Detected,
    /// The full `D` compartment, undetected deaths included.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
    pub scale: Scale,
}

impl Bound {
    pub const fn linear(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            scale: Scale::Linear,
        }
    }

    pub const fn log(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            scale: Scale::Log,
        }
    }

    /// Unconstrained coordinate → box.
    pub fn to_box(&self, u: f64) -> f64 {
        let s = logistic(u);
        match self.scale {
            Scale::Linear => self.lo + (self.hi - self.lo) * s,
            Scale::Log => (self.lo.ln() + (self.hi.ln() - self.lo.ln()) * s).exp(),
        }
    }

    /// Fraction of the way across the box, in the box's own scale.
    pub fn fraction(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => (x - self.lo) / (self.hi - self.lo),
            Scale::Log => (x.ln() - self.lo.ln()) / (self.hi.ln() - self.lo.ln()),
        }
    }

    /// Box → unconstrained coordinate; `x` must be strictly inside.
    pub fn to_unconstrained(&self, x: f64) -> f64 {
        let s = self.fraction(x);
        (s / (1.0 - s)).ln()
    }

    fn validate(&self, name: &str) -> Result<(), FitError> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.lo < self.hi
            && (self.scale == Scale::Linear || self.lo > 0.0);
        if ok {
            Ok(())
        } else {
            Err(FitError::InvalidConfig(format!("bad bounds for {name}: {self:?}")))
        }
    }
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Box bounds for the seven fitted parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBounds {
    pub alpha: Bound,
    pub t0: Bound,
    pub k: Bound,
    pub p_d: Bound,
    pub p_h: Bound,
    pub m: Bound,
    pub k_i: Bound,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            alpha: Bound::log(0.1, 3.0),
            t0: Bound::linear(-20.0, 150.0),
            k: Bound::log(1.0, 150.0),
            p_d: Bound::linear(0.01, 0.95),
            p_h: Bound::linear(0.01, 0.95),
            m: Bound::linear(0.001, 0.3),
            k_i: Bound::log(0.1, 50.0),
        }
    }
}

impl ParamBounds {
    pub fn as_array(&self) -> [Bound; 7] {
        [self.alpha, self.t0, self.k, self.p_d, self.p_h, self.m, self.k_i]
    }

    pub fn to_params(&self, u: &[f64]) -> FittedParams {
        let b = self.as_array();
        FittedParams::from_array(std::array::from_fn(|i| b[i].to_box(u[i])))
    }

    pub fn to_unconstrained(&self, p: &FittedParams) -> [f64; 7] {
        let b = self.as_array();
        let x = p.to_array();
        std::array::from_fn(|i| b[i].to_unconstrained(x[i]))
    }

    fn validate(&self) -> Result<(), FitError> {
        for (b, name) in self.as_array().iter().zip(FITTED_PARAM_NAMES) {
            b.validate(name)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub bounds: ParamBounds,
    pub weights: LossWeights,
    /// Number of Halton starting points (at least 20).
    pub n_starts: usize,
    pub max_evals_per_start: usize,
    /// Fresh-simplex restarts from the incumbent after the multi-start phase.
    pub polish_rounds: usize,
    /// Displacement (unconstrained units) for the coordinate-kick restarts;
    /// zero disables them.
    pub kick: f64,
    pub kick_evals: usize,
    pub seed: u64,
    /// Integration step in days.
    pub step: f64,
    pub deaths: DeathSeries,
    /// Fraction of the box within which a parameter is flagged as at-bound.
    pub at_bound_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            bounds: ParamBounds::default(),
            weights: LossWeights::default(),
            n_starts: 20,
            max_evals_per_start: 2500,
            polish_rounds: 2,
            kick: 0.5,
            kick_evals: 1500,
            seed: 0,
            step: 0.5,
            deaths: DeathSeries::Detected,
            at_bound_tolerance: 1e-4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        self.bounds.validate()?;
        if self.n_starts < 20 {
            return Err(FitError::InvalidConfig(format!(
                "n_starts must be at least 20, got {}",
                self.n_starts
            )));
        }
        if !(self.weights.cases > 0.0 && self.weights.deaths > 0.0) {
            return Err(FitError::InvalidConfig("loss weights must be positive".into()));
        }
        if !(self.step > 0.0) || (1.0 / self.step).fract() != 0.0 {
            return Err(FitError::InvalidConfig(format!(
                "step must divide one day evenly, got {}",
                self.step
            )));
        }
        if !(self.kick >= 0.0 && self.kick.is_finite()) {
            return Err(FitError::InvalidConfig("kick must be finite and nonnegative".into()));
        }
        if self.max_evals_per_start == 0 {
            return Err(FitError::InvalidConfig("max_evals_per_start must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartDiagnostics {
    /// Index into the Halton start set.
    pub start: usize,
    pub loss: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub region_id: String,
    pub params: DelphiParams,
    pub in_sample_loss: f64,
    pub loss_report: LossReport,
    pub converged: bool,
    pub n_restarts_used: usize,
    pub fit_window: (NaiveDate, NaiveDate),
    /// Names of parameters that ended within tolerance of a box edge.
    pub at_bound: Vec<String>,
    pub restarts: Vec<RestartDiagnostics>,
}

/// Fits the seven regional parameters to `series`.
///
/// Deterministic: the same series, rates and configuration give a
/// bit-identical result.
pub fn fit(series: &RegionSeries, rates: &ClinicalRates, config: &FitConfig) -> Result<FitResult, FitError> {
    config.validate()?;
    if !series.meets_inclusion_rule() {
        return Err(FitError::InclusionRule {
            region: series.region_id.clone(),
        });
    }
    let bounds = config.bounds;
    let template = DelphiParams {
        fitted: bounds.to_params(&[0.0; 7]),
        rates: *rates,
        population: series.population,
        start_date: series.start_date(),
    };
    template
        .validate()
        .map_err(|e| FitError::InvalidConfig(e.to_string()))?;

    let objective = |u: &[f64]| {
        let mut p = template.clone();
        p.fitted = bounds.to_params(u);
        loss(&p, series, config.weights, config.step, config.deaths).total
    };

    let opts = NelderMeadOptions {
        max_evals: config.max_evals_per_start,
        initial_step: 0.6,
        ..Default::default()
    };
    let starts = halton_points(config.n_starts, 7, config.seed);
    let mut restarts = Vec::with_capacity(starts.len());
    let mut best: Option<Minimum> = None;
    for (i, h) in starts.iter().enumerate() {
        let u0: Vec<f64> = h.iter().map(|s| (s / (1.0 - s)).ln()).collect();
        let m = minimize(objective, &u0, &opts);
        restarts.push(RestartDiagnostics {
            start: i,
            loss: m.value,
            evals: m.evals,
            converged: m.converged,
        });
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let mut best = best.expect("at least twenty starts");
    if !best.value.is_finite() {
        return Err(FitError::AllRestartsFailed {
            region: series.region_id.clone(),
            restarts,
        });
    }

    let mut polish_step = 0.3;
    for _ in 0..config.polish_rounds {
        let m = minimize(
            objective,
            &best.x,
            &NelderMeadOptions {
                initial_step: polish_step,
                ..opts
            },
        );
        let improved = m.value < best.value;
        let done = m.converged && (!improved || best.value - m.value <= 1e-12 * (1.0 + best.value));
        if improved {
            best = m;
        } else {
            best.converged = m.converged;
        }
        if done {
            break;
        }
        polish_step *= 0.5;
    }

    // Coordinate kicks: restart from the incumbent displaced by +-kick along
    // each axis, and sweep again whenever one of them lands in a lower basin.
    // This is what escapes the shallow minima along the p_d / k_i ridge.
    if config.kick > 0.0 {
        let kick_opts = NelderMeadOptions {
            initial_step: 0.3,
            max_evals: config.kick_evals,
            ..opts
        };
        let mut improved = true;
        while improved {
            improved = false;
            for i in 0..7 {
                for sign in [-1.0, 1.0] {
                    let mut x = best.x.clone();
                    x[i] += sign * config.kick;
                    let m = minimize(objective, &x, &kick_opts);
                    if m.value < best.value - 1e-10 * (1.0 + best.value) {
                        best = m;
                        improved = true;
                    }
                }
            }
        }
    }

    // Kicked runs stop on a smaller budget and polishing may run out of
    // evaluations; settle the winner with a small fresh simplex.
    for _ in 0..3 {
        let m = minimize(
            objective,
            &best.x,
            &NelderMeadOptions {
                initial_step: 0.05,
                ..opts
            },
        );
        let converged = m.converged;
        if m.value <= best.value {
            best = m;
        }
        best.converged = converged;
        if converged {
            break;
        }
    }

    let fitted = bounds.to_params(&best.x);
    let values = fitted.to_array();
    let at_bound = bounds
        .as_array()
        .iter()
        .zip(values)
        .zip(FITTED_PARAM_NAMES)
        .filter(|((b, x), _)| {
            let f = b.fraction(*x);
            f <= config.at_bound_tolerance || f >= 1.0 - config.at_bound_tolerance
        })
        .map(|(_, name)| name.to_string())
        .collect();

    let mut params = template;
    params.fitted = fitted;
    let loss_report = loss(&params, series, config.weights, config.step, config.deaths);
    Ok(FitResult {
        region_id: series.region_id.clone(),
        in_sample_loss: loss_report.total,
        loss_report,
        params,
        converged: best.converged,
        n_restarts_used: restarts.len(),
        fit_window: (series.start_date(), series.end_date()),
        at_bound,
        restarts,
    })
}

/// Fits every region in parallel, each after applying the inclusion rule.
/// Regions that never pass 100 cases are returned as errors.
pub fn fit_regions(
    series: &[RegionSeries],
    rates: &ClinicalRates,
    config: &FitConfig,
) -> Vec<Result<FitResult, FitError>> {
    series
        .par_iter()
        .map(|s| {
            let included = s.included().ok_or_else(|| FitError::InclusionRule {
                region: s.region_id.clone(),
            })?;
            fit(&included, rates, config)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{initial_state, integrate};

    fn truth() -> FittedParams {
        FittedParams {
            alpha: 0.85,
            t0: 30.0,
            k: 12.0,
            p_d: 0.2,
            p_h: 0.25,
            m: 0.04,
            k_i: 6.0,
        }
    }

    fn synthetic(p: &FittedParams, days: i64) -> (DelphiParams, RegionSeries) {
        let start = NaiveDate::from_ymd_opt(2020, 3, 10).unwrap();
        let params = DelphiParams {
            fitted: *p,
            rates: ClinicalRates::default(),
            population: 3e5,
            start_date: start,
        };
        let x0 = initial_state(&params, 150.0, 2.0);
        let traj = integrate(&params, &x0, days as f64, 0.5).unwrap();
        let obs = traj.observables().daily();
        let series = RegionSeries::new(
            "X",
            (0..=days).map(|d| start + chrono::Duration::days(d)).collect(),
            obs.detected_cases,
            obs.detected_deaths,
            params.population,
        )
        .unwrap();
        (params, series)
    }

    #[test]
    fn bound_maps_round_trip() {
        for b in ParamBounds::default().as_array() {
            for u in [-3.0, -0.5, 0.0, 0.8, 2.5] {
                let x = b.to_box(u);
                assert!(x > b.lo && x < b.hi);
                assert!((b.to_unconstrained(x) - u).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn loss_vanishes_at_truth() {
        let (p, s) = synthetic(&truth(), 80);
        let l = loss(&p, &s, LossWeights::default(), 0.5, DeathSeries::Detected);
        assert!(l.total < 1e-10, "{l:?}");
    }

    #[test]
    fn loss_is_linear_in_weights() {
        let (mut p, s) = synthetic(&truth(), 60);
        p.fitted.alpha *= 1.05;
        let base = loss(
            &p,
            &s,
            LossWeights {
                cases: 1.0,
                deaths: 3.0,
            },
            0.5,
            DeathSeries::Detected,
        );
        let doubled = loss(
            &p,
            &s,
            LossWeights {
                cases: 2.0,
                deaths: 3.0,
            },
            0.5,
            DeathSeries::Detected,
        );
        assert_eq!(doubled.cases_term, 2.0 * base.cases_term);
        assert_eq!(doubled.deaths_term, base.deaths_term);
        assert!(base.cases_term > 0.0);
    }

    #[test]
    fn perturbing_alpha_raises_loss() {
        let (p, s) = synthetic(&truth(), 80);
        let w = LossWeights::default();
        let at_truth = loss(&p, &s, w, 0.5, DeathSeries::Detected).total;
        let mut q = p.clone();
        q.fitted.alpha *= 1.1;
        let perturbed = loss(&q, &s, w, 0.5, DeathSeries::Detected).total;
        assert!(perturbed > at_truth);
        assert!(perturbed > 1e-3);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        let mut c = FitConfig::default();
        c.n_starts = 10;
        assert!(c.validate().is_err());
        let mut c = FitConfig::default();
        c.step = 0.3;
        assert!(c.validate().is_err());
        let mut c = FitConfig::default();
        c.bounds.alpha = Bound::log(0.0, 1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn refuses_series_below_threshold() {
        let (_, mut s) = synthetic(&truth(), 20);
        s.cumulative_cases[0] = 90.0;
        assert!(matches!(
            fit(&s, &ClinicalRates::default(), &FitConfig::default()),
            Err(FitError::InclusionRule { .. })
        ));
    }
}
