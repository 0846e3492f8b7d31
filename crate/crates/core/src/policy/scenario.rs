use serde::{Deserialize, Serialize};

use super::{predict_gamma, Policy, PolicyError, PolicySchedule, RegressionTree};
use crate::model::{gamma_unchecked, integrate_with, CompartmentState, DelphiParams, Trajectory};

pub const DEFAULT_TRANSITION_DAYS: f64 = 14.0;

/// The fitted arctan response up to the first change, then a ramp of
/// `transition_days` from the current value to each change's target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplicedGamma {
    pub t0: f64,
    pub k: f64,
    pub transition_days: f64,
    /// `(t, target)` in increasing `t`.
    pub changes: Vec<(f64, f64)>,
    /// Curve value at each change, where its ramp starts.
    starts: Vec<f64>,
}

impl SplicedGamma {
    pub fn new(t0: f64, k: f64, transition_days: f64, changes: Vec<(f64, f64)>) -> Self {
        let mut g = SplicedGamma {
            t0,
            k,
            transition_days,
            changes,
            starts: Vec::new(),
        };
        for i in 0..g.changes.len() {
            let v = g.eval_before(i, g.changes[i].0);
            g.starts.push(v);
        }
        g
    }

    /// Value at `t` of the curve built from the first `n` changes.
    fn eval_before(&self, n: usize, t: f64) -> f64 {
        match self.changes[..n].iter().rposition(|(tc, _)| *tc <= t) {
            None => gamma_unchecked(t, self.t0, self.k),
            Some(i) => {
                let (tc, target) = self.changes[i];
                let start = self.starts[i];
                let ramp = self.transition_days;
                if ramp <= 0.0 || t >= tc + ramp {
                    target
                } else {
                    start + (target - start) * (t - tc) / ramp
                }
            }
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_before(self.changes.len(), t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub trajectory: Trajectory,
    /// γ on the trajectory grid.
    pub gamma: Vec<f64>,
    /// `(day, policy, predicted γ)` for each change after the start.
    pub changes: Vec<(f64, Policy, f64)>,
}

/// Builds the spliced response for `schedule`. Entries dated on or before the
/// start describe the policy already in force and leave the fitted curve
/// alone.
pub fn spliced_gamma(
    params: &DelphiParams,
    tree: &RegressionTree,
    schedule: &PolicySchedule,
    horizon: f64,
    transition_days: f64,
) -> Result<(SplicedGamma, Vec<(f64, Policy, f64)>), PolicyError> {
    schedule.validate()?;
    if !(transition_days >= 0.0) || !transition_days.is_finite() {
        return Err(PolicyError::Scenario(format!(
            "transition_days must be nonnegative, got {transition_days}"
        )));
    }
    let first = schedule.entries[0].0;
    if first > params.start_date {
        return Err(PolicyError::Scenario(format!(
            "schedule starts {first}, after the simulation start {}",
            params.start_date
        )));
    }
    let mut changes = Vec::new();
    for (date, policy) in &schedule.entries {
        let t = (*date - params.start_date).num_days() as f64;
        if t <= 0.0 {
            continue;
        }
        if t > horizon {
            return Err(PolicyError::Scenario(format!(
                "change on {date} is beyond the {horizon}-day horizon"
            )));
        }
        changes.push((t, *policy, predict_gamma(tree, *policy)));
    }
    let curve = SplicedGamma::new(
        params.fitted.t0,
        params.fitted.k,
        transition_days,
        changes.iter().map(|(t, _, g)| (*t, *g)).collect(),
    );
    Ok((curve, changes))
}

/// Integrates the model from `x0` with the fitted response replaced by the
/// spliced curve for `schedule`.
pub fn simulate_scenario(
    params: &DelphiParams,
    x0: &CompartmentState,
    tree: &RegressionTree,
    schedule: &PolicySchedule,
    horizon: f64,
    transition_days: f64,
    step: f64,
) -> Result<ScenarioOutcome, PolicyError> {
    let (curve, changes) = spliced_gamma(params, tree, schedule, horizon, transition_days)?;
    let trajectory = integrate_with(params, x0, horizon, step, |t| curve.eval(t))
        .map_err(|e| PolicyError::Scenario(e.to_string()))?;
    let gamma = trajectory.t.iter().map(|t| curve.eval(*t)).collect();
    Ok(ScenarioOutcome {
        trajectory,
        gamma,
        changes,
    })
}
