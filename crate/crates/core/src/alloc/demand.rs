use super::{snapped_ceil, AllocError};
use crate::model::Trajectory;

/// `v[s][d - 1] = ⌈vent_fraction · hospitalized_s(first_day + d - 1)⌉` for
/// `d = 1..=days`, with `t` measured from each trajectory's start.
///
/// Hospital stays are already part of the trajectories through the in-hospital
/// recovery rate. A `los_days` is accepted only as a consistency check against
/// that rate.
pub fn demand_from_forecast(
    trajectories: &[Trajectory],
    first_day: f64,
    days: usize,
    vent_fraction: f64,
    los_days: Option<f64>,
) -> Result<Vec<Vec<u64>>, AllocError> {
    if !(0.0..=1.0).contains(&vent_fraction) {
        return Err(AllocError::Demand(format!(
            "vent_fraction must be in [0, 1], got {vent_fraction}"
        )));
    }
    if !(first_day >= 0.0) || !first_day.is_finite() {
        return Err(AllocError::Demand(format!(
            "first_day must be nonnegative, got {first_day}"
        )));
    }
    let mut out = Vec::with_capacity(trajectories.len());
    for (s, traj) in trajectories.iter().enumerate() {
        if let Some(los) = los_days {
            let r_rh = traj.params.rates.r_rh;
            if !((r_rh * los - 1.0).abs() <= 1e-9) {
                return Err(AllocError::Demand(format!(
                    "region {s}: los_days {los} disagrees with the trajectory's hospital stay of {} days",
                    1.0 / r_rh
                )));
            }
        }
        let mut row = Vec::with_capacity(days);
        for d in 0..days {
            let t = first_day + d as f64;
            let state = traj.state_at(t).ok_or_else(|| {
                AllocError::Demand(format!(
                    "region {s}: forecast ends at t = {}, planning horizon needs t = {t}",
                    traj.horizon()
                ))
            })?;
            row.push(snapped_ceil(vent_fraction * state.hospitalized().max(0.0)));
        }
        out.push(row);
    }
    Ok(out)
}
