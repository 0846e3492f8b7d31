use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve, AllocError, AllocationPlan, AllocationProblem, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rho: f64,
    pub w_short: u64,
    pub w_dist: u64,
    pub shortage_vent_days: u64,
    pub transfer_km_units: u64,
    pub weighted: u64,
}

impl SweepPoint {
    fn of(rho: f64, w: Weights, plan: &AllocationPlan) -> Self {
        SweepPoint {
            rho,
            w_short: w.w_short,
            w_dist: w.w_dist,
            shortage_vent_days: plan.objective.shortage_vent_days,
            transfer_km_units: plan.objective.transfer_km_units,
            weighted: plan.objective.weighted,
        }
    }

    fn dominates(&self, o: &SweepPoint) -> bool {
        self.shortage_vent_days <= o.shortage_vent_days
            && self.transfer_km_units <= o.transfer_km_units
            && (self.shortage_vent_days, self.transfer_km_units) != (o.shortage_vent_days, o.transfer_km_units)
    }
}

/// Solves every `(ρ, (w_short, w_dist))` combination in parallel and returns
/// all points, in grid order. `w_worst` is kept from `problem`.
pub fn pareto_sweep(
    problem: &AllocationProblem,
    rho_grid: &[f64],
    weight_grid: &[(u64, u64)],
) -> Result<Vec<SweepPoint>, AllocError> {
    if rho_grid.is_empty() || weight_grid.is_empty() {
        return Err(AllocError::InvalidProblem("sweep grids must be nonempty".into()));
    }
    let jobs: Vec<(f64, Weights)> = rho_grid
        .iter()
        .flat_map(|&rho| {
            weight_grid.iter().map(move |&(w_short, w_dist)| {
                (
                    rho,
                    Weights {
                        w_short,
                        w_dist,
                        w_worst: problem.weights.w_worst,
                    },
                )
            })
        })
        .collect();
    jobs.par_iter()
        .map(|&(rho, weights)| {
            let p = AllocationProblem {
                pooling_fraction: rho,
                weights,
                ..problem.clone()
            };
            solve(&p).map(|plan| SweepPoint::of(rho, weights, &plan))
        })
        .collect()
}

/// The nondominated `(shortage, distance)` points of each ρ, deduplicated
/// and sorted by ρ then shortage.
pub fn frontier(points: &[SweepPoint]) -> Vec<SweepPoint> {
    let mut out: Vec<SweepPoint> = Vec::new();
    for p in points {
        let dominated = points.iter().any(|q| q.rho == p.rho && q.dominates(p));
        let duplicate = out.iter().any(|q| {
            q.rho == p.rho && (q.shortage_vent_days, q.transfer_km_units) == (p.shortage_vent_days, p.transfer_km_units)
        });
        if !dominated && !duplicate {
            out.push(*p);
        }
    }
    out.sort_by(|a, b| {
        a.rho
            .total_cmp(&b.rho)
            .then(a.shortage_vent_days.cmp(&b.shortage_vent_days))
    });
    out
}
