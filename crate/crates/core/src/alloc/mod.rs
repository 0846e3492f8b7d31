//! Multi-period ventilator allocation.
//!
//! Regions start with their own supply, may send ventilators to each other
//! (arriving `lead_time` days later) and may receive units from a central
//! stockpile. A day's shortage is demand minus inventory; a second, buffered
//! shortage uses demand inflated by `1 + buffer`. The objective is
//!
//! ```text
//! w_short * Σ shortage + w_worst * Σ buffered shortage + w_dist * Σ km * units
//! ```
//!
//! Each region may send out, over the whole horizon, at most
//! `⌊pooling_fraction * base_supply⌋` units.
//!
//! [`solve`] first solves a time-expanded min-cost flow in which that cap is
//! only enforced day by day (a relaxation). When the flow happens to respect
//! the cumulative cap it is optimal; otherwise the exact integer program is
//! solved instead. Either way the returned plan is checked with integer
//! arithmetic before it is handed out.

mod demand;
mod input;
mod mip;
mod network;
mod plan;
mod sweep;

pub use demand::demand_from_forecast;
pub use input::{haversine_km, DemandInput, ProblemInput, RegionInput};
pub use network::{build_network, Arc, ArcKind, FlowNetwork, FlowSolution, NodeKind};
pub use plan::{write_shortages_csv, write_transfers_csv, AllocationPlan, ObjectiveBreakdown, SolveMethod, Transfer};
pub use sweep::{frontier, pareto_sweep, SweepPoint};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllocError {
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(String),
    #[error("demand: {0}")]
    Demand(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("plan audit failed: {0}")]
    Audit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Weights {
    pub w_short: u64,
    pub w_worst: u64,
    pub w_dist: u64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_short: 1_000_000,
            w_worst: 1_000,
            w_dist: 1,
        }
    }
}

/// A fully resolved problem. Days are numbered from 1; `demand[s][d - 1]` is
/// region `s`'s demand on day `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationProblem {
    pub region_ids: Vec<String>,
    pub base_supply: Vec<u64>,
    /// Symmetric, zero diagonal.
    pub distance_km: Vec<Vec<u64>>,
    pub demand: Vec<Vec<u64>>,
    /// Units the stockpile can release over the whole horizon.
    pub federal_stock: u64,
    pub pooling_fraction: f64,
    pub buffer: f64,
    pub lead_time: usize,
    pub weights: Weights,
}

/// `x` rounded up, except that values within `1e-9` (relative) of an integer
/// are taken as that integer; `1.1 * 10` is 11, not 12.
pub(crate) fn snapped_ceil(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

pub(crate) fn snapped_floor(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as u64
    } else {
        x.floor() as u64
    }
}

impl AllocationProblem {
    pub fn n_regions(&self) -> usize {
        self.region_ids.len()
    }

    pub fn days(&self) -> usize {
        self.demand.first().map_or(0, Vec::len)
    }

    /// Cumulative out-transfer cap for region `s`.
    pub fn pooling_cap(&self, s: usize) -> u64 {
        snapped_floor(self.pooling_fraction * self.base_supply[s] as f64)
    }

    /// `⌈(1 + buffer) v⌉` for region `s` on day `d` (1-based).
    pub fn buffered_demand(&self, s: usize, d: usize) -> u64 {
        let v = self.demand[s][d - 1];
        snapped_ceil((1.0 + self.buffer) * v as f64).max(v)
    }

    /// Whether a transfer dispatched on `day` arrives within the horizon.
    pub fn can_dispatch(&self, day: usize) -> bool {
        day + self.lead_time <= self.days()
    }

    pub fn validate(&self) -> Result<(), AllocError> {
        let bad = |m: String| Err(AllocError::InvalidProblem(m));
        let n = self.n_regions();
        if n == 0 {
            return bad("no regions".into());
        }
        if self.base_supply.len() != n || self.demand.len() != n || self.distance_km.len() != n {
            return bad(format!("expected {n} rows of supply, demand and distance"));
        }
        let days = self.days();
        if days == 0 || self.demand.iter().any(|r| r.len() != days) {
            return bad("demand rows must all cover the same, nonzero number of days".into());
        }
        for (i, row) in self.distance_km.iter().enumerate() {
            if row.len() != n {
                return bad(format!("distance row {i} has {} entries, expected {n}", row.len()));
            }
            if row[i] != 0 {
                return bad(format!("distance from {} to itself is {}", self.region_ids[i], row[i]));
            }
            for j in 0..n {
                if row[j] != self.distance_km[j][i] {
                    return bad(format!(
                        "distances between {} and {} are not symmetric",
                        self.region_ids[i], self.region_ids[j]
                    ));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.pooling_fraction) {
            return bad(format!(
                "pooling_fraction must be in [0, 1], got {}",
                self.pooling_fraction
            ));
        }
        if !(self.buffer >= 0.0 && self.buffer.is_finite()) {
            return bad(format!("buffer must be nonnegative, got {}", self.buffer));
        }
        let mut ids = self.region_ids.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != n {
            return bad("region ids must be unique".into());
        }
        Ok(())
    }
}

/// Solves `problem` exactly. See the module docs for the method.
pub fn solve(problem: &AllocationProblem) -> Result<AllocationPlan, AllocError> {
    problem.validate()?;
    let network = build_network(problem);
    let flow = network.min_cost_flow()?;
    let relaxed = AllocationPlan::from_flow(problem, &network, &flow, SolveMethod::Network)?;
    let plan = if (0..problem.n_regions()).all(|s| relaxed.sent_by(s) <= problem.pooling_cap(s)) {
        relaxed
    } else {
        mip::solve_exact(problem)?
    };
    plan.audit(problem)?;
    Ok(plan)
}
