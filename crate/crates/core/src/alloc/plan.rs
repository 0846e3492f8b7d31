use std::io::Write;

use serde::{Deserialize, Serialize};

use super::network::{ArcKind, FlowNetwork, FlowSolution, NodeKind};
use super::{AllocError, AllocationProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// The min-cost flow already respected the cumulative pooling cap.
    Network,
    /// Integer program with the cumulative cap as explicit rows.
    Mip,
}

/// `units` leave `from` on `day` and arrive `lead_time` days later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub day: usize,
    pub from: String,
    pub to: String,
    pub units: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    pub shortage_vent_days: u64,
    pub worst_case_vent_days: u64,
    pub transfer_km_units: u64,
    pub transfer_units: u64,
    pub federal_used: u64,
    /// `w_short · shortage + w_worst · worst case + w_dist · km·units`.
    pub weighted: u64,
}

/// Per-region rows are indexed `[s][d - 1]` for days `1..=D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub region_ids: Vec<String>,
    pub days: usize,
    pub lead_time: usize,
    pub transfers: Vec<Transfer>,
    pub federal: Vec<Vec<u64>>,
    pub inventory: Vec<Vec<u64>>,
    pub shortage: Vec<Vec<u64>>,
    pub worst_case_shortage: Vec<Vec<u64>>,
    pub objective: ObjectiveBreakdown,
    pub method: SolveMethod,
}

fn audit_err(m: String) -> AllocError {
    AllocError::Audit(m)
}

impl AllocationPlan {
    /// Completes a plan from its decisions; everything else follows from the
    /// balance equations with the smallest feasible shortages. Fails if any
    /// inventory would go negative.
    pub(crate) fn from_decisions(
        p: &AllocationProblem,
        x: &[(usize, usize, usize, u64)],
        federal: Vec<Vec<u64>>,
        method: SolveMethod,
    ) -> Result<Self, AllocError> {
        let (n, days) = (p.n_regions(), p.days());
        let mut delta = vec![vec![0i128; days + 1]; n];
        for &(d, s, t, u) in x {
            if s == t || d == 0 || !p.can_dispatch(d) {
                return Err(audit_err(format!("transfer {s} -> {t} on day {d} is not allowed")));
            }
            delta[s][d] -= u as i128;
            delta[t][d + p.lead_time] += u as i128;
        }
        let mut inventory = vec![vec![0u64; days]; n];
        let (mut shortage, mut worst) = (inventory.clone(), inventory.clone());
        for s in 0..n {
            let mut level = p.base_supply[s] as i128;
            for d in 1..=days {
                level += delta[s][d] + federal[s][d - 1] as i128;
                if level < 0 {
                    return Err(audit_err(format!("{} holds {level} units on day {d}", p.region_ids[s])));
                }
                inventory[s][d - 1] = level as u64;
                shortage[s][d - 1] = p.demand[s][d - 1].saturating_sub(level as u64);
                worst[s][d - 1] = p.buffered_demand(s, d).saturating_sub(level as u64);
            }
        }
        let mut transfers: Vec<Transfer> = x
            .iter()
            .filter(|t| t.3 > 0)
            .map(|&(day, s, t, units)| Transfer {
                day,
                from: p.region_ids[s].clone(),
                to: p.region_ids[t].clone(),
                units,
            })
            .collect();
        let order = |id: &str| p.region_ids.iter().position(|r| r == id);
        transfers.sort_by_key(|t| (t.day, order(&t.from), order(&t.to)));
        let mut plan = AllocationPlan {
            region_ids: p.region_ids.clone(),
            days,
            lead_time: p.lead_time,
            transfers,
            federal,
            inventory,
            shortage,
            worst_case_shortage: worst,
            objective: ObjectiveBreakdown {
                shortage_vent_days: 0,
                worst_case_vent_days: 0,
                transfer_km_units: 0,
                transfer_units: 0,
                federal_used: 0,
                weighted: 0,
            },
            method,
        };
        plan.objective = plan.breakdown(p)?;
        Ok(plan)
    }

    pub(crate) fn from_flow(
        p: &AllocationProblem,
        net: &FlowNetwork,
        sol: &FlowSolution,
        method: SolveMethod,
    ) -> Result<Self, AllocError> {
        let (n, days) = (p.n_regions(), p.days());
        let mut x = Vec::new();
        let mut federal = vec![vec![0u64; days]; n];
        for (a, &f) in net.arcs.iter().zip(&sol.flow) {
            if f == 0 {
                continue;
            }
            match (a.kind, net.nodes[a.from], net.nodes[a.to]) {
                (ArcKind::Transfer, NodeKind::Splitter { region, day }, NodeKind::Inventory { region: to, .. }) => {
                    x.push((day, region, to, f as u64))
                }
                (ArcKind::Release, _, NodeKind::Inventory { region, day }) => federal[region][day - 1] += f as u64,
                _ => {}
            }
        }
        let plan = Self::from_decisions(p, &x, federal, method)?;
        let (primary, secondary) = (sol.cost / net.scale, sol.cost % net.scale);
        if primary != plan.objective.weighted as i128 || secondary != plan.objective.federal_used as i128 {
            return Err(audit_err(format!(
                "flow cost {primary} (+{secondary} released) disagrees with the plan's {:?}",
                plan.objective
            )));
        }
        Ok(plan)
    }

    /// Units region `s` sends over the horizon.
    pub fn sent_by(&self, s: usize) -> u64 {
        let id = &self.region_ids[s];
        self.transfers.iter().filter(|t| &t.from == id).map(|t| t.units).sum()
    }

    fn breakdown(&self, p: &AllocationProblem) -> Result<ObjectiveBreakdown, AllocError> {
        let overflow = || audit_err("objective overflows u64".into());
        let idx = |id: &str| {
            p.region_ids
                .iter()
                .position(|r| r == id)
                .ok_or_else(|| audit_err(format!("unknown region {id}")))
        };
        let sum = |m: &Vec<Vec<u64>>| {
            m.iter()
                .flatten()
                .try_fold(0u64, |a, &b| a.checked_add(b))
                .ok_or_else(overflow)
        };
        let mut km = 0u64;
        let mut units = 0u64;
        for t in &self.transfers {
            let d = p.distance_km[idx(&t.from)?][idx(&t.to)?];
            km = d
                .checked_mul(t.units)
                .and_then(|v| v.checked_add(km))
                .ok_or_else(overflow)?;
            units += t.units;
        }
        let (short, worst) = (sum(&self.shortage)?, sum(&self.worst_case_shortage)?);
        let w = p.weights;
        let weighted = w
            .w_short
            .checked_mul(short)
            .and_then(|a| w.w_worst.checked_mul(worst).and_then(|b| a.checked_add(b)))
            .and_then(|a| w.w_dist.checked_mul(km).and_then(|b| a.checked_add(b)))
            .ok_or_else(overflow)?;
        Ok(ObjectiveBreakdown {
            shortage_vent_days: short,
            worst_case_vent_days: worst,
            transfer_km_units: km,
            transfer_units: units,
            federal_used: sum(&self.federal)?,
            weighted,
        })
    }

    /// Re-derives every quantity of the plan from its transfers and releases
    /// with integer arithmetic and checks it against the problem's
    /// constraints.
    pub fn audit(&self, p: &AllocationProblem) -> Result<(), AllocError> {
        let (n, days) = (p.n_regions(), p.days());
        if self.region_ids != p.region_ids || self.days != days || self.lead_time != p.lead_time {
            return Err(audit_err("plan belongs to a different problem".into()));
        }
        let shaped = |m: &Vec<Vec<u64>>| m.len() == n && m.iter().all(|r| r.len() == days);
        if ![
            &self.federal,
            &self.inventory,
            &self.shortage,
            &self.worst_case_shortage,
        ]
        .iter()
        .all(|m| shaped(m))
        {
            return Err(audit_err("plan matrices have the wrong shape".into()));
        }
        let idx = |id: &str| {
            p.region_ids
                .iter()
                .position(|r| r == id)
                .ok_or_else(|| audit_err(format!("unknown region {id}")))
        };
        let mut x = Vec::with_capacity(self.transfers.len());
        for t in &self.transfers {
            x.push((t.day, idx(&t.from)?, idx(&t.to)?, t.units));
        }
        let again = Self::from_decisions(p, &x, self.federal.clone(), self.method)?;
        for (name, a, b) in [
            ("inventory", &self.inventory, &again.inventory),
            ("shortage", &self.shortage, &again.shortage),
            (
                "worst-case shortage",
                &self.worst_case_shortage,
                &again.worst_case_shortage,
            ),
        ] {
            if a != b {
                return Err(audit_err(format!("{name} does not follow from the decisions")));
            }
        }
        for s in 0..n {
            let (sent, cap) = (self.sent_by(s), p.pooling_cap(s));
            if sent > cap {
                return Err(audit_err(format!(
                    "{} sends {sent} units, cap is {cap}",
                    p.region_ids[s]
                )));
            }
        }
        if again.objective.federal_used > p.federal_stock {
            return Err(audit_err(format!(
                "{} federal units released, stock is {}",
                again.objective.federal_used, p.federal_stock
            )));
        }
        if again.objective != self.objective {
            return Err(audit_err(format!(
                "reported {:?}, recomputed {:?}",
                self.objective, again.objective
            )));
        }
        Ok(())
    }
}

/// `day,from,to,units`, one row per nonzero transfer.
pub fn write_transfers_csv<W: Write>(plan: &AllocationPlan, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "from", "to", "units"])?;
    for t in &plan.transfers {
        w.write_record([t.day.to_string(), t.from.clone(), t.to.clone(), t.units.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `day,region,units`, one row per region-day with a shortage.
pub fn write_shortages_csv<W: Write>(plan: &AllocationPlan, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "region", "units"])?;
    for d in 1..=plan.days {
        for (s, id) in plan.region_ids.iter().enumerate() {
            let z = plan.shortage[s][d - 1];
            if z > 0 {
                w.write_record([d.to_string(), id.clone(), z.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
