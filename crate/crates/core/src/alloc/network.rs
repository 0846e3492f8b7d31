//! Time-expanded network and a successive-shortest-path min-cost flow.
//!
//! For every region `s` and day `d` there are two nodes. `Inventory(s, d)`
//! collects yesterday's stock, arrivals and releases and must absorb the
//! buffered demand `V = ⌈(1 + ε) v⌉`; `Service(s, d)` supplies those `V`
//! units back. Stock flows `Inventory → Service` at no cost, and two reverse
//! arcs `Service → Inventory` carry the uncovered part of the demand:
//! capacity `v` at `w_short + w_worst` and capacity `V - v` at `w_worst`.
//! What leaves `Service(s, d)` is the stock `n[s, d]`, held into day `d + 1`.
//!
//! Dispatches leave `Inventory(s, d)` through `Splitter(s, d)`, whose inlet
//! carries at most `⌊ρ · base⌋` per day, and reach `Inventory(s', d + L)`.
//! The cap over the whole horizon is not a network constraint; [`super::solve`]
//! checks it afterwards.
//!
//! Costs are primary objective times `F + 1`, plus one per released federal
//! unit, so that among optimal plans the one using the least stock wins.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{AllocError, AllocationProblem};

pub const INF_CAP: i64 = i64::MAX / 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Inventory { region: usize, day: usize },
    Service { region: usize, day: usize },
    Splitter { region: usize, day: usize },
    Federal,
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArcKind {
    Cover,
    Short,
    Worst,
    Hold,
    Final,
    Dispatch,
    Transfer,
    Release,
    Unreleased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub cap: i64,
    pub cost: i128,
    pub kind: ArcKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowNetwork {
    pub nodes: Vec<NodeKind>,
    /// Positive for sources, negative for sinks; sums to zero.
    pub supply: Vec<i64>,
    pub arcs: Vec<Arc>,
    /// Multiplier of the primary objective in arc costs.
    pub scale: i128,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub flow: Vec<i64>,
    pub cost: i128,
}

pub fn build_network(p: &AllocationProblem) -> FlowNetwork {
    let (n, days) = (p.n_regions(), p.days());
    let w = p.weights;
    let scale = p.federal_stock as i128 + 1;
    let inv = |s: usize, d: usize| s * days + d - 1;
    let svc = |s: usize, d: usize| n * days + s * days + d - 1;

    let mut nodes = Vec::new();
    for s in 0..n {
        for day in 1..=days {
            nodes.push(NodeKind::Inventory { region: s, day });
        }
    }
    for s in 0..n {
        for day in 1..=days {
            nodes.push(NodeKind::Service { region: s, day });
        }
    }
    let mut supply = vec![0i64; 2 * n * days];
    let mut arcs = Vec::new();
    let arc = |arcs: &mut Vec<Arc>, from, to, cap: i64, cost: i128, kind| {
        if cap > 0 {
            arcs.push(Arc {
                from,
                to,
                cap,
                cost,
                kind,
            });
        }
    };

    for s in 0..n {
        supply[inv(s, 1)] += p.base_supply[s] as i64;
        for d in 1..=days {
            let (v, vb) = (p.demand[s][d - 1] as i64, p.buffered_demand(s, d) as i64);
            supply[inv(s, d)] -= vb;
            supply[svc(s, d)] += vb;
            arc(&mut arcs, inv(s, d), svc(s, d), INF_CAP, 0, ArcKind::Cover);
            arc(
                &mut arcs,
                svc(s, d),
                inv(s, d),
                v,
                (w.w_short + w.w_worst) as i128 * scale,
                ArcKind::Short,
            );
            arc(
                &mut arcs,
                svc(s, d),
                inv(s, d),
                vb - v,
                w.w_worst as i128 * scale,
                ArcKind::Worst,
            );
            if d < days {
                arc(&mut arcs, svc(s, d), inv(s, d + 1), INF_CAP, 0, ArcKind::Hold);
            }
        }
    }

    for s in 0..n {
        let cap = p.pooling_cap(s) as i64;
        if cap == 0 || n < 2 {
            continue;
        }
        for d in (1..=days).filter(|&d| p.can_dispatch(d)) {
            let x = nodes.len();
            nodes.push(NodeKind::Splitter { region: s, day: d });
            supply.push(0);
            arc(&mut arcs, inv(s, d), x, cap, 0, ArcKind::Dispatch);
            for t in (0..n).filter(|&t| t != s) {
                let cost = (w.w_dist * p.distance_km[s][t]) as i128 * scale;
                arc(&mut arcs, x, inv(t, d + p.lead_time), INF_CAP, cost, ArcKind::Transfer);
            }
        }
    }

    let sink = if p.federal_stock > 0 {
        let f = nodes.len();
        nodes.push(NodeKind::Federal);
        supply.push(p.federal_stock as i64);
        let sink = f + 1;
        for s in 0..n {
            for d in 1..=days {
                arc(&mut arcs, f, inv(s, d), p.federal_stock as i64, 1, ArcKind::Release);
            }
        }
        arc(&mut arcs, f, sink, p.federal_stock as i64, 0, ArcKind::Unreleased);
        sink
    } else {
        nodes.len()
    };
    nodes.push(NodeKind::Sink);
    supply.push(-((p.base_supply.iter().sum::<u64>() + p.federal_stock) as i64));
    for s in 0..n {
        arc(&mut arcs, svc(s, days), sink, INF_CAP, 0, ArcKind::Final);
    }

    FlowNetwork {
        nodes,
        supply,
        arcs,
        scale,
    }
}

struct Residual {
    head: Vec<usize>,
    cap: Vec<i64>,
    cost: Vec<i128>,
    adj: Vec<Vec<usize>>,
}

impl Residual {
    fn add(&mut self, from: usize, to: usize, cap: i64, cost: i128) {
        self.adj[from].push(self.head.len());
        self.head.push(to);
        self.cap.push(cap);
        self.cost.push(cost);
        self.adj[to].push(self.head.len());
        self.head.push(from);
        self.cap.push(0);
        self.cost.push(-cost);
    }
}

impl Residual {
    /// Depth-first push along arcs of zero reduced cost.
    fn augment(
        &mut self,
        u: usize,
        dst: usize,
        limit: i64,
        pot: &[i128],
        on_path: &mut [bool],
        iter: &mut [usize],
    ) -> i64 {
        if u == dst {
            return limit;
        }
        on_path[u] = true;
        let mut pushed = 0;
        while iter[u] < self.adj[u].len() {
            let e = self.adj[u][iter[u]];
            let v = self.head[e];
            if self.cap[e] > 0 && !on_path[v] && self.cost[e] + pot[u] - pot[v] == 0 {
                let f = self.augment(v, dst, (limit - pushed).min(self.cap[e]), pot, on_path, iter);
                if f > 0 {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    pushed += f;
                    if pushed == limit {
                        break;
                    }
                    continue;
                }
            }
            iter[u] += 1;
        }
        on_path[u] = false;
        pushed
    }
}

impl FlowNetwork {
    /// Exact minimum-cost flow meeting every supply, by successive shortest
    /// paths with Dijkstra on reduced costs. All arc costs are nonnegative,
    /// so the potentials can start at zero. Each round pushes a blocking flow
    /// through the arcs that lie on some shortest path.
    pub fn min_cost_flow(&self) -> Result<FlowSolution, AllocError> {
        let nv = self.nodes.len() + 2;
        let (src, dst) = (nv - 2, nv - 1);
        let mut g = Residual {
            head: Vec::new(),
            cap: Vec::new(),
            cost: Vec::new(),
            adj: vec![Vec::new(); nv],
        };
        for a in &self.arcs {
            debug_assert!(a.cost >= 0);
            g.add(a.from, a.to, a.cap, a.cost);
        }
        let mut need = 0i64;
        for (v, &b) in self.supply.iter().enumerate() {
            if b > 0 {
                g.add(src, v, b, 0);
                need += b;
            } else if b < 0 {
                g.add(v, dst, -b, 0);
            }
        }

        let mut pot = vec![0i128; nv];
        let mut dist = vec![i128::MAX; nv];
        let mut on_path = vec![false; nv];
        let mut iter = vec![0usize; nv];
        let mut sent = 0i64;
        while sent < need {
            dist.fill(i128::MAX);
            dist[src] = 0;
            let mut heap = BinaryHeap::new();
            heap.push(Reverse((0i128, src)));
            while let Some(Reverse((d, u))) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &e in &g.adj[u] {
                    if g.cap[e] == 0 {
                        continue;
                    }
                    let v = g.head[e];
                    let nd = d + g.cost[e] + pot[u] - pot[v];
                    if nd < dist[v] {
                        dist[v] = nd;
                        heap.push(Reverse((nd, v)));
                    }
                }
            }
            if dist[dst] == i128::MAX {
                return Err(AllocError::Solver(format!(
                    "network infeasible: routed {sent} of {need} units"
                )));
            }
            for v in 0..nv {
                if dist[v] != i128::MAX {
                    pot[v] += dist[v];
                }
            }
            // Saturate every shortest path before searching again.
            iter.fill(0);
            loop {
                let f = g.augment(src, dst, need - sent, &pot, &mut on_path, &mut iter);
                if f == 0 {
                    break;
                }
                sent += f;
            }
        }

        let flow: Vec<i64> = (0..self.arcs.len()).map(|i| g.cap[2 * i + 1]).collect();
        let cost = self.arcs.iter().zip(&flow).map(|(a, &f)| a.cost * f as i128).sum();
        Ok(FlowSolution { flow, cost })
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_region;
    use super::*;

    fn count(net: &FlowNetwork, k: ArcKind) -> usize {
        net.arcs.iter().filter(|a| a.kind == k).count()
    }

    #[test]
    fn single_region_single_day() {
        let mut p = two_region([3, 0], [vec![5], vec![0]], 0.0);
        p.region_ids.pop();
        p.base_supply.pop();
        p.demand.pop();
        p.distance_km = vec![vec![0]];
        let net = build_network(&p);
        assert_eq!(net.nodes.len(), 3);
        assert!(net
            .arcs
            .iter()
            .all(|a| matches!(a.kind, ArcKind::Cover | ArcKind::Short | ArcKind::Final)));
        let sol = net.min_cost_flow().unwrap();
        assert_eq!(sol.cost, 2 * (1_000_000 + 1_000));
    }

    #[test]
    fn closed_form_counts() {
        // S = 2, D = 2, lead 1, every demand positive with a buffer: each
        // (s, d) has Cover, Short and Worst; one dispatch day per region.
        let (s, d, l) = (2usize, 2usize, 1usize);
        let mut p = two_region([4, 4], [vec![2, 3], vec![1, 5]], 0.5);
        p.buffer = 0.5;
        p.federal_stock = 3;
        let net = build_network(&p);
        let dispatch_days = d - l;
        assert_eq!(net.nodes.len(), 2 * s * d + s * dispatch_days + 2);
        assert_eq!(count(&net, ArcKind::Cover), s * d);
        assert_eq!(count(&net, ArcKind::Short), s * d);
        assert_eq!(count(&net, ArcKind::Worst), s * d);
        assert_eq!(count(&net, ArcKind::Hold), s * (d - 1));
        assert_eq!(count(&net, ArcKind::Final), s);
        assert_eq!(count(&net, ArcKind::Dispatch), s * dispatch_days);
        assert_eq!(count(&net, ArcKind::Transfer), s * dispatch_days * (s - 1));
        assert_eq!(count(&net, ArcKind::Release), s * d);
        assert_eq!(count(&net, ArcKind::Unreleased), 1);
        assert_eq!(net.arcs.len(), 5 * s * d + s * dispatch_days * s + 1);
        assert_eq!(net.supply.iter().sum::<i64>(), 0);
        assert!(net.arcs.iter().all(|a| a.cost >= 0 && a.cap > 0));
    }

    #[test]
    fn transfer_covers_neighbour() {
        let p = two_region([10, 0], [vec![0, 0, 0], vec![0, 4, 4]], 0.5);
        let net = build_network(&p);
        let sol = net.min_cost_flow().unwrap();
        // Four units sent on day 1, 300 km each, cover days 2 and 3.
        assert_eq!(sol.cost, 4 * 300);
    }
}
