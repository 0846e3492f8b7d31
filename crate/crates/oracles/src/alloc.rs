//! Exhaustive search over allocation plans, day by day with memoization.
//!
//! Fractions are exact rationals so that caps and buffered demand come out
//! of integer arithmetic only.

use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct Micro {
    pub base: Vec<u64>,
    pub dist: Vec<Vec<u64>>,
    /// `demand[s][d]`, `d` from 0.
    pub demand: Vec<Vec<u64>>,
    pub federal: u64,
    /// Pooling fraction as `(num, den)`.
    pub rho: (u64, u64),
    /// Buffer as `(num, den)`.
    pub eps: (u64, u64),
    pub lead: usize,
    /// `(w_short, w_worst, w_dist)`.
    pub w: (u64, u64, u64),
}

impl Micro {
    pub fn cap(&self, s: usize) -> u64 {
        self.base[s] * self.rho.0 / self.rho.1
    }

    pub fn buffered(&self, s: usize, d: usize) -> u64 {
        let v = self.demand[s][d];
        let (a, b) = self.eps;
        (v * (a + b)).div_ceil(b)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
struct State {
    day: usize,
    inv: Vec<u64>,
    caps: Vec<u64>,
    federal: u64,
    /// `pipe[k][s]`: units arriving at `s` on `day + k`.
    pipe: Vec<Vec<u64>>,
}

/// All vectors of length `k` with entries summing to at most `max`.
fn bounded(k: usize, max: u64) -> Vec<Vec<u64>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in 0..=max {
        for mut rest in bounded(k - 1, max - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn product(options: &[Vec<Vec<u64>>]) -> Vec<Vec<Vec<u64>>> {
    let mut out = vec![vec![]];
    for opts in options {
        let mut next = Vec::new();
        for partial in &out {
            for o in opts {
                let mut p = partial.clone();
                p.push(o.clone());
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Smallest `(weighted objective, federal units used)` over all plans.
pub fn optimum(m: &Micro) -> (u64, u64) {
    let n = m.base.len();
    let start = State {
        day: 0,
        inv: m.base.clone(),
        caps: (0..n).map(|s| m.cap(s)).collect(),
        federal: m.federal,
        pipe: vec![vec![0; n]; m.lead + 1],
    };
    let mut memo = HashMap::new();
    go(m, start, &mut memo)
}

fn go(m: &Micro, st: State, memo: &mut HashMap<State, (u64, u64)>) -> (u64, u64) {
    let n = m.base.len();
    let days = m.demand[0].len();
    if st.day == days {
        return (0, 0);
    }
    if let Some(&v) = memo.get(&st) {
        return v;
    }
    let d = st.day;
    let can_send = d + m.lead < days;
    // Per region: how many units go to each other region, in index order.
    let sends: Vec<Vec<Vec<u64>>> = (0..n)
        .map(|s| bounded(n - 1, if can_send { st.caps[s] } else { 0 }))
        .collect();
    let mut best = (u64::MAX, u64::MAX);
    for x in product(&sends) {
        let to = |s: usize, k: usize| if k < s { k } else { k + 1 };
        let mut out = vec![0u64; n];
        let mut inbound = vec![0u64; n];
        let mut km = 0;
        let mut swap = false;
        for s in 0..n {
            for (k, &u) in x[s].iter().enumerate() {
                let t = to(s, k);
                out[s] += u;
                inbound[t] += u;
                km += u * m.dist[s][t];
                let back = x[t][if s < t { s } else { s - 1 }];
                swap |= u > 0 && back > 0;
            }
        }
        if swap {
            continue;
        }
        for y in bounded(n, st.federal) {
            let mut inv = vec![0u64; n];
            let mut cost = m.w.2 * km;
            let mut ok = true;
            for s in 0..n {
                let arrivals = st.pipe[0][s] + if m.lead == 0 { inbound[s] } else { 0 };
                let level = st.inv[s] as i64 - out[s] as i64 + arrivals as i64 + y[s] as i64;
                if level < 0 {
                    ok = false;
                    break;
                }
                let level = level as u64;
                inv[s] = level;
                cost += m.w.0 * m.demand[s][d].saturating_sub(level) + m.w.1 * m.buffered(s, d).saturating_sub(level);
            }
            if !ok {
                continue;
            }
            let mut pipe: Vec<Vec<u64>> = st.pipe[1..].to_vec();
            pipe.push(vec![0; n]);
            if m.lead > 0 {
                for s in 0..n {
                    pipe[m.lead - 1][s] += inbound[s];
                }
            }
            let used: u64 = y.iter().sum();
            let next = State {
                day: d + 1,
                inv,
                caps: (0..n).map(|s| st.caps[s] - out[s]).collect(),
                federal: st.federal - used,
                pipe,
            };
            let (c, f) = go(m, next, memo);
            best = best.min((cost + c, used + f));
        }
    }
    memo.insert(st, best);
    best
}
