//! Exact integer program, used when the network relaxation breaks the
//! cumulative pooling cap.

use good_lp::{microlp, variable, Expression, ProblemVariables, Solution, SolverModel, Variable};

use super::plan::{AllocationPlan, SolveMethod};
use super::{AllocError, AllocationProblem};

struct Model {
    vars: ProblemVariables,
    x: Vec<(usize, usize, usize, Variable)>,
    y: Vec<Vec<Option<Variable>>>,
    constraints: Vec<good_lp::Constraint>,
    primary: Expression,
    released: Expression,
}

fn build(p: &AllocationProblem) -> Model {
    let (n, days) = (p.n_regions(), p.days());
    let w = p.weights;
    let mut vars = ProblemVariables::new();
    let int = |vars: &mut ProblemVariables| vars.add(variable().integer().min(0));
    let mut x = Vec::new();
    for s in (0..n).filter(|&s| p.pooling_cap(s) > 0) {
        for d in (1..=days).filter(|&d| p.can_dispatch(d)) {
            for t in (0..n).filter(|&t| t != s) {
                x.push((d, s, t, int(&mut vars)));
            }
        }
    }
    let y: Vec<Vec<Option<Variable>>> = (0..n)
        .map(|_| {
            (0..days)
                .map(|_| (p.federal_stock > 0).then(|| int(&mut vars)))
                .collect()
        })
        .collect();

    let mut constraints = Vec::new();
    let mut primary = Expression::from(0.0);
    let mut released = Expression::from(0.0);
    let mut level: Vec<Expression> = p.base_supply.iter().map(|&b| Expression::from(b as f64)).collect();
    for d in 1..=days {
        for &(dd, s, t, v) in &x {
            if dd == d {
                level[s] -= v;
            }
            if dd + p.lead_time == d {
                level[t] += v;
            }
        }
        for s in 0..n {
            if let Some(v) = y[s][d - 1] {
                level[s] += v;
                released += v;
            }
            let (z, zt) = (int(&mut vars), int(&mut vars));
            constraints.push((z + level[s].clone()).geq(p.demand[s][d - 1] as f64));
            constraints.push((zt + level[s].clone()).geq(p.buffered_demand(s, d) as f64));
            primary += w.w_short as f64 * z + w.w_worst as f64 * zt;
        }
    }
    for s in 0..n {
        let out: Expression = x.iter().filter(|t| t.1 == s).map(|t| t.3).sum();
        if x.iter().any(|t| t.1 == s) {
            constraints.push(out.leq(p.pooling_cap(s) as f64));
        }
    }
    for &(_, s, t, v) in &x {
        primary += (w.w_dist * p.distance_km[s][t]) as f64 * v;
    }
    if p.federal_stock > 0 {
        constraints.push(released.clone().leq(p.federal_stock as f64));
    }
    Model {
        vars,
        x,
        y,
        constraints,
        primary,
        released,
    }
}

fn integral(v: f64) -> Result<u64, AllocError> {
    let r = v.round();
    if (v - r).abs() > 1e-6 || r < 0.0 {
        return Err(AllocError::Solver(format!("integer program returned {v}")));
    }
    Ok(r as u64)
}

fn run(p: &AllocationProblem, bound: Option<u64>) -> Result<AllocationPlan, AllocError> {
    let m = build(p);
    let mut constraints = m.constraints;
    let objective = match bound {
        None => m.primary,
        Some(b) => {
            constraints.push(m.primary.leq(b as f64 + 0.5));
            m.released
        }
    };
    let mut model = m.vars.minimise(objective).using(microlp);
    for c in constraints {
        model = model.with(c);
    }
    let sol = model.solve().map_err(|e| AllocError::Solver(e.to_string()))?;
    let mut x = Vec::new();
    for &(d, s, t, v) in &m.x {
        let u = integral(sol.value(v))?;
        if u > 0 {
            x.push((d, s, t, u));
        }
    }
    let mut federal = vec![vec![0u64; p.days()]; p.n_regions()];
    for (s, row) in m.y.iter().enumerate() {
        for (d, v) in row.iter().enumerate() {
            if let Some(v) = v {
                federal[s][d] = integral(sol.value(*v))?;
            }
        }
    }
    AllocationPlan::from_decisions(p, &x, federal, SolveMethod::Mip)
}

/// Minimizes the weighted objective, then the federal units released among
/// the plans that attain it.
pub(crate) fn solve_exact(p: &AllocationProblem) -> Result<AllocationPlan, AllocError> {
    let plan = run(p, None)?;
    if plan.objective.federal_used == 0 {
        return Ok(plan);
    }
    let lean = run(p, Some(plan.objective.weighted))?;
    Ok(if lean.objective.weighted <= plan.objective.weighted {
        lean
    } else {
        plan
    })
}
