use std::time::Instant;

use epiops::alloc::{
    build_network, demand_from_forecast, frontier, pareto_sweep, solve, write_shortages_csv, write_transfers_csv,
    AllocError, AllocationProblem, SolveMethod, Weights,
};
use epiops::model::{CompartmentState, Trajectory};
use epiops::synthetic::standard_params;
use epiops_oracles::alloc::{optimum, Micro};
use epiops_oracles::gen::{micro_instances, symmetric};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn as_problem(m: &Micro) -> AllocationProblem {
    let n = m.base.len();
    AllocationProblem {
        region_ids: (0..n).map(|s| format!("r{s}")).collect(),
        base_supply: m.base.clone(),
        distance_km: m.dist.clone(),
        demand: m.demand.clone(),
        federal_stock: m.federal,
        pooling_fraction: m.rho.0 as f64 / m.rho.1 as f64,
        buffer: m.eps.0 as f64 / m.eps.1 as f64,
        lead_time: m.lead,
        weights: Weights {
            w_short: m.w.0,
            w_worst: m.w.1,
            w_dist: m.w.2,
        },
    }
}

#[test]
fn solver_matches_exhaustive_search_on_micro_instances() {
    let (mut network, mut mip) = (0, 0);
    for (i, m) in micro_instances(2024, 200).iter().enumerate() {
        let p = as_problem(m);
        let plan = solve(&p).unwrap();
        plan.audit(&p).unwrap();
        let (best, federal) = optimum(m);
        assert_eq!(plan.objective.weighted, best, "instance {i}: {m:?}");
        assert_eq!(plan.objective.federal_used, federal, "instance {i}: {m:?}");
        match plan.method {
            SolveMethod::Network => network += 1,
            SolveMethod::Mip => mip += 1,
        }
    }
    assert!(network > 0 && mip > 0, "network {network}, mip {mip}");
}

#[test]
fn two_regions_three_days() {
    let m = Micro {
        base: vec![10, 0],
        dist: vec![vec![0, 250], vec![250, 0]],
        demand: vec![vec![0, 0, 0], vec![3, 6, 8]],
        federal: 0,
        rho: (1, 2),
        eps: (0, 1),
        lead: 1,
        w: (1_000_000, 1_000, 1),
    };
    let p = as_problem(&m);
    let plan = solve(&p).unwrap();
    assert_eq!(plan.objective.weighted, optimum(&m).0);
    // Five units can leave, on day 1 or 2. Day 1 is always short by 3.
    assert_eq!(plan.objective.transfer_units, 5);
    assert_eq!(plan.objective.shortage_vent_days, 3 + 1 + 3);
    assert!(plan.transfers.iter().all(|t| t.from == "r0" && t.day <= 2));
}

#[test]
fn zero_demand_needs_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = AllocationProblem {
        region_ids: (0..4).map(|s| s.to_string()).collect(),
        base_supply: vec![3, 0, 9, 1],
        distance_km: symmetric(&mut rng, 4, 10, 500),
        demand: vec![vec![0; 5]; 4],
        federal_stock: 7,
        pooling_fraction: 1.0,
        buffer: 0.3,
        lead_time: 1,
        weights: Weights::default(),
    };
    let plan = solve(&p).unwrap();
    assert!(plan.transfers.is_empty());
    assert_eq!(plan.objective.weighted, 0);
    assert_eq!(plan.objective.federal_used, 0);
}

#[test]
fn self_sufficient_regions_keep_their_stock() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..20 {
        let n = rng.random_range(2..8);
        let days = rng.random_range(1..10);
        let base: Vec<u64> = (0..n).map(|_| rng.random_range(0..50)).collect();
        let p = AllocationProblem {
            region_ids: (0..n).map(|s| s.to_string()).collect(),
            distance_km: symmetric(&mut rng, n, 1, 900),
            demand: base
                .iter()
                .map(|&b| (0..days).map(|_| rng.random_range(0..=b)).collect())
                .collect(),
            base_supply: base,
            federal_stock: rng.random_range(0..5),
            pooling_fraction: 0.5,
            buffer: 0.0,
            lead_time: rng.random_range(0..3),
            weights: Weights::default(),
        };
        let plan = solve(&p).unwrap();
        assert!(plan.transfers.is_empty());
        assert_eq!(plan.objective.shortage_vent_days, 0);
        assert_eq!(plan.objective.federal_used, 0);
    }
}

#[test]
fn full_pooling_without_delay_covers_any_coverable_profile() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..30 {
        let n = rng.random_range(2..7);
        let days = rng.random_range(1..8);
        let base: Vec<u64> = (0..n).map(|_| rng.random_range(0..30)).collect();
        let federal = rng.random_range(0..10);
        // Split the available units into per-region ceilings once; daily
        // demand stays under them, so one redistribution on day 1 covers it.
        let mut left = base.iter().sum::<u64>() + federal;
        let mut ceiling = vec![0u64; n];
        for s in 0..n {
            ceiling[s] = if s == n - 1 { left } else { rng.random_range(0..=left) };
            left -= ceiling[s];
        }
        let demand = ceiling
            .iter()
            .map(|&c| (0..days).map(|_| rng.random_range(0..=c)).collect())
            .collect();
        let p = AllocationProblem {
            region_ids: (0..n).map(|s| s.to_string()).collect(),
            base_supply: base,
            distance_km: symmetric(&mut rng, n, 1, 900),
            demand,
            federal_stock: federal,
            pooling_fraction: 1.0,
            buffer: 0.0,
            lead_time: 0,
            weights: Weights::default(),
        };
        let plan = solve(&p).unwrap();
        assert_eq!(plan.objective.shortage_vent_days, 0, "{p:?}");
    }
}

#[test]
fn cumulative_cap_limits_back_and_forth() {
    // Enough units in total every day, but covering both peaks would need
    // region 0 to send out more than it owns over the horizon.
    let p = AllocationProblem {
        region_ids: vec!["a".into(), "b".into()],
        base_supply: vec![10, 10],
        distance_km: vec![vec![0, 100], vec![100, 0]],
        demand: vec![vec![0, 20, 0, 20], vec![20, 0, 20, 0]],
        federal_stock: 0,
        pooling_fraction: 1.0,
        buffer: 0.0,
        lead_time: 0,
        weights: Weights::default(),
    };
    let plan = solve(&p).unwrap();
    assert_eq!(plan.method, SolveMethod::Mip);
    assert!(plan.objective.shortage_vent_days > 0);
    let m = Micro {
        base: vec![10, 10],
        dist: vec![vec![0, 100], vec![100, 0]],
        demand: p.demand.clone(),
        federal: 0,
        rho: (1, 1),
        eps: (0, 1),
        lead: 0,
        w: (1_000_000, 1_000, 1),
    };
    assert_eq!(plan.objective.weighted, optimum(&m).0);
}

#[test]
fn csv_outputs() {
    let m = Micro {
        base: vec![10, 0],
        dist: vec![vec![0, 250], vec![250, 0]],
        demand: vec![vec![0, 0, 0], vec![3, 6, 8]],
        federal: 0,
        rho: (1, 2),
        eps: (0, 1),
        lead: 1,
        w: (1_000_000, 1_000, 1),
    };
    let plan = solve(&as_problem(&m)).unwrap();
    let mut t = Vec::new();
    write_transfers_csv(&plan, &mut t).unwrap();
    let t = String::from_utf8(t).unwrap();
    let rows: Vec<&str> = t.lines().collect();
    assert_eq!(rows[0], "day,from,to,units");
    let units: u64 = rows[1..]
        .iter()
        .map(|r| r.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(units, 5);
    let mut s = Vec::new();
    write_shortages_csv(&plan, &mut s).unwrap();
    let s = String::from_utf8(s).unwrap();
    assert!(s.starts_with("day,region,units\n1,r1,3\n"), "{s}");
    let total: u64 = s
        .lines()
        .skip(1)
        .map(|r| r.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, plan.objective.shortage_vent_days);
}

#[test]
fn audit_rejects_tampering() {
    let m = Micro {
        base: vec![10, 0],
        dist: vec![vec![0, 250], vec![250, 0]],
        demand: vec![vec![0, 0, 0], vec![3, 6, 8]],
        federal: 0,
        rho: (1, 2),
        eps: (0, 1),
        lead: 1,
        w: (1_000_000, 1_000, 1),
    };
    let p = as_problem(&m);
    let plan = solve(&p).unwrap();
    let mut more = plan.clone();
    more.transfers[0].units += 1;
    assert!(matches!(more.audit(&p), Err(AllocError::Audit(_))));
    let mut short = plan.clone();
    short.shortage[1][0] -= 1;
    assert!(short.audit(&p).is_err());
    let mut cheap = plan;
    cheap.objective.weighted -= 1;
    assert!(cheap.audit(&p).is_err());
}

fn flat_trajectory(values: &[f64], step: f64) -> Trajectory {
    let params = standard_params();
    let states = values
        .iter()
        .map(|&h| {
            let mut s = CompartmentState::from_array([0.0; CompartmentState::LEN]);
            s.s = params.population - h;
            s.dh_r = 0.75 * h;
            s.dh_d = h - s.dh_r;
            s
        })
        .collect();
    Trajectory {
        t: (0..values.len()).map(|i| i as f64 * step).collect(),
        states,
        params,
    }
}

#[test]
fn demand_from_hospital_census() {
    let flat = flat_trajectory(&[100.0; 11], 1.0);
    let v = demand_from_forecast(&[flat.clone(), flat.clone()], 0.0, 11, 0.25, None).unwrap();
    assert!(v.iter().flatten().all(|&x| x == 25));
    let zero = demand_from_forecast(std::slice::from_ref(&flat), 2.0, 5, 0.0, None).unwrap();
    assert!(zero.iter().flatten().all(|&x| x == 0));

    // Half-day grid; plan days 1..3 read t = 1, 2, 3.
    let a = flat_trajectory(&[0.0, 0.0, 10.2, 0.0, 8.0, 0.0, 0.0], 0.5);
    let b = flat_trajectory(&[0.0, 0.0, 4.04, 0.0, 100.0, 0.0, 3.999], 0.5);
    let c = flat_trajectory(&[0.0, 0.0, 0.0, 0.0, 0.4, 0.0, 12.0], 0.5);
    let v = demand_from_forecast(&[a, b, c], 1.0, 3, 0.25, None).unwrap();
    assert_eq!(v, vec![vec![3, 2, 0], vec![2, 25, 1], vec![0, 1, 3]]);

    assert!(matches!(
        demand_from_forecast(std::slice::from_ref(&flat), 5.0, 7, 0.25, None),
        Err(AllocError::Demand(_))
    ));
    assert!(demand_from_forecast(std::slice::from_ref(&flat), 0.0, 3, 1.5, None).is_err());
    assert!(demand_from_forecast(std::slice::from_ref(&flat), 0.0, 3, 0.25, Some(11.0)).is_ok());
    assert!(demand_from_forecast(&[flat], 0.0, 3, 0.25, Some(7.0)).is_err());
}

fn sweep_problem(seed: u64) -> AllocationProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 6;
    let days = 8;
    let base: Vec<u64> = (0..n).map(|_| rng.random_range(5..40)).collect();
    // Every region peaks at a different time, above its own supply.
    let demand = (0..n)
        .map(|s| {
            let peak = rng.random_range(0..days) as f64;
            (0..days)
                .map(|d| (1.4 * base[s] as f64 * (-((d as f64 - peak) / 2.0).powi(2)).exp()) as u64)
                .collect()
        })
        .collect();
    AllocationProblem {
        region_ids: (0..n).map(|s| format!("r{s}")).collect(),
        base_supply: base,
        distance_km: symmetric(&mut rng, n, 50, 2000),
        demand,
        federal_stock: 0,
        pooling_fraction: 0.0,
        buffer: 0.1,
        lead_time: 1,
        weights: Weights::default(),
    }
}

#[test]
fn sweep_over_pooling() {
    let p = sweep_problem(3);
    let rhos = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0];
    let weights = [(1_000_000, 1), (1_000, 1), (10, 1), (1, 5)];
    let start = Instant::now();
    let points = pareto_sweep(&p, &rhos, &weights).unwrap();
    assert!(start.elapsed().as_secs() < 30);
    assert_eq!(points.len(), rhos.len() * weights.len());
    let baseline = solve(&p).unwrap().objective.shortage_vent_days;
    assert!(baseline > 0);
    for q in points.iter().filter(|q| q.rho == 0.0) {
        assert_eq!((q.shortage_vent_days, q.transfer_km_units), (baseline, 0));
    }
    for &(ws, wd) in &weights {
        let row: Vec<u64> = rhos
            .iter()
            .map(|&r| {
                points
                    .iter()
                    .find(|q| q.rho == r && (q.w_short, q.w_dist) == (ws, wd))
                    .unwrap()
                    .shortage_vent_days
            })
            .collect();
        // Cheap shortage can be traded for shorter transfers, so only the
        // weighted objective is monotone in general.
        if ws == 1_000_000 {
            assert!(row.windows(2).all(|w| w[1] <= w[0]), "{ws}/{wd}: {row:?}");
        }
        let weighted: Vec<u64> = rhos
            .iter()
            .map(|&r| {
                points
                    .iter()
                    .find(|q| q.rho == r && (q.w_short, q.w_dist) == (ws, wd))
                    .unwrap()
                    .weighted
            })
            .collect();
        assert!(weighted.windows(2).all(|w| w[1] <= w[0]), "{ws}/{wd}: {weighted:?}");
    }
    let f = frontier(&points);
    for a in &f {
        for b in f.iter().filter(|b| b.rho == a.rho) {
            let dominates = b.shortage_vent_days <= a.shortage_vent_days
                && b.transfer_km_units <= a.transfer_km_units
                && (b.shortage_vent_days, b.transfer_km_units) != (a.shortage_vent_days, a.transfer_km_units);
            assert!(!dominates);
        }
    }
    assert!(pareto_sweep(&p, &[], &weights).is_err());
}

#[test]
fn network_stays_small() {
    let p = sweep_problem(4);
    let net = build_network(&AllocationProblem {
        pooling_fraction: 0.3,
        ..p.clone()
    });
    let (s, d) = (p.n_regions(), p.days());
    assert!(net.nodes.len() <= 3 * s * d + 2);
}

fn arb_problem() -> impl Strategy<Value = AllocationProblem> {
    (2usize..5, 1usize..6, any::<u64>()).prop_map(|(n, days, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AllocationProblem {
            region_ids: (0..n).map(|s| s.to_string()).collect(),
            base_supply: (0..n).map(|_| rng.random_range(0..20)).collect(),
            distance_km: symmetric(&mut rng, n, 1, 900),
            demand: (0..n)
                .map(|_| (0..days).map(|_| rng.random_range(0..25)).collect())
                .collect(),
            federal_stock: rng.random_range(0..10),
            pooling_fraction: rng.random_range(0..=10) as f64 / 10.0,
            buffer: rng.random_range(0..=4) as f64 / 10.0,
            lead_time: rng.random_range(0..3),
            weights: Weights::default(),
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn more_stock_or_pooling_never_hurts(p in arb_problem(), extra in 1u64..6, step in 1u32..5) {
        let base = solve(&p).unwrap().objective.weighted;
        let stock = AllocationProblem { federal_stock: p.federal_stock + extra, ..p.clone() };
        prop_assert!(solve(&stock).unwrap().objective.weighted <= base);
        let rho = (p.pooling_fraction + step as f64 / 10.0).min(1.0);
        let pooled = AllocationProblem { pooling_fraction: rho, ..p.clone() };
        prop_assert!(solve(&pooled).unwrap().objective.weighted <= base);
    }

    #[test]
    fn bigger_buffer_never_helps(p in arb_problem(), step in 1u32..5) {
        let base = solve(&p).unwrap().objective.weighted;
        let wider = AllocationProblem { buffer: p.buffer + step as f64 / 10.0, ..p.clone() };
        prop_assert!(solve(&wider).unwrap().objective.weighted >= base);
    }

    #[test]
    fn plans_pass_audit(p in arb_problem()) {
        let plan = solve(&p).unwrap();
        prop_assert!(plan.audit(&p).is_ok());
        for s in 0..p.n_regions() {
            prop_assert!(plan.sent_by(s) <= p.pooling_cap(s));
        }
    }
}
