//! Synthetic regions with known parameters, for recovery experiments and
//! benchmarks when historical data is not at hand.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::fit::RegionSeries;
use crate::model::{
    gamma_unchecked, initial_state, integrate, ClinicalRates, CompartmentState, DelphiParams, FittedParams,
};
use crate::policy::{Policy, PolicySchedule};

#[derive(Debug, Clone)]
pub struct SyntheticRegion {
    pub truth: DelphiParams,
    pub series: RegionSeries,
}

/// Ranges from which benchmark parameters are drawn.
#[derive(Debug, Clone, Copy)]
pub struct TruthRanges {
    pub alpha: (f64, f64),
    pub t0: (f64, f64),
    pub k: (f64, f64),
    pub p_d: (f64, f64),
    pub p_h: (f64, f64),
    pub m: (f64, f64),
    pub k_i: (f64, f64),
    pub population: (f64, f64),
}

impl Default for TruthRanges {
    fn default() -> Self {
        Self {
            alpha: (0.7, 1.2),
            t0: (15.0, 40.0),
            k: (5.0, 25.0),
            p_d: (0.1, 0.4),
            p_h: (0.1, 0.4),
            m: (0.02, 0.08),
            k_i: (2.0, 10.0),
            population: (2e5, 1e6),
        }
    }
}

pub fn benchmark_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 3, 15).expect("valid date")
}

/// A fixed mid-range region of one million people, used as the reference
/// case in tests and examples.
pub fn standard_params() -> DelphiParams {
    DelphiParams {
        fitted: FittedParams {
            alpha: 1.0,
            t0: 25.0,
            k: 12.0,
            p_d: 0.2,
            p_h: 0.15,
            m: 0.03,
            k_i: 4.0,
        },
        rates: ClinicalRates::default(),
        population: 1e6,
        start_date: benchmark_start(),
    }
}

/// [`standard_params`] seeded at 150 cases and 2 deaths.
pub fn standard_initial_state() -> CompartmentState {
    initial_state(&standard_params(), 150.0, 2.0)
}

/// Draws `n` parameter sets. Region `j` starts `j % 10` days after the
/// benchmark start.
pub fn draw_truths(n: usize, ranges: &TruthRanges, rates: &ClinicalRates, seed: u64) -> Vec<DelphiParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = |r: (f64, f64)| rng.random_range(r.0..r.1);
    (0..n)
        .map(|j| DelphiParams {
            fitted: FittedParams {
                alpha: u(ranges.alpha),
                t0: u(ranges.t0),
                k: u(ranges.k),
                p_d: u(ranges.p_d),
                p_h: u(ranges.p_h),
                m: u(ranges.m),
                k_i: u(ranges.k_i),
            },
            rates: *rates,
            population: u(ranges.population).round(),
            start_date: benchmark_start() + Duration::days((j % 10) as i64),
        })
        .collect()
}

/// Simulates `days` daily observations from `truth`, starting from
/// `(initial_cases, initial_deaths)`.
///
/// With `noise > 0`, each cumulative count after the first is multiplied by
/// `1 + noise * z` (standard normal `z`) and the series is then made
/// nondecreasing by a running maximum.
pub fn simulate_region(
    id: &str,
    truth: &DelphiParams,
    initial_cases: f64,
    initial_deaths: f64,
    days: i64,
    noise: f64,
    seed: u64,
) -> SyntheticRegion {
    let x0 = initial_state(truth, initial_cases, initial_deaths);
    let traj = integrate(truth, &x0, days as f64, 0.5).expect("synthetic truth integrates");
    let obs = traj.observables().daily();
    let mut cases = obs.detected_cases;
    let mut deaths = obs.detected_deaths;
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = Normal::new(0.0, 1.0).expect("unit normal");
        for v in cases.iter_mut().skip(1).chain(deaths.iter_mut().skip(1)) {
            *v *= 1.0 + noise * z.sample(&mut rng);
        }
        running_max(&mut cases);
        running_max(&mut deaths);
    }
    let dates = (0..=days).map(|d| truth.start_date + Duration::days(d)).collect();
    let series =
        RegionSeries::new(id, dates, cases, deaths, truth.population).expect("synthetic series is well formed");
    SyntheticRegion {
        truth: truth.clone(),
        series,
    }
}

fn running_max(v: &mut [f64]) {
    for i in 1..v.len() {
        if v[i] < v[i - 1] {
            v[i] = v[i - 1];
        }
    }
}

/// `n` regions drawn from `ranges`, seeded at 150 cases and 2 deaths.
pub fn benchmark_regions(n: usize, days: i64, noise: f64, seed: u64) -> Vec<SyntheticRegion> {
    let truths = draw_truths(n, &TruthRanges::default(), &ClinicalRates::default(), seed);
    truths
        .iter()
        .enumerate()
        .map(|(j, p)| {
            simulate_region(
                &format!("R{j:02}"),
                p,
                150.0,
                2.0,
                days,
                noise,
                seed.wrapping_mul(1000).wrapping_add(j as u64),
            )
        })
        .collect()
}

/// γ cut points (highest first) and the policy in force above each; below
/// the last one regions stay at home.
pub const POLICY_LADDER: [(f64, Policy); 4] = [
    (1.6, Policy::NoMeasure),
    (1.3, Policy::RestrictMassGatherings),
    (1.0, Policy::RestrictMgAndSchools),
    (0.7, Policy::RestrictMgSchoolsAndOthers),
];

pub fn policy_for_gamma(gamma: f64, offset: f64) -> Policy {
    POLICY_LADDER
        .iter()
        .find(|(cut, _)| gamma > cut + offset)
        .map_or(Policy::StayAtHome, |(_, p)| *p)
}

/// A policy log that tightens as the region's true γ falls, with the ladder
/// shifted by a per-region offset drawn from `[-jitter, jitter]`.
///
/// Stricter policies always coincide with lower γ, so a tree fitted on these
/// logs should rank the classes by stringency.
pub fn synthetic_policy_log(region: &SyntheticRegion, jitter: f64, seed: u64) -> PolicySchedule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = if jitter > 0.0 {
        rng.random_range(-jitter..jitter)
    } else {
        0.0
    };
    let p = &region.truth.fitted;
    let start = region.truth.start_date;
    let mut entries: Vec<(NaiveDate, Policy)> = Vec::new();
    for date in &region.series.dates {
        let t = (*date - start).num_days() as f64;
        let policy = policy_for_gamma(gamma_unchecked(t, p.t0, p.k), offset);
        if entries.last().is_none_or(|(_, last)| *last != policy) {
            entries.push((*date, policy));
        }
    }
    PolicySchedule::new(&region.series.region_id, entries).expect("dates are increasing")
}

/// Regions plus their policy logs.
#[derive(Debug, Clone)]
pub struct PolicyBenchmark {
    pub regions: Vec<SyntheticRegion>,
    pub policy_log: BTreeMap<String, PolicySchedule>,
}

/// [`benchmark_regions`] with a [`synthetic_policy_log`] for each region.
pub fn policy_benchmark(n: usize, days: i64, noise: f64, seed: u64) -> PolicyBenchmark {
    let regions = benchmark_regions(n, days, noise, seed);
    let policy_log = regions
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let log = synthetic_policy_log(r, 0.1, seed ^ (0x9e37_79b9 + j as u64));
            (r.series.region_id.clone(), log)
        })
        .collect();
    PolicyBenchmark { regions, policy_log }
}
