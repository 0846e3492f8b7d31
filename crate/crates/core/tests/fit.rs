use chrono::{Duration, NaiveDate};
use epiops::fit::{backtest, fit, mape, median, simulate_series, FitConfig, RegionSeries};
use epiops::model::ClinicalRates;
use epiops::synthetic::{benchmark_regions, benchmark_start, draw_truths, simulate_region, TruthRanges};

fn truth_region(noise: f64, seed: u64) -> (epiops::synthetic::SyntheticRegion, epiops::synthetic::SyntheticRegion) {
    let truth = draw_truths(1, &TruthRanges::default(), &ClinicalRates::default(), seed).remove(0);
    let clean = simulate_region("A", &truth, 150.0, 2.0, 80, 0.0, 0);
    let noisy = simulate_region("A", &truth, 150.0, 2.0, 80, noise, seed + 1);
    (clean, noisy)
}

#[test]
fn constant_series_is_flagged_not_fatal() {
    let dates: Vec<NaiveDate> = (0..60).map(|d| benchmark_start() + Duration::days(d)).collect();
    let series = RegionSeries::new("flat", dates, vec![200.0; 60], vec![5.0; 60], 1e6).unwrap();
    let f = fit(&series, &ClinicalRates::default(), &FitConfig::default()).unwrap();
    assert!(
        !f.converged || f.at_bound.iter().any(|p| p == "alpha"),
        "converged={} at_bound={:?} alpha={}",
        f.converged,
        f.at_bound,
        f.params.fitted.alpha
    );
    assert!(f.in_sample_loss.is_finite());
}

#[test]
fn one_percent_noise_tracks_the_truth() {
    let (clean, noisy) = truth_region(0.01, 21);
    let f = fit(&noisy.series, &clean.truth.rates, &FitConfig::default()).unwrap();
    assert!(f.converged);
    let traj = simulate_series(&f.params, &noisy.series, 0.5, noisy.series.end_date()).unwrap();
    let predicted: Vec<f64> = noisy
        .series
        .offsets()
        .iter()
        .map(|t| traj.state_at(*t).unwrap().cases_detected)
        .collect();
    let err = mape(&predicted, &clean.series.cumulative_cases).unwrap();
    assert!(err < 5.0, "in-sample MAPE vs truth {err}%");
}

#[test]
fn fits_are_deterministic_and_dominate_restarts() {
    let (_, noisy) = truth_region(0.02, 33);
    let cfg = FitConfig::default();
    let a = fit(&noisy.series, &noisy.truth.rates, &cfg).unwrap();
    let b = fit(&noisy.series, &noisy.truth.rates, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.restarts.len(), 20);
    assert!(a.restarts.iter().all(|r| a.in_sample_loss <= r.loss));
    let bounds = cfg.bounds.as_array();
    for ((b, x), name) in bounds
        .iter()
        .zip(a.params.fitted.to_array())
        .zip(epiops::model::FITTED_PARAM_NAMES)
    {
        assert!(
            (x > b.lo && x < b.hi) || a.at_bound.iter().any(|n| n == name),
            "{name}={x}"
        );
    }
    let other = fit(&noisy.series, &noisy.truth.rates, &FitConfig { seed: 9, ..cfg }).unwrap();
    assert_ne!(other.restarts, a.restarts);
}

#[test]
fn data_after_the_cutoff_cannot_reach_the_fit() {
    let (_, noisy) = truth_region(0.01, 44);
    let start = noisy.series.start_date();
    let (cutoff, end) = (start + Duration::days(50), start + Duration::days(80));
    let cfg = FitConfig::default();
    let base = backtest(&noisy.series, &noisy.truth.rates, cutoff, end, &cfg).unwrap();

    let mut mutated = noisy.series.clone();
    for (i, d) in mutated.dates.clone().iter().enumerate() {
        if *d > cutoff {
            mutated.cumulative_cases[i] *= 3.0;
            mutated.cumulative_deaths[i] += 1000.0;
        }
    }
    let other = backtest(&mutated, &noisy.truth.rates, cutoff, end, &cfg).unwrap();
    assert_eq!(base.fit, other.fit);
    assert_eq!(base.fit.fit_window.1, cutoff);
    assert_ne!(base.mape_cases, other.mape_cases);

    assert!(backtest(&noisy.series, &noisy.truth.rates, end, end, &cfg).is_err());
    assert!(backtest(&noisy.series, &noisy.truth.rates, cutoff, end + Duration::days(1), &cfg).is_err());
}

#[test]
fn small_benchmark_forecasts_well() {
    let regions = benchmark_regions(4, 90, 0.01, 2);
    let mapes: Vec<f64> = regions
        .iter()
        .map(|r| {
            let s = r.series.start_date();
            backtest(
                &r.series,
                &r.truth.rates,
                s + Duration::days(60),
                s + Duration::days(90),
                &FitConfig::default(),
            )
            .unwrap()
            .mape_cases
        })
        .collect();
    assert!(median(&mapes).unwrap() < 10.0, "{mapes:?}");
}
