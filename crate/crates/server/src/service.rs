//! Operations shared by the HTTP handlers and the command line.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::NaiveDate;
use epiops::alloc::{
    demand_from_forecast, frontier, pareto_sweep, solve, write_shortages_csv, write_transfers_csv, AllocError,
    AllocationPlan, AllocationProblem, DemandInput, ProblemInput, SweepPoint,
};
use epiops::cohort::{
    extract_calibration, parse_cohort_file, write_stats_csv, AggregateStat, CalibrationBundle, CalibrationDefaults,
    CohortDb, CohortError, LabStat, Manifest, Subpopulation, PROJECTED_MORTALITY,
};
use epiops::fit::{
    backtest_regions, fit_regions, median, read_series_csv, BacktestRow, FitConfig, FitResult, RegionSeries,
};
use epiops::model::{gamma, initial_state, integrate, CompartmentState, Observables};
use epiops::policy::{
    build_observations, fit_tree, read_policy_log_csv, simulate_scenario, Policy, PolicySchedule, RegressionTree,
    DEFAULT_TRANSITION_DAYS,
};
use serde::{Deserialize, Serialize};

use crate::store::{digest, digest_json, run_id, Claim, RunKind, RunRecord, RunStatus, RunStore};
use crate::{Config, ServiceError};

type Result<T> = std::result::Result<T, ServiceError>;

/// How long a synchronous request waits for someone else's run of the same
/// inputs.
const WAIT: Duration = Duration::from_secs(3600);

pub const FIT_ARTIFACT: &str = "fits.json";
pub const BACKTEST_ARTIFACT: &str = "backtest.json";
pub const BACKTEST_CSV: &str = "backtest.csv";
pub const SCENARIO_ARTIFACT: &str = "scenario.json";
pub const SCENARIO_CSV: &str = "scenario.csv";
pub const PLAN_ARTIFACT: &str = "plan.json";
pub const TRANSFERS_CSV: &str = "transfers.csv";
pub const SHORTAGES_CSV: &str = "shortages.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetRef {
    /// Id returned by an upload.
    Id(String),
    /// A CSV file readable by the server.
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestRegion {
    pub region_id: String,
    pub days: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    /// Whether the series ever passes the inclusion threshold.
    pub qualifies: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub dataset_id: String,
    pub regions: Vec<IngestRegion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitRequest {
    pub dataset: DatasetRef,
    /// Overrides the dataset's population column.
    #[serde(default)]
    pub populations: BTreeMap<String, f64>,
    /// Fit only these regions; all when absent.
    #[serde(default)]
    pub regions: Option<Vec<String>>,
    /// Ignore observations after this date.
    #[serde(default)]
    pub cutoff: Option<NaiveDate>,
    #[serde(default)]
    pub config: FitConfig,
    /// Return 202 immediately and poll the run.
    #[serde(default, rename = "async")]
    pub background: bool,
}

/// One fitted region and the state its trajectories start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub fit: FitResult,
    pub x0: CompartmentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub region_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub step: f64,
    pub fits: Vec<RegionFit>,
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResponse {
    pub run: RunRecord,
    /// `None` while a background run is going.
    pub results: Option<FitArtifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestRequest {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub populations: BTreeMap<String, f64>,
    #[serde(default)]
    pub regions: Option<Vec<String>>,
    pub cutoff: NaiveDate,
    pub horizon_end: NaiveDate,
    #[serde(default)]
    pub config: FitConfig,
    #[serde(default, rename = "async")]
    pub background: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestTable {
    pub cutoff: NaiveDate,
    pub horizon_end: NaiveDate,
    pub rows: Vec<BacktestRow>,
    pub median_mape_cases: Option<f64>,
    pub median_mape_deaths: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestResponse {
    pub run: RunRecord,
    pub table: Option<BacktestTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeOptions {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            max_depth: 3,
            min_leaf: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub date: NaiveDate,
    pub policy: Policy,
}

fn default_transition() -> f64 {
    DEFAULT_TRANSITION_DAYS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequest {
    /// A fit run.
    pub run_id: String,
    pub region_id: String,
    /// Policy changes. Empty, or dated no later than the region's day 0,
    /// keeps the fitted response.
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    /// Days after the region's day 0.
    pub horizon: f64,
    #[serde(default = "default_transition")]
    pub transition_days: f64,
    #[serde(default)]
    pub tree: TreeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyChange {
    pub day: f64,
    pub policy: Policy,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub run_id: String,
    pub fit_run_id: String,
    pub region_id: String,
    pub start_date: NaiveDate,
    /// Whole-day nodes; `t` counts days from `start_date`.
    pub series: Observables,
    pub gamma: Vec<f64>,
    pub changes: Vec<PolicyChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRequest {
    pub rho: Vec<f64>,
    /// `(w_short, w_dist)` pairs; the problem's own weights when empty.
    #[serde(default)]
    pub weights: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateRequest {
    pub problem: ProblemInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRequest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub frontier: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub run_id: String,
    pub plan: AllocationPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Aggregate {
    Stat(AggregateStat),
    Lab(LabStat),
    Table(Vec<AggregateStat>),
}

struct Artifact {
    name: &'static str,
    bytes: Vec<u8>,
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec_pretty(value).expect("artifacts serialize")
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write(&mut out).map_err(|e| ServiceError::Internal(format!("csv: {e}")))?;
    Ok(out)
}

fn from_json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| ServiceError::Internal(format!("corrupt {what}: {e}")))
}

pub struct Service {
    pub config: Config,
    pub store: RunStore,
    cohort: Option<CohortDb>,
    calibration: CalibrationBundle,
    policy_log: Option<(String, BTreeMap<String, PolicySchedule>)>,
    trees: Mutex<HashMap<String, Arc<RegressionTree>>>,
}

impl Service {
    pub fn new(config: Config) -> Result<Self> {
        let store = RunStore::open(&config.data_dir)?;
        let manifest = match &config.manifest {
            Some(p) => Manifest::from_file(p)?,
            None => Manifest::builtin(),
        };
        let cohort = config
            .cohort_csv
            .as_ref()
            .map(|p| parse_cohort_file(p, &manifest))
            .transpose()?;
        let calibration = match &cohort {
            Some(db) => match extract_calibration(&db.records, &CalibrationDefaults::default()) {
                Ok(b) => b,
                Err(CohortError::NoLengthOfStay) => CalibrationBundle::default(),
                Err(e) => return Err(e.into()),
            },
            None => CalibrationBundle::default(),
        };
        let policy_log = match &config.policy_log_csv {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|e| ServiceError::bad(format!("{}: {e}", p.display())))?;
                Some((digest(&bytes), read_policy_log_csv(bytes.as_slice())?))
            }
            None => None,
        };
        Ok(Self {
            config,
            store,
            cohort,
            calibration,
            policy_log,
            trees: Mutex::new(HashMap::new()),
        })
    }

    pub fn calibration(&self) -> &CalibrationBundle {
        &self.calibration
    }

    fn config_digest<T: Serialize>(&self, config: &T) -> String {
        digest_json(&(config, self.calibration.rates()))
    }

    // ---- datasets ----

    pub fn ingest(&self, bytes: &[u8]) -> Result<IngestSummary> {
        let series = read_series_csv(bytes, &BTreeMap::new())?;
        if series.is_empty() {
            return Err(ServiceError::bad("dataset has no rows"));
        }
        let dataset_id = self.store.put_dataset(bytes)?;
        let regions = series
            .iter()
            .map(|s| IngestRegion {
                region_id: s.region_id.clone(),
                days: s.len(),
                first_date: s.start_date(),
                last_date: s.end_date(),
                qualifies: s.included().is_some(),
            })
            .collect();
        Ok(IngestSummary { dataset_id, regions })
    }

    fn dataset_bytes(&self, r: &DatasetRef) -> Result<Vec<u8>> {
        let path = match r {
            DatasetRef::Id(id) => self.store.dataset_path(id)?,
            DatasetRef::Path(p) => p.clone(),
        };
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ServiceError::NotFound(format!("dataset {r:?} not found")),
            _ => ServiceError::io("read dataset", e),
        })
    }

    /// Loads the series, keeps the requested regions and applies `cutoff`.
    fn load_series(
        &self,
        dataset: &DatasetRef,
        populations: &BTreeMap<String, f64>,
        regions: Option<&[String]>,
        cutoff: Option<NaiveDate>,
    ) -> Result<(String, Vec<RegionSeries>, Vec<Skipped>)> {
        let bytes = self.dataset_bytes(dataset)?;
        let mut series = read_series_csv(bytes.as_slice(), populations)?;
        if let Some(want) = regions {
            if let Some(missing) = want.iter().find(|id| !series.iter().any(|s| &s.region_id == *id)) {
                return Err(ServiceError::BadRequest {
                    message: format!("region {missing:?} is not in the dataset"),
                    field: Some("regions".into()),
                });
            }
            series.retain(|s| want.contains(&s.region_id));
        }
        let mut skipped = Vec::new();
        let mut kept = Vec::new();
        for s in series {
            let cut = match cutoff {
                Some(c) => s.truncated_through(c),
                None => Some(s.clone()),
            };
            match cut.as_ref().and_then(|c| c.included()) {
                Some(_) => kept.push(cut.expect("checked")),
                None => skipped.push(Skipped {
                    region_id: s.region_id.clone(),
                    reason: "never reaches the inclusion threshold".into(),
                }),
            }
        }
        if kept.is_empty() {
            return Err(ServiceError::Unprocessable("no region meets the inclusion rule".into()));
        }
        Ok((digest(&bytes), kept, skipped))
    }

    // ---- runs ----

    pub fn run(&self, id: &str) -> Result<RunRecord> {
        self.store
            .get(id)?
            .ok_or_else(|| ServiceError::NotFound(format!("unknown run {id}")))
    }

    pub fn artifact(&self, id: &str, name: &str) -> Result<Vec<u8>> {
        self.store.read_artifact(id, name)
    }

    /// Claims the run before doing the work, so identical requests never
    /// compute twice. With `background` the work goes to a thread and the
    /// fresh record is returned at once.
    fn claim_first<F>(
        self: &Arc<Self>,
        kind: RunKind,
        inputs: &str,
        config: &str,
        background: bool,
        job: F,
    ) -> Result<RunRecord>
    where
        F: FnOnce(&Service) -> Result<Vec<Artifact>> + Send + 'static,
    {
        match self.store.claim(kind, inputs, config)? {
            Claim::Existing(r) if background || r.status != RunStatus::Running => Ok(r),
            Claim::Existing(r) => self.store.wait(&r.run_id, WAIT),
            Claim::Fresh(r) if background => {
                let svc = Arc::clone(self);
                let mut owned = r.clone();
                std::thread::spawn(move || {
                    let _ = svc.complete(&mut owned, job);
                });
                Ok(r)
            }
            Claim::Fresh(mut r) => {
                self.complete(&mut r, job)?;
                Ok(r)
            }
        }
    }

    fn complete<F>(&self, r: &mut RunRecord, job: F) -> Result<()>
    where
        F: FnOnce(&Service) -> Result<Vec<Artifact>>,
    {
        let outcome = job(self).and_then(|artifacts| {
            for a in artifacts {
                self.store.write_artifact(r, a.name, &a.bytes)?;
            }
            Ok(())
        });
        self.store.finish(r, outcome.as_ref().err().map(|e| e.to_string()))?;
        outcome
    }

    /// Computes first and records afterwards; for operations that are cheap
    /// and whose errors belong to the request rather than to a run.
    fn compute_first(
        &self,
        kind: RunKind,
        inputs: &str,
        config: &str,
        job: impl FnOnce(&str) -> Result<Vec<Artifact>>,
    ) -> Result<RunRecord> {
        let id = run_id(kind, inputs, config);
        if let Some(r) = self.store.get(&id)? {
            return Ok(r);
        }
        let artifacts = job(&id)?;
        match self.store.claim(kind, inputs, config)? {
            Claim::Existing(r) => Ok(r),
            Claim::Fresh(mut r) => {
                for a in artifacts {
                    self.store.write_artifact(&mut r, a.name, &a.bytes)?;
                }
                self.store.finish(&mut r, None)?;
                Ok(r)
            }
        }
    }

    fn finished(&self, r: &RunRecord) -> Result<()> {
        match r.status {
            RunStatus::Done => Ok(()),
            RunStatus::Failed => Err(ServiceError::Internal(format!(
                "run {} failed: {}",
                r.run_id,
                r.error.as_deref().unwrap_or("unknown error")
            ))),
            RunStatus::Running => Err(ServiceError::Unprocessable(format!(
                "run {} is still running",
                r.run_id
            ))),
        }
    }

    // ---- fitting ----

    pub fn fit(self: &Arc<Self>, req: &FitRequest) -> Result<FitResponse> {
        req.config.validate()?;
        let (data, series, skipped) =
            self.load_series(&req.dataset, &req.populations, req.regions.as_deref(), req.cutoff)?;
        let inputs = digest_json(&(&data, &req.populations, &req.regions, &req.cutoff));
        let config = req.config.clone();
        let rates = self.calibration.rates();
        let run = self.claim_first(
            RunKind::Fit,
            &inputs,
            &self.config_digest(&req.config),
            req.background,
            move |_| {
                let mut fits = Vec::new();
                let mut skipped = skipped;
                for (s, r) in series.iter().zip(fit_regions(&series, &rates, &config)) {
                    match r {
                        Ok(fit) => {
                            let inc = s.included().expect("checked before fitting");
                            let x0 = initial_state(&fit.params, inc.cumulative_cases[0], inc.cumulative_deaths[0]);
                            fits.push(RegionFit { fit, x0 });
                        }
                        Err(e) => skipped.push(Skipped {
                            region_id: s.region_id.clone(),
                            reason: e.to_string(),
                        }),
                    }
                }
                let a = FitArtifact {
                    step: config.step,
                    fits,
                    skipped,
                };
                Ok(vec![Artifact {
                    name: FIT_ARTIFACT,
                    bytes: json_bytes(&a),
                }])
            },
        )?;
        let results = match run.status {
            RunStatus::Running => None,
            _ => {
                self.finished(&run)?;
                Some(self.fit_artifact(&run.run_id)?)
            }
        };
        Ok(FitResponse { run, results })
    }

    pub fn fit_artifact(&self, id: &str) -> Result<FitArtifact> {
        let run = self.run(id)?;
        if run.kind != RunKind::Fit {
            return Err(ServiceError::NotFound(format!("run {id} is not a fit run")));
        }
        self.finished(&run)?;
        from_json(&self.store.read_artifact(id, FIT_ARTIFACT)?, FIT_ARTIFACT)
    }

    pub fn backtest(self: &Arc<Self>, req: &BacktestRequest) -> Result<BacktestResponse> {
        req.config.validate()?;
        if req.cutoff >= req.horizon_end {
            return Err(ServiceError::BadRequest {
                message: format!("cutoff {} is not before horizon_end {}", req.cutoff, req.horizon_end),
                field: Some("cutoff".into()),
            });
        }
        // The inclusion rule is checked on the training window only.
        let bytes = self.dataset_bytes(&req.dataset)?;
        self.load_series(&req.dataset, &req.populations, req.regions.as_deref(), Some(req.cutoff))?;
        let mut series = read_series_csv(bytes.as_slice(), &req.populations)?;
        if let Some(want) = &req.regions {
            series.retain(|s| want.contains(&s.region_id));
        }
        let inputs = digest_json(&(
            digest(&bytes),
            &req.populations,
            &req.regions,
            req.cutoff,
            req.horizon_end,
        ));
        let (config, rates, cutoff, horizon_end) = (
            req.config.clone(),
            self.calibration.rates(),
            req.cutoff,
            req.horizon_end,
        );
        let run = self.claim_first(
            RunKind::Backtest,
            &inputs,
            &self.config_digest(&req.config),
            req.background,
            move |_| {
                let rows = backtest_regions(&series, &rates, cutoff, horizon_end, &config);
                let cases: Vec<f64> = rows.iter().filter_map(|r| r.mape_cases).collect();
                let deaths: Vec<f64> = rows.iter().filter_map(|r| r.mape_deaths).collect();
                let csv = csv_bytes(|out| write_backtest_csv(&rows, out))?;
                let table = BacktestTable {
                    cutoff,
                    horizon_end,
                    median_mape_cases: median(&cases),
                    median_mape_deaths: median(&deaths),
                    rows,
                };
                Ok(vec![
                    Artifact {
                        name: BACKTEST_ARTIFACT,
                        bytes: json_bytes(&table),
                    },
                    Artifact {
                        name: BACKTEST_CSV,
                        bytes: csv,
                    },
                ])
            },
        )?;
        let table = match run.status {
            RunStatus::Running => None,
            _ => {
                self.finished(&run)?;
                Some(from_json(
                    &self.store.read_artifact(&run.run_id, BACKTEST_ARTIFACT)?,
                    BACKTEST_ARTIFACT,
                )?)
            }
        };
        Ok(BacktestResponse { run, table })
    }

    // ---- scenarios ----

    fn tree_for(&self, fit_run: &str, fits: &FitArtifact, opts: TreeOptions) -> Result<Arc<RegressionTree>> {
        let (log_digest, log) = self
            .policy_log
            .as_ref()
            .ok_or_else(|| ServiceError::Unavailable("no policy log is configured".into()))?;
        let key = format!("{fit_run}/{log_digest}/{}/{}", opts.max_depth, opts.min_leaf);
        if let Some(t) = self.trees.lock().expect("tree cache").get(&key) {
            return Ok(Arc::clone(t));
        }
        let usable: Vec<FitResult> = fits
            .fits
            .iter()
            .filter(|f| f.fit.converged && log.contains_key(&f.fit.region_id))
            .map(|f| f.fit.clone())
            .collect();
        let obs = build_observations(&usable, log)?;
        let tree = Arc::new(fit_tree(&obs, opts.max_depth, opts.min_leaf)?);
        self.trees.lock().expect("tree cache").insert(key, Arc::clone(&tree));
        Ok(tree)
    }

    pub fn scenario(&self, req: &ScenarioRequest) -> Result<ScenarioResult> {
        let fits = self.fit_artifact(&req.run_id)?;
        let region = fits
            .fits
            .iter()
            .find(|f| f.fit.region_id == req.region_id)
            .ok_or_else(|| {
                ServiceError::NotFound(format!("region {:?} is not in run {}", req.region_id, req.run_id))
            })?;
        if !(req.horizon >= 1.0) || req.horizon.fract() != 0.0 {
            return Err(ServiceError::BadRequest {
                message: format!("horizon must be a positive whole number of days, got {}", req.horizon),
                field: Some("horizon".into()),
            });
        }
        if let Some(w) = req.schedule.windows(2).find(|w| w[1].date <= w[0].date) {
            return Err(ServiceError::BadRequest {
                message: format!("schedule dates must increase ({} after {})", w[1].date, w[0].date),
                field: Some("schedule".into()),
            });
        }
        let params = &region.fit.params;
        let changes_after_start = req.schedule.iter().any(|e| e.date > params.start_date);
        let config = match (changes_after_start, &self.policy_log) {
            (true, Some((d, _))) => digest_json(&(req.tree, d)),
            _ => String::new(),
        };
        let inputs = digest_json(req);
        let run = self.compute_first(RunKind::Scenario, &inputs, &config, |id| {
            let (traj, gamma_series, changes) = if changes_after_start {
                let tree = self.tree_for(&req.run_id, &fits, req.tree)?;
                let mut entries: Vec<(NaiveDate, Policy)> = req.schedule.iter().map(|e| (e.date, e.policy)).collect();
                if entries[0].0 > params.start_date {
                    // Pre-start entries only describe the policy in force;
                    // the fitted curve is kept until the first change.
                    entries.insert(0, (params.start_date, entries[0].1));
                }
                let schedule = PolicySchedule::new(&req.region_id, entries)?;
                let out = simulate_scenario(
                    params,
                    &region.x0,
                    &tree,
                    &schedule,
                    req.horizon,
                    req.transition_days,
                    fits.step,
                )?;
                let changes = out
                    .changes
                    .iter()
                    .map(|(day, policy, gamma)| PolicyChange {
                        day: *day,
                        policy: *policy,
                        gamma: *gamma,
                    })
                    .collect();
                (out.trajectory, out.gamma, changes)
            } else {
                let traj = integrate(params, &region.x0, req.horizon, fits.step)
                    .map_err(|e| ServiceError::Internal(e.to_string()))?;
                let g = traj
                    .t
                    .iter()
                    .map(|t| {
                        gamma(*t, params.fitted.t0, params.fitted.k).map_err(|e| ServiceError::Internal(e.to_string()))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                (traj, g, Vec::new())
            };
            let all = traj.observables();
            let series = all.daily();
            let gamma_daily = all
                .t
                .iter()
                .zip(&gamma_series)
                .filter(|(t, _)| (*t - t.round()).abs() < 1e-9)
                .map(|(_, g)| *g)
                .collect();
            let result = ScenarioResult {
                run_id: id.to_string(),
                fit_run_id: req.run_id.clone(),
                region_id: req.region_id.clone(),
                start_date: params.start_date,
                series,
                gamma: gamma_daily,
                changes,
            };
            let csv = csv_bytes(|out| result.series.write_csv(out))?;
            Ok(vec![
                Artifact {
                    name: SCENARIO_ARTIFACT,
                    bytes: json_bytes(&result),
                },
                Artifact {
                    name: SCENARIO_CSV,
                    bytes: csv,
                },
            ])
        })?;
        from_json(
            &self.store.read_artifact(&run.run_id, SCENARIO_ARTIFACT)?,
            SCENARIO_ARTIFACT,
        )
    }

    // ---- allocation ----

    /// Demand rows from a fit run: plan day 1 is `start_date` in every
    /// region's own calendar.
    fn forecast_demand(&self, demand: &DemandInput, ids: &[String]) -> std::result::Result<Vec<Vec<u64>>, AllocError> {
        let DemandInput::Forecast {
            run_id,
            start_date,
            days,
            vent_fraction,
            los_days,
        } = demand
        else {
            unreachable!("matrices are resolved by the caller")
        };
        let fits = self
            .fit_artifact(run_id)
            .map_err(|e| AllocError::Demand(e.to_string()))?;
        let mut rows = Vec::with_capacity(ids.len());
        for id in ids {
            let f = fits
                .fits
                .iter()
                .find(|f| &f.fit.region_id == id)
                .ok_or_else(|| AllocError::Demand(format!("region {id:?} is not in run {run_id}")))?;
            let p = &f.fit.params;
            let offset = (*start_date - p.start_date).num_days();
            if offset < 0 {
                return Err(AllocError::Demand(format!(
                    "region {id}: start_date {start_date} precedes its day 0 ({})",
                    p.start_date
                )));
            }
            let horizon = ((offset as usize + days.max(&1) - 1).max(1)) as f64;
            let traj = integrate(p, &f.x0, horizon, fits.step).map_err(|e| AllocError::Demand(e.to_string()))?;
            rows.extend(demand_from_forecast(
                &[traj],
                offset as f64,
                *days,
                *vent_fraction,
                *los_days,
            )?);
        }
        Ok(rows)
    }

    pub fn resolve_problem(&self, input: &ProblemInput) -> Result<AllocationProblem> {
        let demand_field = |e: AllocError| match e {
            AllocError::Demand(m) => ServiceError::BadRequest {
                message: m,
                field: Some("problem.demand".into()),
            },
            other => other.into(),
        };
        input
            .resolve(|d, ids| self.forecast_demand(d, ids))
            .map_err(demand_field)
    }

    pub fn allocate(&self, req: &AllocateRequest) -> Result<AllocationResult> {
        let problem = self.resolve_problem(&req.problem)?;
        if let Some(s) = &req.sweep {
            if s.rho.is_empty() || s.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
                return Err(ServiceError::BadRequest {
                    message: "sweep.rho must be a nonempty list of values in [0, 1]".into(),
                    field: Some("sweep.rho".into()),
                });
            }
        }
        let inputs = digest_json(&(&problem, &req.sweep));
        let run = self.compute_first(RunKind::Allocation, &inputs, "", |id| {
            let plan = solve(&problem)?;
            let sweep = match &req.sweep {
                None => None,
                Some(s) => {
                    let weights = if s.weights.is_empty() {
                        vec![(problem.weights.w_short, problem.weights.w_dist)]
                    } else {
                        s.weights.clone()
                    };
                    let points = pareto_sweep(&problem, &s.rho, &weights)?;
                    Some(SweepResult {
                        frontier: frontier(&points),
                        points,
                    })
                }
            };
            let transfers = csv_bytes(|out| write_transfers_csv(&plan, out))?;
            let shortages = csv_bytes(|out| write_shortages_csv(&plan, out))?;
            let result = AllocationResult {
                run_id: id.to_string(),
                plan,
                sweep,
            };
            Ok(vec![
                Artifact {
                    name: PLAN_ARTIFACT,
                    bytes: json_bytes(&result),
                },
                Artifact {
                    name: TRANSFERS_CSV,
                    bytes: transfers,
                },
                Artifact {
                    name: SHORTAGES_CSV,
                    bytes: shortages,
                },
            ])
        })?;
        from_json(&self.store.read_artifact(&run.run_id, PLAN_ARTIFACT)?, PLAN_ARTIFACT)
    }

    // ---- cohort statistics ----

    fn cohort(&self) -> Result<&CohortDb> {
        self.cohort
            .as_ref()
            .ok_or_else(|| ServiceError::Unavailable("no cohort database is loaded".into()))
    }

    /// One attribute or lab (or projected mortality) for `filter`, or the
    /// whole table for `filter` when `attribute` is `None`.
    pub fn aggregate(&self, attribute: Option<&str>, filter: Option<&str>) -> Result<Aggregate> {
        let db = self.cohort()?;
        let filter: Subpopulation = filter.unwrap_or("all").parse().map_err(|m| ServiceError::BadRequest {
            message: m,
            field: Some("filter".into()),
        })?;
        Ok(match attribute {
            None => Aggregate::Table(db.summary(&[filter])),
            Some(PROJECTED_MORTALITY) => Aggregate::Stat(db.mortality(filter)),
            Some(a) if db.manifest.has_lab(a) => Aggregate::Lab(db.lab(a, filter)?),
            Some(a) => Aggregate::Stat(db.prevalence(a, filter)?),
        })
    }

    pub fn summary_csv(&self, filters: &[Subpopulation]) -> Result<Vec<u8>> {
        let stats = self.cohort()?.summary(filters);
        csv_bytes(|out| write_stats_csv(out, &stats))
    }
}

fn write_backtest_csv(rows: &[BacktestRow], out: &mut Vec<u8>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["region_id", "mape_cases", "mape_deaths", "error"])?;
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.region_id.as_str(),
            &num(r.mape_cases),
            &num(r.mape_deaths),
            r.error.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}
