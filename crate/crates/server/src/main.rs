use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use epiops::alloc::ProblemInput;
use epiops::fit::FitConfig;
use epiops_server::error::parse_json;
use epiops_server::service::{
    AllocateRequest, BacktestRequest, DatasetRef, FitRequest, ScenarioRequest, SweepRequest, SCENARIO_CSV,
    SHORTAGES_CSV, TRANSFERS_CSV,
};
use epiops_server::{http, Config, Service, ServiceError};

#[derive(Parser)]
#[command(
    name = "epiops",
    version,
    about = "Epidemic forecasting, policy scenarios and ventilator allocation"
)]
struct Cli {
    /// Service config (TOML).
    #[arg(long, global = true, env = "EPIOPS_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured data directory.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a series CSV and copy it into the data directory.
    Ingest { csv: PathBuf },
    /// Fit every qualifying region of a dataset.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cutoff: Option<NaiveDate>,
        /// Write the fitted regions (JSON) here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit through a cutoff and score the projection up to a later date.
    Backtest {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        cutoff: NaiveDate,
        #[arg(long)]
        horizon_end: NaiveDate,
        /// Per-region MAPE table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario request (JSON, as for POST /v1/scenario).
    Scenario {
        request: PathBuf,
        /// Daily series as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Solve an allocation problem (JSON).
    Allocate {
        problem: PathBuf,
        #[arg(long)]
        transfers: Option<PathBuf>,
        #[arg(long)]
        shortages: Option<PathBuf>,
    },
    /// Solve over a grid of pooling fractions and weights.
    Sweep {
        problem: PathBuf,
        /// Comma-separated pooling fractions.
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<f64>,
        /// Comma-separated `w_short:w_dist` pairs.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<String>,
    },
    /// Start the HTTP service.
    Serve,
}

#[derive(clap::Args)]
struct DataArgs {
    /// Dataset id from `ingest`, or a CSV path.
    #[arg(long)]
    dataset: String,
    /// Fit configuration (JSON or TOML).
    #[arg(long)]
    fit_config: Option<PathBuf>,
    /// Comma-separated region ids.
    #[arg(long, value_delimiter = ',')]
    regions: Vec<String>,
}

impl DataArgs {
    fn dataset(&self) -> DatasetRef {
        let is_id = self.dataset.len() == 64 && self.dataset.bytes().all(|b| b.is_ascii_hexdigit());
        if is_id && !Path::new(&self.dataset).exists() {
            DatasetRef::Id(self.dataset.clone())
        } else {
            DatasetRef::Path(PathBuf::from(&self.dataset))
        }
    }

    fn fit_config(&self) -> Result<FitConfig, ServiceError> {
        let Some(p) = &self.fit_config else {
            return Ok(FitConfig::default());
        };
        let text = read(p)?;
        if p.extension().is_some_and(|e| e == "toml") {
            let s = String::from_utf8(text).map_err(|e| ServiceError::bad(e.to_string()))?;
            toml::from_str(&s).map_err(|e| ServiceError::bad(format!("{}: {e}", p.display())))
        } else {
            parse_json(&text)
        }
    }

    fn regions(&self) -> Option<Vec<String>> {
        (!self.regions.is_empty()).then(|| self.regions.clone())
    }
}

fn read(p: &Path) -> Result<Vec<u8>, ServiceError> {
    std::fs::read(p).map_err(|e| ServiceError::bad(format!("{}: {e}", p.display())))
}

fn write(p: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
    std::fs::write(p, bytes).map_err(|e| ServiceError::io(&p.display().to_string(), e))
}

fn emit<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<(), ServiceError> {
    let bytes = serde_json::to_vec_pretty(value).expect("outputs serialize");
    match out {
        Some(p) => write(p, &bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .and_then(|_| stdout.write_all(b"\n"))
                .map_err(|e| ServiceError::io("stdout", e))
        }
    }
}

fn parse_weights(items: &[String]) -> Result<Vec<(u64, u64)>, ServiceError> {
    items
        .iter()
        .map(|w| {
            let (a, b) = w
                .split_once(':')
                .ok_or_else(|| ServiceError::bad(format!("weights: expected w_short:w_dist, got {w:?}")))?;
            let num = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|_| ServiceError::bad(format!("weights: bad number {s:?}")))
            };
            Ok((num(a)?, num(b)?))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), ServiceError> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(d) = cli.data_dir {
        config.data_dir = d;
    }
    if let Command::Serve = cli.command {
        return serve(config);
    }
    let svc = Arc::new(Service::new(config)?);
    match cli.command {
        Command::Ingest { csv } => emit(&svc.ingest(&read(&csv)?)?, None),
        Command::Fit { data, cutoff, out } => {
            let req = FitRequest {
                dataset: data.dataset(),
                populations: Default::default(),
                regions: data.regions(),
                cutoff,
                config: data.fit_config()?,
                background: false,
            };
            let res = svc.fit(&req)?;
            eprintln!("run {}", res.run.run_id);
            emit(&res, out.as_deref())
        }
        Command::Backtest {
            data,
            cutoff,
            horizon_end,
            out,
        } => {
            let req = BacktestRequest {
                dataset: data.dataset(),
                populations: Default::default(),
                regions: data.regions(),
                cutoff,
                horizon_end,
                config: data.fit_config()?,
                background: false,
            };
            let res = svc.backtest(&req)?;
            let table = res.table.as_ref().expect("synchronous runs finish");
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}%")).unwrap_or_else(|| "n/a".into());
            eprintln!(
                "run {}: median MAPE cases {}, deaths {}",
                res.run.run_id,
                fmt(table.median_mape_cases),
                fmt(table.median_mape_deaths)
            );
            let csv = svc.artifact(&res.run.run_id, epiops_server::service::BACKTEST_CSV)?;
            match out {
                Some(p) => write(&p, &csv),
                None => std::io::stdout()
                    .write_all(&csv)
                    .map_err(|e| ServiceError::io("stdout", e)),
            }
        }
        Command::Scenario { request, csv } => {
            let req: ScenarioRequest = parse_json(&read(&request)?)?;
            let res = svc.scenario(&req)?;
            if let Some(p) = csv {
                write(&p, &svc.artifact(&res.run_id, SCENARIO_CSV)?)?;
            }
            emit(&res, None)
        }
        Command::Allocate {
            problem,
            transfers,
            shortages,
        } => {
            let problem: ProblemInput = parse_json(&read(&problem)?)?;
            let res = svc.allocate(&AllocateRequest { problem, sweep: None })?;
            if let Some(p) = transfers {
                write(&p, &svc.artifact(&res.run_id, TRANSFERS_CSV)?)?;
            }
            if let Some(p) = shortages {
                write(&p, &svc.artifact(&res.run_id, SHORTAGES_CSV)?)?;
            }
            emit(&res, None)
        }
        Command::Sweep { problem, rho, weights } => {
            let problem: ProblemInput = parse_json(&read(&problem)?)?;
            let sweep = SweepRequest {
                rho,
                weights: parse_weights(&weights)?,
            };
            let res = svc.allocate(&AllocateRequest {
                problem,
                sweep: Some(sweep),
            })?;
            emit(&res.sweep, None)
        }
        Command::Serve => unreachable!(),
    }
}

fn serve(config: Config) -> Result<(), ServiceError> {
    let addr = format!("{}:{}", config.bind, config.port);
    let svc = Arc::new(Service::new(config)?);
    let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::io("runtime", e))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| ServiceError::io(&format!("bind {addr}"), e))?;
        eprintln!("listening on http://{addr}");
        axum::serve(listener, http::router(svc))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| ServiceError::io("serve", e))
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.status() {
                400 => 2,
                404 | 422 => 3,
                _ => 1,
            })
        }
    }
}
