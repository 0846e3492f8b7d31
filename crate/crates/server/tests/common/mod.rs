#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use epiops::fit::write_series_csv;
use epiops::policy::write_policy_log_csv;
use epiops::synthetic::{policy_benchmark, PolicyBenchmark};
use epiops_server::{http, Config, Service};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub fn core_fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub struct App {
    pub dir: tempfile::TempDir,
    pub svc: Arc<Service>,
    pub router: Router,
}

/// A service over a fresh data directory. `bench` is written out as the
/// configured policy log.
pub fn app(cohort: Option<PathBuf>, bench: Option<&PolicyBenchmark>) -> App {
    let dir = tempfile::tempdir().unwrap();
    let policy_log_csv = bench.map(|b| {
        let path = dir.path().join("policy_log.csv");
        let logs: Vec<_> = b.policy_log.values().cloned().collect();
        write_policy_log_csv(std::fs::File::create(&path).unwrap(), &logs).unwrap();
        path
    });
    let config = Config {
        data_dir: dir.path().join("data"),
        cohort_csv: cohort,
        policy_log_csv,
        ..Config::default()
    };
    let svc = Arc::new(Service::new(config).unwrap());
    let router = http::router(Arc::clone(&svc));
    App { dir, svc, router }
}

pub fn series_csv(bench: &PolicyBenchmark) -> Vec<u8> {
    let series: Vec<_> = bench.regions.iter().map(|r| r.series.clone()).collect();
    let mut buf = Vec::new();
    write_series_csv(&mut buf, &series).unwrap();
    buf
}

/// Two noiseless regions, 60 days.
pub fn two_regions() -> PolicyBenchmark {
    policy_benchmark(2, 60, 0.0, 5)
}

pub async fn call(router: &Router, method: Method, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn post_json(router: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let (s, b) = call(router, Method::POST, uri, serde_json::to_vec(body).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

pub async fn get_json(router: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(router, Method::GET, uri, Body::empty()).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}
