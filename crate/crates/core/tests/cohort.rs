use std::collections::BTreeMap;
use std::path::PathBuf;

use epiops::cohort::{
    extract_calibration, parse_cohort_csv, parse_cohort_file, AggregateStat, CalibrationDefaults, CohortError,
    Manifest, Provenance, Region, Severity, Subpopulation, PROJECTED_MORTALITY,
};
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn small_csv() -> String {
    std::fs::read_to_string(fixture("cohorts_small.csv")).unwrap()
}

/// Replaces the cell at (`row`, `column`) of a CSV string; `row` 0 is the
/// header.
fn with_cell(csv_text: &str, row: usize, column: &str, value: &str) -> String {
    let mut lines: Vec<Vec<String>> = csv_text
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    let col = lines[0].iter().position(|c| c == column).unwrap();
    lines[row][col] = value.to_string();
    lines.iter().map(|l| l.join(",")).collect::<Vec<_>>().join("\n")
}

#[test]
fn small_file_keeps_absent_fields_absent() {
    let db = parse_cohort_csv(small_csv().as_bytes(), &Manifest::builtin()).unwrap();
    assert_eq!(db.records.len(), 3);
    let [wuhan, lombardy, nyc] = &db.records[..] else {
        panic!()
    };
    assert_eq!((wuhan.region, wuhan.severity), (Region::Asia, Severity::Severe));
    assert_eq!(nyc.region, Region::NorthAmerica);
    assert!(!lombardy.attributes.contains_key("cough"));
    assert_eq!(lombardy.mean_los_days, None);
    assert_eq!(nyc.n_discharged, None);
    // Reported as zero is not the same as not reported.
    assert_eq!(nyc.attributes["fever"].n_reporting, 0);
    assert!(!nyc.attributes.contains_key("diabetes"));
    assert_eq!(wuhan.labs["crp"].unit, "mg/L");
    assert_eq!(wuhan.labs["crp"].mean_value, 48.5);
}

#[test]
fn column_order_is_free() {
    let text = small_csv();
    let table: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let reversed: String = table
        .iter()
        .map(|r| r.iter().rev().cloned().collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n");
    let a = parse_cohort_csv(text.as_bytes(), &Manifest::builtin()).unwrap();
    let b = parse_cohort_csv(reversed.as_bytes(), &Manifest::builtin()).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn invariant_violations_name_the_invariant_and_row() {
    let bad = with_cell(&small_csv(), 1, "cough_n_positive", "192");
    match parse_cohort_csv(bad.as_bytes(), &Manifest::builtin()) {
        Err(CohortError::Invariant { row, invariant, .. }) => {
            assert_eq!(row, 2);
            assert_eq!(invariant, "n_positive <= n_reporting");
        }
        other => panic!("{other:?}"),
    }
    let bad = with_cell(&small_csv(), 2, "n_deceased", "1500");
    let err = parse_cohort_csv(bad.as_bytes(), &Manifest::builtin()).unwrap_err();
    assert!(
        err.to_string().contains("n_discharged + n_deceased <= n_patients"),
        "{err}"
    );
    assert!(err.to_string().starts_with("row 3"), "{err}");
    let bad = with_cell(&small_csv(), 3, "mean_los_days", "0");
    assert!(matches!(
        parse_cohort_csv(bad.as_bytes(), &Manifest::builtin()),
        Err(CohortError::Invariant {
            row: 4,
            invariant: "mean_los_days > 0",
            ..
        })
    ));
}

#[test]
fn malformed_cells_report_row() {
    for (row, col, value) in [
        (2, "n_patients", "12.5"),
        (3, "region", "Atlantis"),
        (1, "cough_n_positive", ""),
        (2, "crp_unit", ""),
        (3, "n_patients", "-4"),
    ] {
        let bad = with_cell(&small_csv(), row, col, value);
        match parse_cohort_csv(bad.as_bytes(), &Manifest::builtin()) {
            Err(CohortError::Malformed { row: r, .. }) => assert_eq!(r, row + 1, "{col}"),
            other => panic!("{col}: {other:?}"),
        }
    }
}

#[test]
fn mixed_lab_units_are_rejected() {
    let bad = with_cell(&small_csv(), 2, "crp_unit", "mg/dL");
    assert_eq!(
        parse_cohort_csv(bad.as_bytes(), &Manifest::builtin()),
        Err(CohortError::MixedUnits {
            row: 3,
            lab: "crp".into(),
            expected: "mg/L".into(),
            found: "mg/dL".into(),
        })
    );
}

#[test]
fn header_must_match_manifest() {
    let text = small_csv().replacen("fever_n_positive", "fevr_n_positive", 1);
    match parse_cohort_csv(text.as_bytes(), &Manifest::builtin()) {
        Err(CohortError::Header { missing, unexpected }) => {
            assert_eq!(missing, vec!["fever_n_positive"]);
            assert_eq!(unexpected, vec!["fevr_n_positive"]);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_attribute_is_an_error() {
    let db = parse_cohort_csv(small_csv().as_bytes(), &Manifest::builtin()).unwrap();
    assert!(matches!(
        db.prevalence("hiccups", Subpopulation::ALL),
        Err(CohortError::UnknownAttribute(_))
    ));
    let crp = db.lab("crp", Subpopulation::ALL).unwrap();
    assert_eq!(crp.unit.as_deref(), Some("mg/L"));
    assert!((crp.mean.unwrap() - (150.0 * 48.5 + 300.0 * 120.0) / 450.0).abs() < 1e-12);
}

#[derive(Deserialize)]
struct PublishedRow {
    attribute: String,
    cells: BTreeMap<String, Option<PublishedCell>>,
}

#[derive(Deserialize)]
struct PublishedCell {
    count: u64,
    percent: f64,
}

/// Column groups the golden database does not reproduce numerically, per
/// attribute. The published table is not internally consistent there: no
/// set of cohorts pools to every printed cell of the row at once (for
/// example, a printed column count exceeding the printed total).
fn inconsistent_groups(attribute: &str) -> &'static [&'static str] {
    match attribute {
        "sputum" | "anorexia" | "nausea" => &["region="],
        "cong_airway" | "chills" => &["severity="],
        _ => &[],
    }
}

fn published() -> Vec<PublishedRow> {
    serde_json::from_str(&std::fs::read_to_string(fixture("summary_table_published.json")).unwrap()).unwrap()
}

#[test]
fn golden_database_reproduces_published_table() {
    let db = parse_cohort_file(&fixture("cohorts_summary_table.csv"), &Manifest::builtin()).unwrap();
    let mut checked = 0;
    let mut dashes = 0;
    for row in published() {
        for (column, cell) in &row.cells {
            let filter: Subpopulation = column.parse().unwrap();
            let stat: AggregateStat = if row.attribute == PROJECTED_MORTALITY {
                db.mortality(filter)
            } else {
                db.prevalence(&row.attribute, filter).unwrap()
            };
            match cell {
                None => {
                    assert!(stat.suppressed, "{} {column}: {stat:?}", row.attribute);
                    assert_eq!(stat.prevalence, None);
                    dashes += 1;
                }
                Some(_)
                    if inconsistent_groups(&row.attribute)
                        .iter()
                        .any(|g| column.starts_with(g)) => {}
                Some(c) => {
                    assert_eq!(stat.n_reporting, c.count, "{} {column}", row.attribute);
                    let pct = 100.0 * stat.prevalence.unwrap();
                    assert!(
                        (pct - c.percent).abs() <= 0.1,
                        "{} {column}: {pct} vs {}",
                        row.attribute,
                        c.percent
                    );
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(dashes, 8);
    assert_eq!(checked, 77);
}

#[test]
fn golden_headline_cells() {
    let db = parse_cohort_file(&fixture("cohorts_summary_table.csv"), &Manifest::builtin()).unwrap();
    let cough = db.prevalence("cough", Subpopulation::ALL).unwrap();
    assert_eq!(cough.n_reporting, 94_950);
    assert!((100.0 * cough.prevalence.unwrap() - 52.8).abs() <= 0.1);
    let mortality = db.mortality(Subpopulation::ALL);
    assert_eq!(mortality.n_reporting, 111_700);
    assert!((100.0 * mortality.prevalence.unwrap() - 11.7).abs() <= 0.1);
}

/// Sums straight off the CSV text, without going through the parser.
fn column_sums(path: &PathBuf, weight: &str, value: &str) -> (f64, f64, usize) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let wi = headers.iter().position(|h| h == weight).unwrap();
    let vi = headers.iter().position(|h| h == value).unwrap();
    let (mut w, mut wv, mut n) = (0.0, 0.0, 0);
    for rec in rdr.records() {
        let rec = rec.unwrap();
        if rec[vi].is_empty() {
            continue;
        }
        let weight: f64 = rec[wi].parse().unwrap();
        w += weight;
        wv += weight * rec[vi].parse::<f64>().unwrap();
        n += 1;
    }
    (w, wv, n)
}

#[test]
fn golden_calibration_matches_column_sums() {
    let path = fixture("cohorts_summary_table.csv");
    let db = parse_cohort_file(&path, &Manifest::builtin()).unwrap();
    let bundle = extract_calibration(&db.records, &CalibrationDefaults::default()).unwrap();
    let (w, wv, n) = column_sums(&path, "n_patients", "mean_los_days");
    assert!((bundle.mean_los_days.value - wv / w).abs() < 1e-12);
    assert_eq!(bundle.mean_los_days.n_cohorts, n);
    assert!((bundle.r_rh.value - w / wv).abs() < 1e-12);

    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let h = rdr.headers().unwrap().clone();
    let (pi, vi) = (
        h.iter().position(|c| c == "n_patients").unwrap(),
        h.iter().position(|c| c == "n_ventilated").unwrap(),
    );
    let (mut patients, mut ventilated) = (0u64, 0u64);
    for r in rdr.records().map(Result::unwrap).filter(|r| !r[vi].is_empty()) {
        patients += r[pi].parse::<u64>().unwrap();
        ventilated += r[vi].parse::<u64>().unwrap();
    }
    assert_eq!(bundle.ventilated_fraction.value, ventilated as f64 / patients as f64);
    assert_eq!(bundle.ventilated_fraction.provenance, Provenance::Cohort);
    assert_eq!(bundle.sigma.provenance, Provenance::Default);

    let (w, wv, _) = column_sums(&path, "crp_n_reporting", "crp_mean");
    let crp = db.lab("crp", Subpopulation::ALL).unwrap();
    assert!((crp.mean.unwrap() - wv / w).abs() < 1e-9);
}
