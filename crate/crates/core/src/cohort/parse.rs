use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use super::{AttributeCount, CohortDb, CohortError, CohortRecord, LabValue, Manifest};

/// Reads a cohort CSV whose header must name exactly the manifest's columns,
/// in any order. Row numbers in errors are file lines (the header is line 1).
pub fn parse_cohort_csv<R: Read>(reader: R, manifest: &Manifest) -> Result<CohortDb, CohortError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| CohortError::Malformed {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let index = check_header(&header, manifest)?;

    let mut units: HashMap<String, String> = HashMap::new();
    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| CohortError::Malformed {
            row: line,
            message: e.to_string(),
        })?;
        let cells = Cells {
            row: &row,
            index: &index,
            line,
        };
        let record = read_record(&cells, manifest)?;
        check_invariants(&record, line)?;
        for (lab, value) in &record.labs {
            match units.get(lab) {
                Some(unit) if *unit != value.unit => {
                    return Err(CohortError::MixedUnits {
                        row: line,
                        lab: lab.clone(),
                        expected: unit.clone(),
                        found: value.unit.clone(),
                    });
                }
                Some(_) => {}
                None => {
                    units.insert(lab.clone(), value.unit.clone());
                }
            }
        }
        records.push(record);
    }
    Ok(CohortDb {
        manifest: manifest.clone(),
        records,
    })
}

pub fn parse_cohort_file(path: &Path, manifest: &Manifest) -> Result<CohortDb, CohortError> {
    let file = std::fs::File::open(path).map_err(|e| CohortError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_cohort_csv(file, manifest)
}

fn check_header(header: &csv::StringRecord, manifest: &Manifest) -> Result<HashMap<String, usize>, CohortError> {
    let expected: BTreeSet<String> = manifest.columns().into_iter().collect();
    let mut index = HashMap::new();
    let mut unexpected = Vec::new();
    for (i, name) in header.iter().enumerate() {
        if !expected.contains(name) || index.insert(name.to_string(), i).is_some() {
            unexpected.push(name.to_string());
        }
    }
    let missing: Vec<String> = manifest
        .columns()
        .into_iter()
        .filter(|c| !index.contains_key(c))
        .collect();
    if missing.is_empty() && unexpected.is_empty() {
        Ok(index)
    } else {
        Err(CohortError::Header { missing, unexpected })
    }
}

struct Cells<'a> {
    row: &'a csv::StringRecord,
    index: &'a HashMap<String, usize>,
    line: usize,
}

impl Cells<'_> {
    fn get(&self, column: &str) -> Option<&str> {
        let v = self.row.get(self.index[column]).unwrap_or("");
        (!v.is_empty()).then_some(v)
    }

    fn malformed(&self, column: &str, message: impl std::fmt::Display) -> CohortError {
        CohortError::Malformed {
            row: self.line,
            message: format!("{column}: {message}"),
        }
    }

    fn required(&self, column: &str) -> Result<&str, CohortError> {
        self.get(column)
            .ok_or_else(|| self.malformed(column, "required value is empty"))
    }

    fn count(&self, column: &str) -> Result<Option<u64>, CohortError> {
        self.get(column)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| self.malformed(column, format!("{v:?} is not a nonnegative integer")))
            })
            .transpose()
    }

    fn real(&self, column: &str) -> Result<Option<f64>, CohortError> {
        self.get(column)
            .map(|v| match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(self.malformed(column, format!("{v:?} is not a number"))),
            })
            .transpose()
    }
}

fn read_record(cells: &Cells<'_>, manifest: &Manifest) -> Result<CohortRecord, CohortError> {
    let region = cells
        .required("region")?
        .parse()
        .map_err(|e| cells.malformed("region", e))?;
    let severity = cells
        .required("severity")?
        .parse()
        .map_err(|e| cells.malformed("severity", e))?;
    let n_patients = cells
        .count("n_patients")?
        .ok_or_else(|| cells.malformed("n_patients", "required value is empty"))?;

    let mut attributes = BTreeMap::new();
    for a in &manifest.attributes {
        let rep_col = format!("{}_n_reporting", a.name);
        let pos_col = format!("{}_n_positive", a.name);
        match (cells.count(&rep_col)?, cells.count(&pos_col)?) {
            (Some(n_reporting), Some(n_positive)) => {
                attributes.insert(
                    a.name.clone(),
                    AttributeCount {
                        n_reporting,
                        n_positive,
                    },
                );
            }
            (None, None) => {}
            (Some(_), None) => return Err(cells.malformed(&pos_col, "empty while n_reporting is set")),
            (None, Some(_)) => return Err(cells.malformed(&rep_col, "empty while n_positive is set")),
        }
    }

    let mut labs = BTreeMap::new();
    for l in &manifest.labs {
        let rep_col = format!("{}_n_reporting", l.name);
        let mean_col = format!("{}_mean", l.name);
        let unit_col = format!("{}_unit", l.name);
        let parts = (cells.count(&rep_col)?, cells.real(&mean_col)?, cells.get(&unit_col));
        match parts {
            (Some(n_reporting), Some(mean_value), Some(unit)) => {
                labs.insert(
                    l.name.clone(),
                    LabValue {
                        n_reporting,
                        mean_value,
                        unit: unit.to_string(),
                    },
                );
            }
            (None, None, None) => {}
            _ => return Err(cells.malformed(&l.name, "lab needs n_reporting, mean and unit together")),
        }
    }

    Ok(CohortRecord {
        study_id: cells.required("study_id")?.to_string(),
        region,
        severity,
        n_patients,
        attributes,
        labs,
        n_discharged: cells.count("n_discharged")?,
        n_deceased: cells.count("n_deceased")?,
        mean_los_days: cells.real("mean_los_days")?,
        n_ventilated: cells.count("n_ventilated")?,
    })
}

fn check_invariants(r: &CohortRecord, row: usize) -> Result<(), CohortError> {
    let fail = |invariant: &'static str, detail: String| Err(CohortError::Invariant { row, invariant, detail });
    for (name, c) in &r.attributes {
        if c.n_positive > c.n_reporting {
            return fail(
                "n_positive <= n_reporting",
                format!("{name}: {} > {}", c.n_positive, c.n_reporting),
            );
        }
        if c.n_reporting > r.n_patients {
            return fail(
                "n_reporting <= n_patients",
                format!("{name}: {} > {}", c.n_reporting, r.n_patients),
            );
        }
    }
    for (name, l) in &r.labs {
        if l.n_reporting > r.n_patients {
            return fail(
                "n_reporting <= n_patients",
                format!("{name}: {} > {}", l.n_reporting, r.n_patients),
            );
        }
    }
    let discharged = r.n_discharged.unwrap_or(0);
    let deceased = r.n_deceased.unwrap_or(0);
    if discharged + deceased > r.n_patients {
        return fail(
            "n_discharged + n_deceased <= n_patients",
            format!("{discharged} + {deceased} > {}", r.n_patients),
        );
    }
    if let Some(los) = r.mean_los_days {
        if los <= 0.0 {
            return fail("mean_los_days > 0", format!("{los}"));
        }
    }
    if let Some(v) = r.n_ventilated {
        if v > r.n_patients {
            return fail("n_ventilated <= n_patients", format!("{v} > {}", r.n_patients));
        }
    }
    Ok(())
}
