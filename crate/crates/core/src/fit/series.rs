use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::FitError;

/// Cases must exceed this before a region enters the fit.
pub const INCLUSION_THRESHOLD: f64 = 100.0;

/// Daily cumulative counts for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSeries {
    pub region_id: String,
    pub dates: Vec<NaiveDate>,
    pub cumulative_cases: Vec<f64>,
    pub cumulative_deaths: Vec<f64>,
    pub population: f64,
}

impl RegionSeries {
    pub fn new(
        region_id: impl Into<String>,
        dates: Vec<NaiveDate>,
        cumulative_cases: Vec<f64>,
        cumulative_deaths: Vec<f64>,
        population: f64,
    ) -> Result<Self, FitError> {
        let s = Self {
            region_id: region_id.into(),
            dates,
            cumulative_cases,
            cumulative_deaths,
            population,
        };
        s.validate_shape()?;
        Ok(s)
    }

    fn validate_shape(&self) -> Result<(), FitError> {
        let bad = |reason: String| FitError::InvalidSeries {
            region: self.region_id.clone(),
            reason,
        };
        if self.dates.is_empty() {
            return Err(bad("series is empty".into()));
        }
        if self.cumulative_cases.len() != self.dates.len() || self.cumulative_deaths.len() != self.dates.len() {
            return Err(bad("dates and counts differ in length".into()));
        }
        if !(self.population > 0.0) {
            return Err(bad(format!("population must be positive, got {}", self.population)));
        }
        for w in self.dates.windows(2) {
            if w[1] <= w[0] {
                return Err(bad(format!("dates not strictly increasing at {}", w[1])));
            }
        }
        for (name, v) in [
            ("cumulative_cases", &self.cumulative_cases),
            ("cumulative_deaths", &self.cumulative_deaths),
        ] {
            if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(bad(format!("{name} must be finite and nonnegative")));
            }
            for (i, w) in v.windows(2).enumerate() {
                if w[1] < w[0] {
                    return Err(bad(format!("{name} decreases on {}", self.dates[i + 1])));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn start_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn end_date(&self) -> NaiveDate {
        *self.dates.last().expect("validated nonempty")
    }

    /// Days since the first date.
    pub fn offsets(&self) -> Vec<f64> {
        let start = self.start_date();
        self.dates.iter().map(|d| (*d - start).num_days() as f64).collect()
    }

    /// Drops the days up to and including the last one with at most 100 cases.
    /// `None` when the region never crosses the threshold.
    pub fn included(&self) -> Option<RegionSeries> {
        let first = self.cumulative_cases.iter().position(|c| *c > INCLUSION_THRESHOLD)?;
        Some(self.slice(first, self.len()))
    }

    pub fn meets_inclusion_rule(&self) -> bool {
        self.cumulative_cases.first().is_some_and(|c| *c > INCLUSION_THRESHOLD)
    }

    /// Observations dated on or before `cutoff`. The returned series owns
    /// copies of only those observations.
    pub fn truncated_through(&self, cutoff: NaiveDate) -> Option<RegionSeries> {
        let end = self.dates.partition_point(|d| *d <= cutoff);
        (end > 0).then(|| self.slice(0, end))
    }

    fn slice(&self, from: usize, to: usize) -> RegionSeries {
        RegionSeries {
            region_id: self.region_id.clone(),
            dates: self.dates[from..to].to_vec(),
            cumulative_cases: self.cumulative_cases[from..to].to_vec(),
            cumulative_deaths: self.cumulative_deaths[from..to].to_vec(),
            population: self.population,
        }
    }
}

#[derive(Debug, Deserialize)]
struct SeriesRow {
    region_id: String,
    date: NaiveDate,
    cumulative_cases: f64,
    cumulative_deaths: f64,
    #[serde(default)]
    population: Option<f64>,
}

/// Reads `region_id,date,cumulative_cases,cumulative_deaths[,population]`.
///
/// Populations come from the optional column or from `populations`, which
/// takes precedence. Regions are returned sorted by id.
pub fn read_series_csv<R: Read>(reader: R, populations: &BTreeMap<String, f64>) -> Result<Vec<RegionSeries>, FitError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut grouped: BTreeMap<String, Vec<SeriesRow>> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<SeriesRow>().enumerate() {
        let row = row.map_err(|e| FitError::Csv {
            row: i + 2,
            message: e.to_string(),
        })?;
        grouped.entry(row.region_id.clone()).or_default().push(row);
    }
    grouped
        .into_iter()
        .map(|(region, mut rows)| {
            rows.sort_by_key(|r| r.date);
            let population = populations
                .get(&region)
                .copied()
                .or_else(|| rows.iter().find_map(|r| r.population))
                .ok_or_else(|| FitError::InvalidSeries {
                    region: region.clone(),
                    reason: "no population given".into(),
                })?;
            RegionSeries::new(
                region,
                rows.iter().map(|r| r.date).collect(),
                rows.iter().map(|r| r.cumulative_cases).collect(),
                rows.iter().map(|r| r.cumulative_deaths).collect(),
                population,
            )
        })
        .collect()
}

pub fn read_series_file(path: &Path, populations: &BTreeMap<String, f64>) -> Result<Vec<RegionSeries>, FitError> {
    let file = std::fs::File::open(path).map_err(|e| FitError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    read_series_csv(file, populations)
}

/// Reads a `region_id,population` table.
pub fn read_populations_csv<R: Read>(reader: R) -> Result<BTreeMap<String, f64>, FitError> {
    #[derive(Deserialize)]
    struct Row {
        region_id: String,
        population: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = BTreeMap::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| FitError::Csv {
            row: i + 2,
            message: e.to_string(),
        })?;
        out.insert(row.region_id, row.population);
    }
    Ok(out)
}

/// Writes the format [`read_series_csv`] reads, population column included.
pub fn write_series_csv<W: std::io::Write>(out: W, series: &[RegionSeries]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "region_id",
        "date",
        "cumulative_cases",
        "cumulative_deaths",
        "population",
    ])?;
    for s in series {
        for i in 0..s.len() {
            w.write_record([
                s.region_id.clone(),
                s.dates[i].to_string(),
                s.cumulative_cases[i].to_string(),
                s.cumulative_deaths[i].to_string(),
                s.population.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
