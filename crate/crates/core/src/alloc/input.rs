use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AllocError, AllocationProblem, Weights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionInput {
    pub id: String,
    pub base_supply: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandInput {
    /// One row per region, one column per day.
    Matrix(Vec<Vec<u64>>),
    /// Demand derived from a stored forecast run.
    Forecast {
        run_id: String,
        /// Calendar date of plan day 1.
        start_date: NaiveDate,
        days: usize,
        #[serde(default = "default_vent_fraction")]
        vent_fraction: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        los_days: Option<f64>,
    },
}

fn default_vent_fraction() -> f64 {
    0.25
}

fn default_lead_time() -> usize {
    1
}

/// The JSON problem format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemInput {
    pub regions: Vec<RegionInput>,
    /// Kilometres, rounded to whole km. Taken from the coordinates when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<Vec<Vec<f64>>>,
    pub demand: DemandInput,
    #[serde(default)]
    pub federal_stock: u64,
    pub pooling_fraction: f64,
    #[serde(default)]
    pub buffer: f64,
    #[serde(default = "default_lead_time")]
    pub lead_time: usize,
    #[serde(default)]
    pub weights: Weights,
}

/// Great-circle distance on a 6371 km sphere.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * 6371.0 * a.sqrt().min(1.0).asin()
}

impl ProblemInput {
    pub fn region_ids(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.id.clone()).collect()
    }

    /// Builds the solver's problem. `forecast` is called for a
    /// [`DemandInput::Forecast`] and must return one row per region, in the
    /// order of `regions`.
    pub fn resolve<F>(&self, forecast: F) -> Result<AllocationProblem, AllocError>
    where
        F: FnOnce(&DemandInput, &[String]) -> Result<Vec<Vec<u64>>, AllocError>,
    {
        let ids = self.region_ids();
        let demand = match &self.demand {
            DemandInput::Matrix(m) => m.clone(),
            other => forecast(other, &ids)?,
        };
        let problem = AllocationProblem {
            distance_km: self.distances()?,
            region_ids: ids,
            base_supply: self.regions.iter().map(|r| r.base_supply).collect(),
            demand,
            federal_stock: self.federal_stock,
            pooling_fraction: self.pooling_fraction,
            buffer: self.buffer,
            lead_time: self.lead_time,
            weights: self.weights,
        };
        problem.validate()?;
        Ok(problem)
    }

    fn distances(&self) -> Result<Vec<Vec<u64>>, AllocError> {
        let n = self.regions.len();
        let bad = |m: String| Err(AllocError::InvalidProblem(m));
        if let Some(m) = &self.distance_km {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return bad(format!("distance_km must be {n} x {n}"));
            }
            if m.iter().flatten().any(|d| !(d.is_finite() && *d >= 0.0)) {
                return bad("distances must be finite and nonnegative".into());
            }
            return Ok(m.iter().map(|r| r.iter().map(|d| d.round() as u64).collect()).collect());
        }
        let mut coords = Vec::with_capacity(n);
        for r in &self.regions {
            match (r.lat, r.lon) {
                (Some(lat), Some(lon)) if lat.abs() <= 90.0 && lon.abs() <= 180.0 => coords.push((lat, lon)),
                (Some(_), Some(_)) => return bad(format!("region {}: coordinates out of range", r.id)),
                _ if n == 1 => coords.push((0.0, 0.0)),
                _ => {
                    return bad(format!(
                        "region {} has no coordinates and no distance_km was given",
                        r.id
                    ))
                }
            }
        }
        Ok((0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let (a, b) = if i <= j { (i, j) } else { (j, i) };
                        haversine_km(coords[a].0, coords[a].1, coords[b].0, coords[b].1).round() as u64
                    })
                    .collect()
            })
            .collect())
    }
}
