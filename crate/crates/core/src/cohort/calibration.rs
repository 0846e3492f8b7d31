use serde::{Deserialize, Serialize};

use super::{CohortError, CohortRecord};
use crate::model::ClinicalRates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Pooled from cohorts in the database.
    Cohort,
    /// Taken from [`CalibrationDefaults`].
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedValue {
    pub value: f64,
    pub provenance: Provenance,
    /// Cohorts that contributed; zero for defaults.
    pub n_cohorts: usize,
}

impl CalibratedValue {
    fn default_value(value: f64) -> Self {
        Self {
            value,
            provenance: Provenance::Default,
            n_cohorts: 0,
        }
    }
}

/// Values used where the database has nothing to say.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationDefaults {
    pub ventilated_fraction: f64,
    pub sigma: f64,
    pub r_i: f64,
    pub r_r: f64,
    pub r_d: f64,
}

impl Default for CalibrationDefaults {
    fn default() -> Self {
        let rates = ClinicalRates::default();
        Self {
            ventilated_fraction: 0.25,
            sigma: rates.sigma,
            r_i: rates.r_i,
            r_r: rates.r_r,
            r_d: rates.r_d,
        }
    }
}

/// Parameters handed to the epidemic model and the allocation model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBundle {
    /// Hospital length of stay in days, pooled by cohort size.
    pub mean_los_days: CalibratedValue,
    /// Share of hospitalized patients on a ventilator.
    pub ventilated_fraction: CalibratedValue,
    pub sigma: CalibratedValue,
    pub r_i: CalibratedValue,
    pub r_r: CalibratedValue,
    pub r_d: CalibratedValue,
    pub r_rh: CalibratedValue,
    pub r_dh: CalibratedValue,
}

impl CalibrationBundle {
    pub fn rates(&self) -> ClinicalRates {
        ClinicalRates {
            sigma: self.sigma.value,
            r_i: self.r_i.value,
            r_r: self.r_r.value,
            r_d: self.r_d.value,
            r_rh: self.r_rh.value,
            r_dh: self.r_dh.value,
        }
    }

    /// Bundle built from defaults and an explicit length of stay.
    pub fn from_defaults(defaults: &CalibrationDefaults, mean_los_days: f64) -> Self {
        let los = CalibratedValue::default_value(mean_los_days);
        let hospital = CalibratedValue::default_value(1.0 / mean_los_days);
        Self {
            mean_los_days: los,
            ventilated_fraction: CalibratedValue::default_value(defaults.ventilated_fraction),
            sigma: CalibratedValue::default_value(defaults.sigma),
            r_i: CalibratedValue::default_value(defaults.r_i),
            r_r: CalibratedValue::default_value(defaults.r_r),
            r_d: CalibratedValue::default_value(defaults.r_d),
            r_rh: hospital,
            r_dh: hospital,
        }
    }
}

impl Default for CalibrationBundle {
    fn default() -> Self {
        Self::from_defaults(&CalibrationDefaults::default(), 1.0 / ClinicalRates::default().r_rh)
    }
}

/// Pools length of stay (weighted by `n_patients`) and the ventilated share
/// (Σ n_ventilated / Σ n_patients over cohorts reporting it; cohorts are of
/// hospitalized patients).
///
/// Both hospital exit rates are the reciprocal of the pooled stay. The
/// community-side rates have no cohort counterpart and always come from
/// `defaults`.
pub fn extract_calibration(
    records: &[CohortRecord],
    defaults: &CalibrationDefaults,
) -> Result<CalibrationBundle, CohortError> {
    let (mut los_n, mut los_w, mut los_cohorts) = (0u64, 0.0, 0usize);
    let (mut vent_n, mut vent_k, mut vent_cohorts) = (0u64, 0u64, 0usize);
    for r in records {
        if let Some(los) = r.mean_los_days {
            if r.n_patients > 0 {
                los_n += r.n_patients;
                los_w += r.n_patients as f64 * los;
                los_cohorts += 1;
            }
        }
        if let Some(v) = r.n_ventilated {
            if r.n_patients > 0 {
                vent_n += r.n_patients;
                vent_k += v;
                vent_cohorts += 1;
            }
        }
    }
    if los_cohorts == 0 {
        return Err(CohortError::NoLengthOfStay);
    }
    let los = los_w / los_n as f64;
    let mut bundle = CalibrationBundle::from_defaults(defaults, los);
    let from_cohorts = |value: f64, n_cohorts: usize| CalibratedValue {
        value,
        provenance: Provenance::Cohort,
        n_cohorts,
    };
    bundle.mean_los_days = from_cohorts(los, los_cohorts);
    bundle.r_rh = from_cohorts(1.0 / los, los_cohorts);
    bundle.r_dh = from_cohorts(1.0 / los, los_cohorts);
    if vent_cohorts > 0 {
        bundle.ventilated_fraction = from_cohorts(vent_k as f64 / vent_n as f64, vent_cohorts);
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Region, Severity};
    use std::collections::BTreeMap;

    fn hospital_cohort(n: u64, los: Option<f64>, ventilated: Option<u64>) -> CohortRecord {
        CohortRecord {
            study_id: "h".into(),
            region: Region::Europe,
            severity: Severity::Severe,
            n_patients: n,
            attributes: BTreeMap::new(),
            labs: BTreeMap::new(),
            n_discharged: None,
            n_deceased: None,
            mean_los_days: los,
            n_ventilated: ventilated,
        }
    }

    #[test]
    fn ventilated_fraction_from_counts() {
        let b = extract_calibration(&[hospital_cohort(100, Some(9.0), Some(25))], &Default::default()).unwrap();
        assert_eq!(b.ventilated_fraction.value, 0.25);
        assert_eq!(b.ventilated_fraction.provenance, Provenance::Cohort);
    }

    #[test]
    fn pooled_length_of_stay() {
        let one = extract_calibration(&[hospital_cohort(50, Some(10.0), None)], &Default::default()).unwrap();
        assert_eq!(one.mean_los_days.value, 10.0);
        assert_eq!(one.r_rh.value, 0.1);
        let two = [
            hospital_cohort(100, Some(8.0), None),
            hospital_cohort(300, Some(12.0), None),
        ];
        let b = extract_calibration(&two, &Default::default()).unwrap();
        assert!((b.mean_los_days.value - 11.0).abs() < 1e-12);
        assert_eq!(b.rates().r_dh, b.r_dh.value);
    }

    #[test]
    fn ventilation_falls_back_to_default() {
        let b = extract_calibration(&[hospital_cohort(40, Some(7.0), None)], &Default::default()).unwrap();
        assert_eq!(b.ventilated_fraction.value, 0.25);
        assert_eq!(b.ventilated_fraction.provenance, Provenance::Default);
        assert_eq!(b.sigma.provenance, Provenance::Default);
        let json = serde_json::to_value(b).unwrap();
        assert_eq!(json["ventilated_fraction"]["provenance"], "default");
        assert_eq!(json["mean_los_days"]["provenance"], "cohort");
    }

    #[test]
    fn missing_length_of_stay_is_an_error() {
        assert_eq!(
            extract_calibration(&[hospital_cohort(40, None, Some(3))], &Default::default()),
            Err(CohortError::NoLengthOfStay)
        );
    }
}
