use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CohortRecord, Manifest, Region, Severity};

/// Pooled statistics over fewer reporting patients than this are suppressed.
pub const SUPPRESSION_THRESHOLD: u64 = 100;

/// Attribute name used for the projected-mortality row of a summary table.
pub const PROJECTED_MORTALITY: &str = "projected_mortality";

/// Which cohorts a statistic pools over. Both fields `None` means everyone.
///
/// Unspecified-severity cohorts only ever count towards filters without a
/// severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Subpopulation {
    pub region: Option<Region>,
    pub severity: Option<Severity>,
}

impl Subpopulation {
    pub const ALL: Subpopulation = Subpopulation {
        region: None,
        severity: None,
    };

    pub const fn region(r: Region) -> Self {
        Self {
            region: Some(r),
            severity: None,
        }
    }

    pub const fn severity(s: Severity) -> Self {
        Self {
            region: None,
            severity: Some(s),
        }
    }

    /// The six column groups of the published summary table.
    pub fn table_columns() -> [Subpopulation; 6] {
        [
            Self::ALL,
            Self::severity(Severity::Mild),
            Self::severity(Severity::Severe),
            Self::region(Region::Asia),
            Self::region(Region::Europe),
            Self::region(Region::NorthAmerica),
        ]
    }

    pub fn matches(&self, r: &CohortRecord) -> bool {
        self.region.is_none_or(|x| x == r.region) && self.severity.is_none_or(|x| x == r.severity)
    }
}

impl fmt::Display for Subpopulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.region, self.severity) {
            (None, None) => f.write_str("all"),
            (Some(r), None) => write!(f, "region={r}"),
            (None, Some(s)) => write!(f, "severity={s}"),
            (Some(r), Some(s)) => write!(f, "region={r},severity={s}"),
        }
    }
}

impl FromStr for Subpopulation {
    type Err = String;

    /// Accepts `all`, `region=asia`, `severity=mild`, both joined by a comma,
    /// or a bare region or severity name.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("all") {
            return Ok(Self::ALL);
        }
        let mut out = Self::ALL;
        for part in s.split(',') {
            let part = part.trim();
            match part.split_once('=') {
                Some(("region", v)) => out.region = Some(v.parse()?),
                Some(("severity", v)) => out.severity = Some(v.parse()?),
                Some((k, _)) => return Err(format!("unknown filter key {k:?}")),
                None => {
                    if let Ok(r) = part.parse() {
                        out.region = Some(r);
                    } else if let Ok(sev) = part.parse() {
                        out.severity = Some(sev);
                    } else {
                        return Err(format!("unknown subpopulation {part:?}"));
                    }
                }
            }
        }
        Ok(out)
    }
}

impl Serialize for Subpopulation {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Subpopulation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A pooled ratio over the cohorts that report it.
///
/// `prevalence` and `n_positive` are `None` when the pool is suppressed;
/// `no_data` marks pools with no contributing cohort at all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub attribute: String,
    pub subpopulation: Subpopulation,
    pub n_cohorts: usize,
    pub n_reporting: u64,
    pub n_positive: Option<u64>,
    pub prevalence: Option<f64>,
    pub suppressed: bool,
    pub no_data: bool,
}

impl AggregateStat {
    fn pooled(attribute: &str, subpopulation: Subpopulation, pairs: impl Iterator<Item = (u64, u64)>) -> Self {
        let (mut n_cohorts, mut den, mut num) = (0, 0u64, 0u64);
        for (reporting, positive) in pairs {
            n_cohorts += 1;
            den += reporting;
            num += positive;
        }
        let suppressed = den < SUPPRESSION_THRESHOLD;
        AggregateStat {
            attribute: attribute.to_string(),
            subpopulation,
            n_cohorts,
            n_reporting: den,
            n_positive: (!suppressed).then_some(num),
            prevalence: (!suppressed).then(|| num as f64 / den as f64),
            suppressed,
            no_data: n_cohorts == 0 || den == 0,
        }
    }
}

/// Σ n_positive / Σ n_reporting over cohorts in `filter` that report
/// `attribute`.
pub fn aggregate_prevalence(records: &[CohortRecord], attribute: &str, filter: Subpopulation) -> AggregateStat {
    let pairs = records
        .iter()
        .filter(|r| filter.matches(r))
        .filter_map(|r| r.attributes.get(attribute))
        .map(|c| (c.n_reporting, c.n_positive));
    AggregateStat::pooled(attribute, filter, pairs)
}

/// Deaths over resolved (discharged or deceased) patients. Cohorts with
/// nobody resolved yet, or that omit either count, do not contribute.
pub fn projected_mortality(records: &[CohortRecord], filter: Subpopulation) -> AggregateStat {
    let pairs = records
        .iter()
        .filter(|r| filter.matches(r))
        .filter_map(|r| Some((r.resolved()?, r.n_deceased?)))
        .filter(|(resolved, _)| *resolved > 0);
    AggregateStat::pooled(PROJECTED_MORTALITY, filter, pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabStat {
    pub lab: String,
    pub subpopulation: Subpopulation,
    pub unit: Option<String>,
    pub n_cohorts: usize,
    pub n_reporting: u64,
    /// Mean weighted by the number of patients reporting.
    pub mean: Option<f64>,
    pub suppressed: bool,
    pub no_data: bool,
}

/// Count-weighted mean of a lab. Ingestion guarantees a single unit per lab.
pub fn aggregate_lab(records: &[CohortRecord], lab: &str, filter: Subpopulation) -> LabStat {
    let mut unit = None;
    let (mut n_cohorts, mut n, mut weighted) = (0, 0u64, 0.0);
    for v in records
        .iter()
        .filter(|r| filter.matches(r))
        .filter_map(|r| r.labs.get(lab))
    {
        unit.get_or_insert_with(|| v.unit.clone());
        n_cohorts += 1;
        n += v.n_reporting;
        weighted += v.n_reporting as f64 * v.mean_value;
    }
    let suppressed = n < SUPPRESSION_THRESHOLD;
    LabStat {
        lab: lab.to_string(),
        subpopulation: filter,
        unit,
        n_cohorts,
        n_reporting: n,
        mean: (!suppressed).then(|| weighted / n as f64),
        suppressed,
        no_data: n == 0,
    }
}

/// Every manifest attribute for every filter, followed by projected
/// mortality, grouped by attribute.
pub fn summary_table(records: &[CohortRecord], manifest: &Manifest, filters: &[Subpopulation]) -> Vec<AggregateStat> {
    let mut out = Vec::with_capacity((manifest.attributes.len() + 1) * filters.len());
    for a in &manifest.attributes {
        out.extend(filters.iter().map(|f| aggregate_prevalence(records, &a.name, *f)));
    }
    out.extend(filters.iter().map(|f| projected_mortality(records, *f)));
    out
}

/// One CSV row per statistic; suppressed and missing values are empty cells.
pub fn write_stats_csv<W: Write>(w: W, stats: &[AggregateStat]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "attribute",
        "subpopulation",
        "n_cohorts",
        "n_reporting",
        "n_positive",
        "prevalence",
        "suppressed",
        "no_data",
    ])?;
    for s in stats {
        wtr.write_record([
            s.attribute.clone(),
            s.subpopulation.to_string(),
            s.n_cohorts.to_string(),
            s.n_reporting.to_string(),
            s.n_positive.map(|v| v.to_string()).unwrap_or_default(),
            s.prevalence.map(|v| v.to_string()).unwrap_or_default(),
            s.suppressed.to_string(),
            s.no_data.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
