//! Visitation-weighted mean exposure (V-WME) per ZCTA and the regional
//! year-over-year summary.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::criticality::CriticalityScore;
use crate::diag::{WarningKind, Warnings};
use crate::error::{Error, Result};
use crate::hazard::{FacilityExposure, ScenarioYear};
use crate::ingest::CrosswalkTable;
use crate::mobility::VisitationNetwork;
use crate::numeric::{exact_sum, round_to};

/// Visits from residents of each ZCTA to each facility.
pub type ZctaVisits = BTreeMap<String, BTreeMap<String, u64>>;

/// Sums zone-level visits into their ZCTAs. Visits from zones missing in the
/// crosswalk are excluded with a warning per zone.
pub fn zcta_visits(net: &VisitationNetwork, crosswalk: &CrosswalkTable, warnings: &mut Warnings) -> ZctaVisits {
    let mut out: ZctaVisits = BTreeMap::new();
    let mut unmapped: BTreeMap<&str, u64> = BTreeMap::new();
    for (origin, facility, v) in net.iter() {
        match crosswalk.zcta_of(origin) {
            Some(j) => {
                *out.entry(j.to_string())
                    .or_default()
                    .entry(facility.to_string())
                    .or_insert(0) += v
            }
            None => *unmapped.entry(origin).or_insert(0) += v,
        }
    }
    for (zone, v) in unmapped {
        warnings.push(
            WarningKind::UnmappedZone,
            format!("zone {zone} is not in the crosswalk; its {v} visits are excluded"),
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    /// Every facility residents of the ZCTA visit, wherever it is.
    #[default]
    Behavioral,
    /// Only visited facilities located inside the ZCTA.
    Containment,
}

impl fmt::Display for Membership {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Membership::Behavioral => "behavioral",
            Membership::Containment => "containment",
        })
    }
}

impl FromStr for Membership {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "behavioral" => Ok(Membership::Behavioral),
            "containment" => Ok(Membership::Containment),
            other => Err(Error::invalid(format!(
                "unknown membership {other:?} (behavioral|containment)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FcSource {
    #[default]
    Norm,
    Raw,
}

impl fmt::Display for FcSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FcSource::Norm => "norm",
            FcSource::Raw => "raw",
        })
    }
}

impl FromStr for FcSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(FcSource::Norm),
            "raw" => Ok(FcSource::Raw),
            other => Err(Error::invalid(format!("unknown fc source {other:?} (norm|raw)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalIndex {
    pub zcta_id: String,
    pub year: ScenarioYear,
    pub vwme: f64,
    pub visit_weight_total: u64,
    pub facility_count: usize,
}

/// Weighted mean of `FC_f * FE_f` with weights `V_f` over the facilities in
/// `visits`. `None` when the ZCTA has no visits.
pub fn vwme(
    zcta_id: &str,
    year: ScenarioYear,
    fc: &BTreeMap<String, f64>,
    fe: &BTreeMap<String, f64>,
    visits: &BTreeMap<String, u64>,
) -> Result<Option<RegionalIndex>> {
    let mut terms = Vec::new();
    let mut total: u64 = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (f, &v) in visits {
        if v == 0 {
            continue;
        }
        let missing = |what: &str| Error::MissingInput {
            facility: f.clone(),
            what: what.to_string(),
        };
        let c = *fc.get(f).ok_or_else(|| missing("a criticality score"))?;
        let e = *fe
            .get(f)
            .ok_or_else(|| missing(&format!("an exposure score for {year}")))?;
        let risk = c * e;
        lo = lo.min(risk);
        hi = hi.max(risk);
        terms.push(risk * v as f64);
        total += v;
    }
    if total == 0 {
        return Ok(None);
    }
    // The exact weighted mean lies in [lo, hi]; clamp away rounding excursions.
    let value = (exact_sum(terms) / total as f64).clamp(lo, hi);
    Ok(Some(RegionalIndex {
        zcta_id: zcta_id.to_string(),
        year,
        vwme: value,
        visit_weight_total: total,
        facility_count: visits.values().filter(|&&v| v > 0).count(),
    }))
}

#[derive(Debug, Clone, Default)]
pub struct RegionalOptions {
    pub membership: Membership,
    pub fc_source: FcSource,
    /// Facility -> ZCTA it lies in; required for containment membership.
    pub facility_zcta: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionalOutput {
    pub indices: Vec<RegionalIndex>,
    /// ZCTAs of the crosswalk without any qualifying visits.
    pub insufficient: Vec<String>,
}

impl RegionalOutput {
    pub fn for_year(&self, year: ScenarioYear) -> Vec<&RegionalIndex> {
        self.indices.iter().filter(|i| i.year == year).collect()
    }
}

/// V-WME for every crosswalk ZCTA and every year the exposures carry.
pub fn compute_regional(
    net: &VisitationNetwork,
    crosswalk: &CrosswalkTable,
    scores: &[CriticalityScore],
    exposures: &[FacilityExposure],
    opts: &RegionalOptions,
    warnings: &mut Warnings,
) -> Result<RegionalOutput> {
    let mut visits = zcta_visits(net, crosswalk, warnings);
    if opts.membership == Membership::Containment {
        for (j, row) in visits.iter_mut() {
            row.retain(|f, _| opts.facility_zcta.get(f).is_some_and(|fj| fj == j));
        }
    }
    let fc: BTreeMap<String, f64> = scores
        .iter()
        .map(|s| {
            let v = match opts.fc_source {
                FcSource::Norm => s.fc_norm,
                FcSource::Raw => s.fc_raw,
            };
            (s.facility_id.clone(), v)
        })
        .collect();
    let years: BTreeSet<ScenarioYear> = exposures.iter().flat_map(|e| e.fe.keys().copied()).collect();
    let all_zctas: BTreeSet<&str> = crosswalk
        .zctas()
        .into_iter()
        .chain(visits.keys().map(String::as_str))
        .collect();

    let empty = BTreeMap::new();
    let mut indices = Vec::new();
    let mut insufficient = Vec::new();
    for &year in &years {
        let fe: BTreeMap<String, f64> = exposures
            .iter()
            .filter_map(|e| e.fe.get(&year).map(|v| (e.facility_id.clone(), *v)))
            .collect();
        for &j in &all_zctas {
            let row = visits.get(j).unwrap_or(&empty);
            match vwme(j, year, &fc, &fe, row)? {
                Some(idx) => indices.push(idx),
                None if year == *years.iter().next().unwrap() => insufficient.push(j.to_string()),
                None => {}
            }
        }
    }
    if !insufficient.is_empty() {
        warnings.push_counted(
            WarningKind::InsufficientData,
            insufficient.len(),
            format!("{} ZCTAs have no visits and no index", insufficient.len()),
        );
    }
    Ok(RegionalOutput { indices, insufficient })
}

/// A metric compared across the two scenario years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YearComparison {
    pub value_2020: f64,
    pub value_2060: f64,
    pub delta: f64,
    /// `delta / value_2020 * 100`, rounded to 2 decimals; `None` when the
    /// 2020 value is zero.
    pub pct_change: Option<f64>,
}

impl YearComparison {
    pub fn new(value_2020: f64, value_2060: f64) -> Self {
        let delta = value_2060 - value_2020;
        let pct_change = (value_2020 != 0.0).then(|| round_to(delta / value_2020 * 100.0, 2));
        Self {
            value_2020,
            value_2060,
            delta,
            pct_change,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionalSummary {
    pub zcta_count: usize,
    pub mean_vwme: YearComparison,
    /// ZCTAs whose V-WME exceeds that year's mean.
    pub above_mean: YearComparison,
}

pub fn regional_summary(indices_2020: &[&RegionalIndex], indices_2060: &[&RegionalIndex]) -> Result<RegionalSummary> {
    if indices_2020.is_empty() || indices_2060.is_empty() {
        return Err(Error::EmptyGroup("no regional indices to summarize".into()));
    }
    let ids = |v: &[&RegionalIndex]| v.iter().map(|i| i.zcta_id.clone()).collect::<BTreeSet<_>>();
    if ids(indices_2020) != ids(indices_2060) {
        return Err(Error::invalid(
            "regional indices cover different ZCTA sets in 2020 and 2060",
        ));
    }
    let stats = |v: &[&RegionalIndex]| {
        let mean = v.iter().map(|i| i.vwme).sum::<f64>() / v.len() as f64;
        let above = v.iter().filter(|i| i.vwme > mean).count();
        (mean, above)
    };
    let (m20, a20) = stats(indices_2020);
    let (m60, a60) = stats(indices_2060);
    Ok(RegionalSummary {
        zcta_count: indices_2020.len(),
        mean_vwme: YearComparison::new(m20, m60),
        above_mean: YearComparison::new(a20 as f64, a60 as f64),
    })
}
