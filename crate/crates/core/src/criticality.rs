//! Functional criticality: catchments, substitutability-adjusted dependence,
//! the per-facility score, min-max normalization, level classification and
//! category summaries.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{WarningKind, Warnings};
use crate::error::{Error, Result};
use crate::ingest::{Category, FacilityRecord};
use crate::mobility::VisitationNetwork;
use crate::numeric::round_to;
use crate::spatial::AdjacencyGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceEntry {
    pub origin: String,
    pub visits: u64,
    pub substitutability: u32,
    /// `visits / substitutability`
    pub dependence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceVector {
    pub facility_id: String,
    pub entries: Vec<DependenceEntry>,
}

impl DependenceVector {
    pub fn catchment_size(&self) -> usize {
        self.entries.len()
    }

    /// Sum of the adjusted dependence over the catchment.
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.dependence).sum()
    }
}

/// Origins with at least one visit to `facility_id`, sorted by zone_id.
pub fn catchment(net: &VisitationNetwork, facility_id: &str) -> Result<Vec<String>> {
    match net.facility_visits(facility_id) {
        Some(row) if !row.is_empty() => Ok(row.keys().cloned().collect()),
        _ => Err(Error::EmptyCatchment(facility_id.to_string())),
    }
}

pub fn dependence_vector(
    net: &VisitationNetwork,
    facility_id: &str,
    adjacency: &AdjacencyGraph,
) -> Result<DependenceVector> {
    let row = net
        .facility_visits(facility_id)
        .filter(|r| !r.is_empty())
        .ok_or_else(|| Error::EmptyCatchment(facility_id.to_string()))?;
    let entries = row
        .iter()
        .map(|(origin, &visits)| {
            let s = adjacency
                .substitutability(origin)
                .ok_or_else(|| Error::UnknownZone(origin.clone()))?;
            Ok(DependenceEntry {
                origin: origin.clone(),
                visits,
                substitutability: s,
                dependence: visits as f64 / f64::from(s),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DependenceVector {
        facility_id: facility_id.to_string(),
        entries,
    })
}

/// Mean adjusted dependence over the catchment.
pub fn functional_criticality(dv: &DependenceVector) -> Result<f64> {
    if dv.entries.is_empty() {
        return Err(Error::EmptyCatchment(dv.facility_id.clone()));
    }
    Ok(dv.mass() / dv.entries.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    #[default]
    PerCategory,
    Global,
}

impl fmt::Display for Grouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Grouping::PerCategory => "per-category",
            Grouping::Global => "global",
        })
    }
}

impl FromStr for Grouping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-category" => Ok(Grouping::PerCategory),
            "global" => Ok(Grouping::Global),
            other => Err(Error::invalid(format!(
                "unknown grouping {other:?} (per-category|global)"
            ))),
        }
    }
}

/// Min-max normalization within each group. Output order follows input.
/// A constant group maps to 0 with a warning.
pub fn normalize_scores(raw: &[(Category, f64)], grouping: Grouping, warnings: &mut Warnings) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyGroup("no scores to normalize".into()));
    }
    let key = |c: Category| match grouping {
        Grouping::PerCategory => Some(c),
        Grouping::Global => None,
    };
    let mut bounds: BTreeMap<Option<Category>, (f64, f64)> = BTreeMap::new();
    for &(c, x) in raw {
        let b = bounds.entry(key(c)).or_insert((x, x));
        b.0 = b.0.min(x);
        b.1 = b.1.max(x);
    }
    for (g, (lo, hi)) in &bounds {
        if lo == hi {
            let name = g.map_or("all facilities".to_string(), |c| c.to_string());
            warnings.push(
                WarningKind::ConstantGroup,
                format!("normalization group {name} is constant ({lo}); every member maps to 0"),
            );
        }
    }
    Ok(raw
        .iter()
        .map(|&(c, x)| {
            let (lo, hi) = bounds[&key(c)];
            if hi > lo {
                ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Medium,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Medium, Level::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Medium => "medium",
            Level::High => "high",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Level::Low),
            "medium" => Ok(Level::Medium),
            "high" => Ok(Level::High),
            other => Err(Error::invalid(format!("unknown level {other:?}"))),
        }
    }
}

/// Lower bounds of the medium and high levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub medium: f64,
    pub high: f64,
}

impl Thresholds {
    pub fn new(medium: f64, high: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&medium) || !(0.0..=1.0).contains(&high) {
            return Err(Error::OutOfRange("thresholds must lie within [0, 1]".into()));
        }
        if medium >= high {
            return Err(Error::invalid("thresholds must increase"));
        }
        Ok(Self { medium, high })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            medium: 0.30,
            high: 0.50,
        }
    }
}

pub fn classify_level(fc_norm: f64, thresholds: &Thresholds) -> Result<Level> {
    if !(0.0..=1.0).contains(&fc_norm) {
        return Err(Error::OutOfRange(format!("normalized score {fc_norm} outside [0, 1]")));
    }
    Ok(if fc_norm >= thresholds.high {
        Level::High
    } else if fc_norm >= thresholds.medium {
        Level::Medium
    } else {
        Level::Low
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityScore {
    pub facility_id: String,
    pub category: Category,
    pub fc_raw: f64,
    pub fc_norm: f64,
    pub level: Level,
    pub catchment_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoringOutput {
    /// In facility-list order, empty-catchment facilities omitted.
    pub scores: Vec<CriticalityScore>,
    /// Facilities with no recorded visits; their score is undefined.
    pub empty_catchment: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScoringOptions {
    pub grouping: Grouping,
    pub thresholds: Thresholds,
}

/// Scores every listed facility against the network.
pub fn score_facilities(
    net: &VisitationNetwork,
    facilities: &[FacilityRecord],
    adjacency: &AdjacencyGraph,
    opts: ScoringOptions,
    warnings: &mut Warnings,
) -> Result<ScoringOutput> {
    let known: std::collections::HashSet<&str> = facilities.iter().map(|f| f.facility_id.as_str()).collect();
    if let Some(f) = net.facilities().find(|f| !known.contains(f)) {
        return Err(Error::invalid(format!(
            "visitation data references unknown facility {f}"
        )));
    }
    let raw: Vec<Result<Option<(f64, usize)>>> = facilities
        .par_iter()
        .map(|f| match dependence_vector(net, &f.facility_id, adjacency) {
            Ok(dv) => Ok(Some((functional_criticality(&dv)?, dv.catchment_size()))),
            Err(Error::EmptyCatchment(_)) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();

    let mut scored = Vec::new();
    let mut empty = Vec::new();
    for (f, r) in facilities.iter().zip(raw) {
        match r? {
            Some((fc, n)) => scored.push((f, fc, n)),
            None => empty.push(f.facility_id.clone()),
        }
    }
    if !empty.is_empty() {
        warnings.push_counted(
            WarningKind::EmptyCatchment,
            empty.len(),
            format!("{} facilities have no recorded visits and are not scored", empty.len()),
        );
    }
    if scored.is_empty() {
        return Ok(ScoringOutput {
            scores: Vec::new(),
            empty_catchment: empty,
        });
    }
    let pairs: Vec<(Category, f64)> = scored.iter().map(|(f, fc, _)| (f.category, *fc)).collect();
    let norm = normalize_scores(&pairs, opts.grouping, warnings)?;
    let scores = scored
        .into_iter()
        .zip(norm)
        .map(|((f, fc_raw, n), fc_norm)| {
            Ok(CriticalityScore {
                facility_id: f.facility_id.clone(),
                category: f.category,
                fc_raw,
                fc_norm,
                level: classify_level(fc_norm, &opts.thresholds)?,
                catchment_size: n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoringOutput {
        scores,
        empty_catchment: empty,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategorySummary {
    pub category: Category,
    pub total: usize,
    pub counts: BTreeMap<Level, usize>,
    /// Share of the category per level, percent rounded to 1 decimal.
    pub percentages: BTreeMap<Level, f64>,
    pub mean_fc_norm: f64,
}

/// Percent of `total` per level count, rounded to one decimal.
pub fn level_percentages(counts: &BTreeMap<Level, usize>, total: usize) -> BTreeMap<Level, f64> {
    Level::ALL
        .iter()
        .map(|&l| {
            let c = counts.get(&l).copied().unwrap_or(0);
            let pct = if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            };
            (l, round_to(pct, 1))
        })
        .collect()
}

pub fn category_summary(scores: &[CriticalityScore]) -> Vec<CategorySummary> {
    let mut by_cat: BTreeMap<Category, Vec<&CriticalityScore>> = BTreeMap::new();
    for s in scores {
        by_cat.entry(s.category).or_default().push(s);
    }
    by_cat
        .into_iter()
        .map(|(category, ss)| {
            let mut counts: BTreeMap<Level, usize> = Level::ALL.iter().map(|&l| (l, 0)).collect();
            for s in &ss {
                *counts.get_mut(&s.level).unwrap() += 1;
            }
            let total = ss.len();
            CategorySummary {
                category,
                total,
                percentages: level_percentages(&counts, total),
                counts,
                mean_fc_norm: ss.iter().map(|s| s.fc_norm).sum::<f64>() / total as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(rows: &[(&'static str, &'static str, u64)]) -> VisitationNetwork {
        rows.iter().copied().collect()
    }

    #[test]
    fn catchment_sorted_and_empty_error() {
        let n = net(&[("B", "F", 1), ("A", "F", 4)]);
        assert_eq!(catchment(&n, "F").unwrap(), vec!["A", "B"]);
        assert!(matches!(catchment(&n, "G"), Err(Error::EmptyCatchment(_))));
    }

    #[test]
    fn dependence_entries() {
        let n = net(&[("A", "F", 4), ("B", "F", 6), ("C", "F", 5)]);
        // A has 2 neighbors, B has 3, C is isolated.
        let adj = AdjacencyGraph::from_pairs(
            ["A", "B", "C", "X", "Y", "Z"],
            &[("A", "X"), ("A", "Y"), ("B", "X"), ("B", "Y"), ("B", "Z")],
        )
        .unwrap();
        let dv = dependence_vector(&n, "F", &adj).unwrap();
        let d: Vec<f64> = dv.entries.iter().map(|e| e.dependence).collect();
        assert_eq!(d, vec![2.0, 2.0, 5.0]);
        assert_eq!(functional_criticality(&dv).unwrap(), 3.0);
    }

    #[test]
    fn exact_division_and_floor() {
        let adj = AdjacencyGraph::from_pairs(["A", "B", "C", "D", "I"], &[("A", "B"), ("A", "C"), ("A", "D")]).unwrap();
        let dv = dependence_vector(&net(&[("A", "F", 6)]), "F", &adj).unwrap();
        assert_eq!(dv.entries[0].dependence, 2.0);
        let dv = dependence_vector(&net(&[("I", "F", 5)]), "F", &adj).unwrap();
        assert_eq!(dv.entries[0].dependence, 5.0);
        let dv = dependence_vector(&net(&[("I", "F", 7)]), "F", &adj).unwrap();
        assert_eq!(functional_criticality(&dv).unwrap(), 7.0);
    }

    #[test]
    fn unknown_catchment_zone_named() {
        let adj = AdjacencyGraph::from_pairs(["A"], &[] as &[(&str, &str)]).unwrap();
        let err = dependence_vector(&net(&[("Q", "F", 1)]), "F", &adj).unwrap_err();
        assert!(err.to_string().contains("Q"));
    }

    #[test]
    fn min_max_normalization() {
        let mut w = Warnings::new();
        let raw = [
            (Category::Grocery, 2.0),
            (Category::Grocery, 5.0),
            (Category::Grocery, 8.0),
        ];
        assert_eq!(
            normalize_scores(&raw, Grouping::PerCategory, &mut w).unwrap(),
            vec![0.0, 0.5, 1.0]
        );
        assert!(w.is_empty());

        let single = [(Category::Hospital, 3.0)];
        assert_eq!(
            normalize_scores(&single, Grouping::PerCategory, &mut w).unwrap(),
            vec![0.0]
        );
        assert_eq!(w.count(WarningKind::ConstantGroup), 1);

        assert!(normalize_scores(&[], Grouping::Global, &mut w).is_err());
    }

    #[test]
    fn per_category_maxima_each_map_to_one() {
        let mut w = Warnings::new();
        let raw = [
            (Category::Grocery, 1.0),
            (Category::Grocery, 3.0),
            (Category::Hospital, 10.0),
            (Category::Hospital, 50.0),
        ];
        let per = normalize_scores(&raw, Grouping::PerCategory, &mut w).unwrap();
        assert_eq!(per, vec![0.0, 1.0, 0.0, 1.0]);
        let global = normalize_scores(&raw, Grouping::Global, &mut w).unwrap();
        assert_eq!(global[1], 2.0 / 49.0);
        assert_eq!(global[3], 1.0);
    }

    #[test]
    fn classification_boundaries() {
        let t = Thresholds::default();
        assert_eq!(classify_level(0.29, &t).unwrap(), Level::Low);
        assert_eq!(classify_level(0.30, &t).unwrap(), Level::Medium);
        assert_eq!(classify_level(0.50, &t).unwrap(), Level::High);
        assert_eq!(classify_level(0.0, &t).unwrap(), Level::Low);
        assert_eq!(classify_level(1.0, &t).unwrap(), Level::High);
        assert!(classify_level(1.01, &t).is_err());
        assert!(classify_level(-0.1, &t).is_err());
        assert!(Thresholds::new(0.5, 0.3)
            .unwrap_err()
            .to_string()
            .contains("thresholds must increase"));
    }

    #[test]
    fn level_percentages_round_to_one_decimal() {
        let counts = |l, m, h| -> BTreeMap<Level, usize> {
            [(Level::Low, l), (Level::Medium, m), (Level::High, h)]
                .into_iter()
                .collect()
        };
        let g = level_percentages(&counts(235, 72, 9), 316);
        assert_eq!(g.values().copied().collect::<Vec<_>>(), vec![74.4, 22.8, 2.8]);
        let h = level_percentages(&counts(55, 20, 13), 88);
        assert_eq!(h.values().copied().collect::<Vec<_>>(), vec![62.5, 22.7, 14.8]);
    }

    #[test]
    fn one_facility_summary() {
        let s = CriticalityScore {
            facility_id: "H".into(),
            category: Category::Hospital,
            fc_raw: 3.0,
            fc_norm: 0.0,
            level: Level::Low,
            catchment_size: 1,
        };
        let sum = category_summary(&[s]);
        assert_eq!(sum.len(), 1);
        assert_eq!(sum[0].percentages[&Level::Low], 100.0);
        assert_eq!(sum[0].counts[&Level::High], 0);
    }

    #[test]
    fn scoring_excludes_empty_catchments() {
        let facilities = vec![
            FacilityRecord::new("F1", Category::Grocery, 0.0, 0.0),
            FacilityRecord::new("F2", Category::Grocery, 0.0, 0.0),
            FacilityRecord::new("F3", Category::Grocery, 0.0, 0.0),
        ];
        let adj = AdjacencyGraph::from_pairs(["A", "B"], &[("A", "B")]).unwrap();
        let n = net(&[("A", "F1", 2), ("B", "F3", 8)]);
        let mut w = Warnings::new();
        let out = score_facilities(&n, &facilities, &adj, ScoringOptions::default(), &mut w).unwrap();
        assert_eq!(out.empty_catchment, vec!["F2"]);
        assert_eq!(out.scores.len(), 2);
        assert_eq!(out.scores[1].fc_norm, 1.0);
        assert_eq!(out.scores[1].level, Level::High);

        let stray = net(&[("A", "ZZ", 1)]);
        assert!(score_facilities(&stray, &facilities, &adj, ScoringOptions::default(), &mut w).is_err());
    }
}
