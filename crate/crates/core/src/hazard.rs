//! Facility flood exposure: peril combination, buffered mean depth,
//! AEP-weighted exposure, year deltas and return-period summaries.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diag::{WarningKind, Warnings};
use crate::error::{Error, Result};
use crate::ingest::{self, Category, FacilityRecord, RasterManifestEntry};
use crate::numeric::{exact_sum, median, round_to};
use crate::spatial::{sample_buffer_cells, GridRaster, PlanarPoint};

/// Annual exceedance probabilities of the five standard return periods
/// (1-in-5 through 1-in-500).
pub const STANDARD_AEPS: [f64; 5] = [0.20, 0.10, 0.04, 0.01, 0.002];

pub const DEFAULT_BUFFER_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioYear {
    #[serde(rename = "2020")]
    Y2020,
    #[serde(rename = "2060")]
    Y2060,
}

impl ScenarioYear {
    pub const ALL: [ScenarioYear; 2] = [ScenarioYear::Y2020, ScenarioYear::Y2060];

    pub fn as_u16(self) -> u16 {
        match self {
            ScenarioYear::Y2020 => 2020,
            ScenarioYear::Y2060 => 2060,
        }
    }
}

impl fmt::Display for ScenarioYear {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u16())
    }
}

impl FromStr for ScenarioYear {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "2020" => Ok(ScenarioYear::Y2020),
            "2060" => Ok(ScenarioYear::Y2060),
            other => Err(Error::invalid(format!("unknown scenario year {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Peril {
    Pluvial,
    Fluvial,
    Coastal,
    Combined,
}

impl Peril {
    pub const SOURCES: [Peril; 3] = [Peril::Pluvial, Peril::Fluvial, Peril::Coastal];

    pub fn as_str(self) -> &'static str {
        match self {
            Peril::Pluvial => "pluvial",
            Peril::Fluvial => "fluvial",
            Peril::Coastal => "coastal",
            Peril::Combined => "combined",
        }
    }
}

impl fmt::Display for Peril {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Peril {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pluvial" => Ok(Peril::Pluvial),
            "fluvial" => Ok(Peril::Fluvial),
            "coastal" => Ok(Peril::Coastal),
            "combined" => Ok(Peril::Combined),
            other => Err(Error::invalid(format!("unknown peril {other:?}"))),
        }
    }
}

/// Annual exceedance probability in (0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Aep(f64);

impl Aep {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p <= 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::OutOfRange(format!("AEP {p} not in (0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_standard(self) -> bool {
        STANDARD_AEPS.iter().any(|&s| (s - self.0).abs() < 1e-12)
    }

    pub fn return_period(self) -> f64 {
        1.0 / self.0
    }

    pub fn standard() -> Vec<Aep> {
        STANDARD_AEPS.iter().map(|&p| Aep(p)).collect()
    }
}

impl TryFrom<f64> for Aep {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Aep::new(p)
    }
}

impl From<Aep> for f64 {
    fn from(a: Aep) -> f64 {
        a.0
    }
}

impl Eq for Aep {}

impl std::hash::Hash for Aep {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl PartialOrd for Aep {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Most frequent event first (0.20 before 0.002).
impl Ord for Aep {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

impl fmt::Display for Aep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Aep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("malformed AEP {s:?}")))?;
        Aep::new(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FloodLayerKey {
    pub year: ScenarioYear,
    pub aep: Aep,
    pub peril: Peril,
}

/// Per-AEP weights for the exposure sum.
#[derive(Debug, Clone, PartialEq)]
pub struct AepWeights(BTreeMap<Aep, f64>);

impl AepWeights {
    /// Weight of each AEP is the probability itself times `scale`.
    pub fn from_probabilities(aeps: impl IntoIterator<Item = Aep>, scale: f64) -> Result<Self> {
        Self::from_pairs(aeps.into_iter().map(|a| (a, a.value() * scale)))
    }

    pub fn standard(scale: f64) -> Result<Self> {
        Self::from_probabilities(Aep::standard(), scale)
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Aep, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (a, w) in pairs {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::OutOfRange(format!("weight {w} for AEP {a} must be positive")));
            }
            map.insert(a, w);
        }
        Ok(Self(map))
    }

    pub fn get(&self, aep: Aep) -> Option<f64> {
        self.0.get(&aep).copied()
    }

    pub fn set(&mut self, aep: Aep, w: f64) -> Result<()> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::OutOfRange(format!("weight {w} for AEP {aep} must be positive")));
        }
        self.0.insert(aep, w);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (Aep, f64)> + '_ {
        self.0.iter().map(|(a, w)| (*a, *w))
    }
}

/// Per-cell maximum across perils. Nodata is treated as absent: a cell is
/// nodata only when every input is nodata there.
pub fn combine_perils(layers: &[(Peril, &GridRaster)]) -> Result<GridRaster> {
    let (_, first) = layers
        .first()
        .ok_or_else(|| Error::EmptyGroup("no peril layers to combine".into()))?;
    for (peril, r) in &layers[1..] {
        if !r.same_geometry(first) {
            return Err(Error::GridMismatch(peril.to_string()));
        }
    }
    let mut out = (*first).clone();
    for (_, r) in &layers[1..] {
        merge_max(&mut out, r);
    }
    Ok(out)
}

/// In-place peril merge used when layers are streamed one at a time.
pub fn merge_max(acc: &mut GridRaster, other: &GridRaster) {
    let (acc_nd, other_nd) = (acc.nodata, other.nodata);
    for (a, &b) in acc.values.iter_mut().zip(&other.values) {
        if b == other_nd {
            continue;
        }
        if *a == acc_nd || b > *a {
            *a = b;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferDepth {
    pub depth_ft: f64,
    pub flooded: bool,
    /// Number of data cells whose centers fall within the buffer.
    pub cells_sampled: usize,
}

/// Mean over the positive cells of a sample; zero and not flooded when no
/// cell is positive.
pub fn mean_positive_depth(cells: &[f64]) -> BufferDepth {
    let wet: Vec<f64> = cells.iter().copied().filter(|&v| v > 0.0).collect();
    if wet.is_empty() {
        return BufferDepth {
            depth_ft: 0.0,
            flooded: false,
            cells_sampled: cells.len(),
        };
    }
    BufferDepth {
        depth_ft: wet.iter().sum::<f64>() / wet.len() as f64,
        flooded: true,
        cells_sampled: cells.len(),
    }
}

/// Mean flood depth over the positive cells within `buffer_m` of a facility.
pub fn facility_mean_depth(raster: &GridRaster, location: PlanarPoint, buffer_m: f64) -> BufferDepth {
    mean_positive_depth(&sample_buffer_cells(raster, location, buffer_m))
}

/// Exposure as the weighted sum of per-AEP depths. Every depth must have a
/// weight.
pub fn aep_weighted_exposure(depths: &BTreeMap<Aep, f64>, weights: &AepWeights) -> Result<f64> {
    let terms = depths
        .iter()
        .map(|(a, d)| {
            weights
                .get(*a)
                .map(|w| d * w)
                .ok_or_else(|| Error::MissingWeight(a.to_string()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(exact_sum(terms))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilityExposure {
    pub facility_id: String,
    pub category: Category,
    pub depths: BTreeMap<(ScenarioYear, Aep), BufferDepth>,
    pub fe: BTreeMap<ScenarioYear, f64>,
}

impl FacilityExposure {
    pub fn depth(&self, year: ScenarioYear, aep: Aep) -> Option<f64> {
        self.depths.get(&(year, aep)).map(|d| d.depth_ft)
    }

    pub fn delta(&self) -> Result<f64> {
        let get = |y: ScenarioYear| {
            self.fe.get(&y).copied().ok_or_else(|| Error::MissingInput {
                facility: self.facility_id.clone(),
                what: format!("exposure for {y}"),
            })
        };
        Ok(get(ScenarioYear::Y2060)? - get(ScenarioYear::Y2020)?)
    }
}

/// Computes FE for every year present in `depths` of each facility.
pub fn assemble_exposures(
    facilities: &[FacilityRecord],
    depths: &BTreeMap<(ScenarioYear, Aep), Vec<BufferDepth>>,
    weights: &AepWeights,
) -> Result<Vec<FacilityExposure>> {
    let years: Vec<ScenarioYear> = {
        let mut y: Vec<_> = depths.keys().map(|(y, _)| *y).collect();
        y.dedup();
        y
    };
    facilities
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut per_layer = BTreeMap::new();
            for (key, col) in depths {
                let d = col.get(i).ok_or_else(|| Error::MissingInput {
                    facility: f.facility_id.clone(),
                    what: format!("depth sample for {} AEP {}", key.0, key.1),
                })?;
                per_layer.insert(*key, *d);
            }
            let mut fe = BTreeMap::new();
            for &y in &years {
                let by_aep: BTreeMap<Aep, f64> = per_layer
                    .iter()
                    .filter(|((yy, _), _)| *yy == y)
                    .map(|((_, a), d)| (*a, d.depth_ft))
                    .collect();
                fe.insert(y, aep_weighted_exposure(&by_aep, weights)?);
            }
            Ok(FacilityExposure {
                facility_id: f.facility_id.clone(),
                category: f.category,
                depths: per_layer,
                fe,
            })
        })
        .collect()
}

/// Samples every facility against one combined raster.
pub fn sample_facilities(raster: &GridRaster, facilities: &[FacilityRecord], buffer_m: f64) -> Vec<BufferDepth> {
    facilities
        .par_iter()
        .map(|f| facility_mean_depth(raster, f.location, buffer_m))
        .collect()
}

#[derive(Debug, Clone)]
pub struct HazardOptions {
    pub buffer_m: f64,
    pub weights: AepWeights,
}

impl Default for HazardOptions {
    fn default() -> Self {
        Self {
            buffer_m: DEFAULT_BUFFER_M,
            weights: AepWeights::standard(1.0).expect("standard weights are positive"),
        }
    }
}

/// Loads every manifest layer, combines perils per (year, AEP), samples all
/// facilities and computes their exposures. Layers are read one group at a
/// time so at most a few rasters are resident.
pub fn assess_exposure(
    facilities: &[FacilityRecord],
    manifest: &[RasterManifestEntry],
    opts: &HazardOptions,
    warnings: &mut Warnings,
) -> Result<Vec<FacilityExposure>> {
    let mut groups: BTreeMap<(ScenarioYear, Aep), Vec<&RasterManifestEntry>> = BTreeMap::new();
    for e in manifest {
        groups.entry((e.year, e.aep)).or_default().push(e);
    }
    type Sampled = ((ScenarioYear, Aep), Result<Vec<BufferDepth>>);
    let results: Vec<Sampled> = groups
        .into_par_iter()
        .map(|(key, entries)| {
            let run = || -> Result<Vec<BufferDepth>> {
                let mut acc: Option<GridRaster> = None;
                for e in entries {
                    let r = ingest::load_raster(&e.path)?;
                    match acc.as_mut() {
                        None => acc = Some(r),
                        Some(a) => {
                            if !a.same_geometry(&r) {
                                return Err(Error::GridMismatch(format!(
                                    "{} ({} {} AEP {})",
                                    e.path.display(),
                                    e.peril,
                                    e.year,
                                    e.aep
                                )));
                            }
                            merge_max(a, &r);
                        }
                    }
                }
                let combined = acc.expect("group has at least one layer");
                Ok(sample_facilities(&combined, facilities, opts.buffer_m))
            };
            (key, run())
        })
        .collect();

    let mut depths = BTreeMap::new();
    for (key, res) in results {
        let col = res?;
        for (f, d) in facilities.iter().zip(&col) {
            if d.cells_sampled == 0 {
                warnings.push(
                    WarningKind::RasterCoverage,
                    format!(
                        "facility {} buffer misses the {} AEP {} raster",
                        f.facility_id, key.0, key.1
                    ),
                );
            }
        }
        depths.insert(key, col);
    }
    assemble_exposures(facilities, &depths, &opts.weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortStats {
    pub facilities: usize,
    /// Percentage of facilities whose exposure increased.
    pub share_increased_pct: f64,
    pub median_delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaReport {
    pub deltas: Vec<(String, f64)>,
    pub cohorts: BTreeMap<Category, CohortStats>,
}

/// FE 2060 minus FE 2020 per facility, plus per-category cohort statistics.
pub fn delta_exposure(exposures: &[FacilityExposure]) -> Result<DeltaReport> {
    let mut deltas = Vec::with_capacity(exposures.len());
    let mut by_cat: BTreeMap<Category, Vec<f64>> = BTreeMap::new();
    for e in exposures {
        let d = e.delta()?;
        deltas.push((e.facility_id.clone(), d));
        by_cat.entry(e.category).or_default().push(d);
    }
    let cohorts = by_cat
        .into_iter()
        .map(|(cat, ds)| {
            let up = ds.iter().filter(|&&d| d > 0.0).count();
            let stats = CohortStats {
                facilities: ds.len(),
                share_increased_pct: 100.0 * up as f64 / ds.len() as f64,
                median_delta: median(&ds).unwrap_or(0.0),
            };
            (cat, stats)
        })
        .collect();
    Ok(DeltaReport { deltas, cohorts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureSummaryRow {
    pub year: ScenarioYear,
    pub aep: Aep,
    pub max_depth: f64,
    /// Mean over all facilities, dry ones counted as zero.
    pub mean_depth: f64,
    /// Percentage of facilities with depth > 0, rounded to 2 decimals.
    pub pct_flooded: f64,
}

pub fn summarize_depths(year: ScenarioYear, aep: Aep, depths: &[f64]) -> ExposureSummaryRow {
    let n = depths.len();
    let (max_depth, mean_depth, pct_flooded) = if n == 0 {
        (0.0, 0.0, 0.0)
    } else {
        let max = depths.iter().copied().fold(0.0, f64::max);
        let mean = depths.iter().sum::<f64>() / n as f64;
        let wet = depths.iter().filter(|&&d| d > 0.0).count();
        (max, mean, round_to(100.0 * wet as f64 / n as f64, 2))
    };
    ExposureSummaryRow {
        year,
        aep,
        max_depth,
        mean_depth,
        pct_flooded,
    }
}

/// One row per return period of `year`, most frequent event first.
pub fn exposure_summary(exposures: &[FacilityExposure], year: ScenarioYear) -> Vec<ExposureSummaryRow> {
    let mut cols: BTreeMap<Aep, Vec<f64>> = BTreeMap::new();
    for e in exposures {
        for ((y, a), d) in &e.depths {
            if *y == year {
                cols.entry(*a).or_default().push(d.depth_ft);
            }
        }
    }
    cols.into_iter().map(|(a, ds)| summarize_depths(year, a, &ds)).collect()
}
