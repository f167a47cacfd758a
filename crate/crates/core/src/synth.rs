//! Deterministic synthetic county: zone mesh, facilities, visitation (as an
//! OD table or raw pings), crosswalk and nested flood rasters for both
//! scenario years, plus a ledger of ground-truth counts.
//!
//! All randomness comes from one ChaCha stream seeded by `seed`, consumed in
//! a fixed order. Raster cells are pure functions of the drawn field
//! parameters, so they are filled in parallel without affecting output.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hazard::{Aep, Peril, ScenarioYear};
use crate::ingest::{
    write_crosswalk, write_facilities, write_manifest, write_od, write_raster, write_zones, Category, CrosswalkTable,
    FacilityRecord, Ping, PingWriter, RasterManifestEntry,
};
use crate::mobility::VisitationNetwork;
use crate::spatial::{AdjacencyGraph, GridRaster, PlanarPoint, Polygon, ZoneGeometry};

/// Minimum distance between a device's home point and any facility.
const HOME_CLEARANCE_M: f64 = 100.0;
/// Maximum offset of a visit fix from the facility point.
const VISIT_OFFSET_M: f64 = 15.0;
/// Daytime visit slots per device and day (08:00 onward, 30 min apart).
const SLOTS_PER_DAY: u32 = 24;
/// Devices without a home never get more events than this, which keeps
/// their cumulative dwell in any zone well under a day.
const HOMELESS_EVENT_CAP: u32 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MobilityData {
    /// Emit an aggregated `od.csv`.
    Od,
    /// Emit raw `pings.csv` from simulated devices.
    Pings {
        n_devices: usize,
        /// Devices that never dwell long enough anywhere to get a home.
        homeless_devices: usize,
        study_days: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    pub seed: u64,
    pub n_zones: usize,
    /// ZCTAs are blocks of `zcta_block × zcta_block` zones.
    pub zcta_block: usize,
    pub n_grocery: usize,
    pub n_hospital: usize,
    pub visit_total: u64,
    pub zipf_exponent: f64,
    /// Number of nearest zones that may send visitors to a facility.
    pub catchment_zones: usize,
    pub raster_cols: usize,
    pub raster_rows: usize,
    pub cellsize: f64,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub perils: Vec<Peril>,
    pub aeps: Vec<Aep>,
    pub depth_growth_2060: f64,
    /// Interior mesh vertices move by up to this fraction of a zone side.
    pub jitter: f64,
    pub min_facility_spacing_m: f64,
    pub mobility: MobilityData,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            seed: 42,
            n_zones: 100,
            zcta_block: 2,
            n_grocery: 40,
            n_hospital: 10,
            visit_total: 10_000,
            zipf_exponent: 1.2,
            catchment_zones: 8,
            raster_cols: 200,
            raster_rows: 200,
            cellsize: 25.0,
            xllcorner: 500_000.0,
            yllcorner: 3_000_000.0,
            perils: Peril::SOURCES.to_vec(),
            aeps: Aep::standard(),
            depth_growth_2060: 1.3,
            jitter: 0.2,
            min_facility_spacing_m: 150.0,
            mobility: MobilityData::Od,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_zones", self.n_zones),
            ("zcta_block", self.zcta_block),
            ("n_grocery", self.n_grocery),
            ("n_hospital", self.n_hospital),
            ("catchment_zones", self.catchment_zones),
            ("raster_cols", self.raster_cols),
            ("raster_rows", self.raster_rows),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.visit_total == 0 {
            return Err(Error::invalid("visit_total must be positive"));
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::invalid("zipf_exponent must be positive"));
        }
        if !(self.cellsize > 0.0 && self.cellsize.is_finite()) {
            return Err(Error::invalid("cellsize must be positive"));
        }
        if !(self.depth_growth_2060 >= 1.0 && self.depth_growth_2060.is_finite()) {
            return Err(Error::invalid("depth_growth_2060 must be at least 1"));
        }
        if !(0.0..=0.24).contains(&self.jitter) {
            return Err(Error::invalid("jitter must lie in [0, 0.24]"));
        }
        if !(self.min_facility_spacing_m >= 0.0 && self.min_facility_spacing_m.is_finite()) {
            return Err(Error::invalid("min_facility_spacing_m must be non-negative"));
        }
        if self.perils.is_empty() || self.aeps.is_empty() {
            return Err(Error::invalid("at least one peril and one AEP are required"));
        }
        if self.perils.contains(&Peril::Combined) {
            return Err(Error::invalid("perils must be pluvial, fluvial or coastal"));
        }
        if self.perils.iter().collect::<BTreeSet<_>>().len() != self.perils.len()
            || self.aeps.iter().collect::<BTreeSet<_>>().len() != self.aeps.len()
        {
            return Err(Error::invalid("duplicate peril or AEP"));
        }
        if let MobilityData::Pings {
            n_devices, study_days, ..
        } = self.mobility
        {
            if n_devices == 0 {
                return Err(Error::invalid("n_devices must be positive"));
            }
            if study_days < 3 {
                return Err(Error::invalid("study_days must be at least 3"));
            }
        }
        Ok(())
    }

    pub fn n_facilities(&self) -> usize {
        self.n_grocery + self.n_hospital
    }

    fn width(&self) -> f64 {
        self.raster_cols as f64 * self.cellsize
    }

    fn height(&self) -> f64 {
        self.raster_rows as f64 * self.cellsize
    }
}

/// Ground truth recorded next to the generated files.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ledger {
    /// Visits that reach the network (events of homed devices in pings mode).
    pub visit_total: u64,
    /// Events generated for devices without a home.
    pub dropped_events: u64,
    /// Homed devices per zone; empty for OD scenarios.
    pub per_zone_homes: BTreeMap<String, u64>,
    pub per_facility_visits: BTreeMap<String, u64>,
    /// SHA-256 of each raster, keyed by path relative to the bundle.
    pub raster_checksums: BTreeMap<String, String>,
}

/// A simulated device and its planned visits `(facility index, day, slot)`.
#[derive(Debug, Clone)]
pub struct Device {
    pub device_id: String,
    pub zone: usize,
    pub home: PlanarPoint,
    pub homed: bool,
    pub visits: Vec<(u32, u32, u32)>,
}

/// Parameters of one peril's flood susceptibility surface on the unit square.
#[derive(Debug, Clone)]
enum Field {
    Pluvial(Vec<(f64, f64, f64, f64)>),
    Fluvial {
        v0: f64,
        amp: f64,
        freq: f64,
        phase: f64,
        width: f64,
    },
    Coastal {
        length: f64,
    },
}

impl Field {
    fn draw(peril: Peril, rng: &mut ChaCha8Rng) -> Self {
        match peril {
            Peril::Fluvial => Field::Fluvial {
                v0: rng.gen_range(0.3..0.7),
                amp: rng.gen_range(0.05..0.15),
                freq: rng.gen_range(0.5..2.0),
                phase: rng.gen_range(0.0..std::f64::consts::TAU),
                width: rng.gen_range(0.03..0.06),
            },
            Peril::Coastal => Field::Coastal {
                length: rng.gen_range(0.05..0.12),
            },
            _ => {
                let k = rng.gen_range(8..16);
                Field::Pluvial(
                    (0..k)
                        .map(|_| {
                            (
                                rng.gen_range(0.0..1.0),
                                rng.gen_range(0.0..1.0),
                                rng.gen_range(0.03..0.10),
                                rng.gen_range(0.5..1.0),
                            )
                        })
                        .collect(),
                )
            }
        }
    }

    /// Susceptibility in [0, 1] at unit coordinates (u east, v north).
    fn at(&self, u: f64, v: f64) -> f64 {
        match self {
            Field::Pluvial(basins) => basins
                .iter()
                .map(|&(cu, cv, r, a)| a * (-((u - cu).powi(2) + (v - cv).powi(2)) / (r * r)).exp())
                .fold(0.0, f64::max),
            Field::Fluvial {
                v0,
                amp,
                freq,
                phase,
                width,
            } => {
                let vc = v0 + amp * (std::f64::consts::TAU * freq * u + phase).sin();
                (-((v - vc) / width).powi(2)).exp()
            }
            Field::Coastal { length } => (-v / length).exp(),
        }
    }
}

/// Depth scale factor for an AEP; grows with rarity and is 1 at 1-in-5.
pub fn severity(aep: Aep) -> f64 {
    1.0 + 0.5 * (aep.return_period() / 5.0).ln()
}

const MAX_DEPTH_FT: f64 = 6.0;
const WET_THRESHOLD: f64 = 0.55;

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// An in-memory scenario. Rasters are produced on demand.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub params: ScenarioParams,
    /// Zone mesh dimensions (columns, rows).
    pub grid: (usize, usize),
    pub zones: Vec<ZoneGeometry>,
    pub facilities: Vec<FacilityRecord>,
    pub crosswalk: CrosswalkTable,
    /// The intended visitation network.
    pub network: VisitationNetwork,
    pub devices: Vec<Device>,
    fields: BTreeMap<Peril, Field>,
}

pub fn build_scenario(params: &ScenarioParams) -> Result<Scenario> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (zcols, zrows) = mesh_shape(params.n_zones, params.width(), params.height());
    let zones = build_mesh(params, zcols, zrows, &mut rng);
    let crosswalk = build_crosswalk(params, &zones, zcols);
    let facilities = place_facilities(params, &mut rng)?;
    let fields = params.perils.iter().map(|&p| (p, Field::draw(p, &mut rng))).collect();

    let per_facility = zipf_allocation(params, &mut rng)?;
    let centroids: Vec<PlanarPoint> = zones.iter().map(ZoneGeometry::centroid).collect();
    let zone_side = (params.width() * params.height() / params.n_zones as f64).sqrt();
    let mut split: Vec<Vec<(usize, u64)>> = Vec::with_capacity(facilities.len());
    for (f, &total) in facilities.iter().zip(&per_facility) {
        let mut near: Vec<(f64, usize)> = centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (c.distance(&f.location), i))
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        near.truncate(params.catchment_zones);
        let weights: Vec<f64> = near
            .iter()
            .map(|&(d, _)| rng.gen_range(0.5..1.5) / (1.0 + d / zone_side))
            .collect();
        let counts = largest_remainder(total, &weights);
        split.push(
            near.iter()
                .map(|&(_, i)| i)
                .zip(counts)
                .filter(|&(_, c)| c > 0)
                .collect(),
        );
    }

    let mut network = VisitationNetwork::new();
    let mut devices = Vec::new();
    match params.mobility {
        MobilityData::Od => {
            for (f, rows) in facilities.iter().zip(&split) {
                for &(i, c) in rows {
                    network.add(&zones[i].zone_id, &f.facility_id, c);
                }
            }
        }
        MobilityData::Pings {
            n_devices,
            homeless_devices,
            study_days,
        } => {
            devices = plan_devices(&zones, &facilities, n_devices, homeless_devices, &mut rng)?;
            assign_events(&zones, &split, &mut devices, study_days, &mut rng)?;
            for d in devices.iter().filter(|d| d.homed) {
                for &(f, _, _) in &d.visits {
                    network.add(&zones[d.zone].zone_id, &facilities[f as usize].facility_id, 1);
                }
            }
        }
    }

    Ok(Scenario {
        params: params.clone(),
        grid: (zcols, zrows),
        zones,
        facilities,
        crosswalk,
        network,
        devices,
        fields,
    })
}

impl Scenario {
    /// Rook adjacency of the mesh by construction: grid neighbors sharing
    /// an edge.
    pub fn expected_adjacency(&self) -> AdjacencyGraph {
        let (c, r) = self.grid;
        let id = |i: usize, j: usize| self.zones[j * c + i].zone_id.clone();
        let mut pairs = Vec::new();
        for j in 0..r {
            for i in 0..c {
                if i + 1 < c {
                    pairs.push((id(i, j), id(i + 1, j)));
                }
                if j + 1 < r {
                    pairs.push((id(i, j), id(i, j + 1)));
                }
            }
        }
        AdjacencyGraph::from_pairs(self.zones.iter().map(|z| z.zone_id.clone()), &pairs)
            .expect("mesh pairs reference mesh zones")
    }

    /// Depth raster for one layer. 2060 layers are the 2020 layers scaled by
    /// `depth_growth_2060`; rarer AEPs are cellwise at least as deep.
    pub fn raster(&self, year: ScenarioYear, peril: Peril, aep: Aep) -> Result<GridRaster> {
        let field = self
            .fields
            .get(&peril)
            .ok_or_else(|| Error::invalid(format!("scenario has no {peril} layer")))?;
        let p = &self.params;
        let s = severity(aep);
        let growth = match year {
            ScenarioYear::Y2020 => None,
            ScenarioYear::Y2060 => Some(p.depth_growth_2060),
        };
        let (nc, nr) = (p.raster_cols, p.raster_rows);
        let mut values = vec![0.0; nc * nr];
        values.par_chunks_mut(nc).enumerate().for_each(|(row, out)| {
            let v = (nr - row) as f64 / nr as f64 - 0.5 / nr as f64;
            for (col, cell) in out.iter_mut().enumerate() {
                let u = (col as f64 + 0.5) / nc as f64;
                let d = round3((MAX_DEPTH_FT * (s * field.at(u, v) - WET_THRESHOLD)).max(0.0));
                *cell = match growth {
                    Some(g) => round3(d * g),
                    None => d,
                };
            }
        });
        GridRaster::new(nc, nr, p.xllcorner, p.yllcorner, p.cellsize, -9999.0, values)
    }

    /// Relative path of a raster within the bundle.
    pub fn raster_name(year: ScenarioYear, peril: Peril, aep: Aep) -> String {
        format!("rasters/{year}_{peril}_{aep}.asc")
    }

    pub fn pings(&self) -> impl Iterator<Item = Ping> + '_ {
        let start = study_start();
        let transit = PlanarPoint::new(self.params.xllcorner - 5000.0, self.params.yllcorner - 5000.0);
        let days = match self.params.mobility {
            MobilityData::Pings { study_days, .. } => study_days,
            MobilityData::Od => 0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed ^ 0x5EED_F1C5);
        self.devices.iter().flat_map(move |d| {
            let mut fixes: Vec<(DateTime<Utc>, PlanarPoint)> = Vec::new();
            if d.homed {
                for day in 0..days as i64 {
                    for h in [21, 23, 25, 27, 29, 31] {
                        fixes.push((start + Duration::days(day) + Duration::hours(h), d.home));
                    }
                }
            }
            for &(f, day, slot) in &d.visits {
                let loc = self.facilities[f as usize].location;
                let t = start + Duration::days(day as i64) + Duration::hours(8) + Duration::minutes(30 * slot as i64);
                for dt in [0, 10] {
                    let a = rng.gen_range(0.0..std::f64::consts::TAU);
                    let r = rng.gen_range(0.0..VISIT_OFFSET_M);
                    let p = PlanarPoint::new(round2(loc.x + r * a.cos()), round2(loc.y + r * a.sin()));
                    fixes.push((t + Duration::minutes(dt), p));
                }
                fixes.push((t + Duration::minutes(15), transit));
            }
            fixes.sort_by_key(|a| a.0);
            let id = d.device_id.clone();
            fixes.into_iter().map(move |(timestamp, location)| Ping {
                device_id: id.clone(),
                timestamp,
                location,
            })
        })
    }

    fn ledger_counts(&self) -> Ledger {
        let mut ledger = Ledger {
            visit_total: self.network.total(),
            ..Ledger::default()
        };
        for f in self.network.facilities() {
            let v: u64 = self.network.facility_visits(f).map_or(0, |m| m.values().sum());
            ledger.per_facility_visits.insert(f.to_string(), v);
        }
        for d in &self.devices {
            if d.homed {
                *ledger
                    .per_zone_homes
                    .entry(self.zones[d.zone].zone_id.clone())
                    .or_insert(0) += 1;
            } else {
                ledger.dropped_events += d.visits.len() as u64;
            }
        }
        ledger
    }
}

fn study_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Writes the full bundle into `out_dir` and returns its ledger (also
/// written as `ledger.json`).
pub fn generate_scenario(params: &ScenarioParams, out_dir: &Path) -> Result<Ledger> {
    let sc = build_scenario(params)?;
    fs::create_dir_all(out_dir.join("rasters")).map_err(|e| Error::io(out_dir, e))?;
    write_zones(&sc.zones, &out_dir.join("zones.geojson"))?;
    write_facilities(&sc.facilities, &out_dir.join("facilities.csv"))?;
    write_crosswalk(&sc.crosswalk, &out_dir.join("crosswalk.csv"))?;
    match params.mobility {
        MobilityData::Od => write_od(&sc.network, &out_dir.join("od.csv"))?,
        MobilityData::Pings { .. } => {
            let mut w = PingWriter::create(&out_dir.join("pings.csv"))?;
            for p in sc.pings() {
                w.write(&p)?;
            }
            w.finish()?;
        }
    }

    let mut ledger = sc.ledger_counts();
    let mut manifest = Vec::new();
    for year in ScenarioYear::ALL {
        for &peril in &params.perils {
            for &aep in &params.aeps {
                let name = Scenario::raster_name(year, peril, aep);
                let path = out_dir.join(&name);
                write_raster(&sc.raster(year, peril, aep)?, &path)?;
                ledger.raster_checksums.insert(name, sha256_file(&path)?);
                manifest.push(RasterManifestEntry { year, peril, aep, path });
            }
        }
    }
    write_manifest(&manifest, &out_dir.join("manifest.csv"))?;
    let ledger_path = out_dir.join("ledger.json");
    let mut text = serde_json::to_string_pretty(&ledger)?;
    text.push('\n');
    fs::write(&ledger_path, text).map_err(|e| Error::io(&ledger_path, e))?;
    Ok(ledger)
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Files of a bundle, relative to `dir`, sorted.
pub fn bundle_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                out.push(path.strip_prefix(base).unwrap_or(&path).to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}

/// Divisor pair `(cols, rows)` of `n` whose cells are closest to square.
fn mesh_shape(n: usize, width: f64, height: f64) -> (usize, usize) {
    (1..=n)
        .filter(|c| n.is_multiple_of(*c))
        .map(|c| (c, n / c))
        .min_by(|a, b| {
            let skew = |(c, r): (usize, usize)| ((width / c as f64) / (height / r as f64)).ln().abs();
            skew(*a).total_cmp(&skew(*b))
        })
        .unwrap_or((n, 1))
}

fn pad(prefix: &str, i: usize, n: usize) -> String {
    let width = n.to_string().len();
    format!("{prefix}{:0width$}", i + 1)
}

fn build_mesh(p: &ScenarioParams, zcols: usize, zrows: usize, rng: &mut ChaCha8Rng) -> Vec<ZoneGeometry> {
    let (w, h) = (p.width() / zcols as f64, p.height() / zrows as f64);
    let mut verts = vec![PlanarPoint::new(0.0, 0.0); (zcols + 1) * (zrows + 1)];
    for j in 0..=zrows {
        for i in 0..=zcols {
            let interior = i > 0 && i < zcols && j > 0 && j < zrows;
            let (mut dx, mut dy) = (0.0, 0.0);
            if interior && p.jitter > 0.0 {
                dx = rng.gen_range(-p.jitter..p.jitter) * w;
                dy = rng.gen_range(-p.jitter..p.jitter) * h;
            }
            verts[j * (zcols + 1) + i] = PlanarPoint::new(
                round2(p.xllcorner + i as f64 * w + dx),
                round2(p.yllcorner + j as f64 * h + dy),
            );
        }
    }
    let v = |i: usize, j: usize| verts[j * (zcols + 1) + i];
    let mut zones = Vec::with_capacity(zcols * zrows);
    for j in 0..zrows {
        for i in 0..zcols {
            let ring = vec![v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1), v(i, j)];
            let id = pad("Z", j * zcols + i, p.n_zones);
            zones.push(ZoneGeometry::new(id, vec![Polygon::new(ring, vec![])]).expect("mesh cells are closed rings"));
        }
    }
    zones
}

fn build_crosswalk(p: &ScenarioParams, zones: &[ZoneGeometry], zcols: usize) -> CrosswalkTable {
    let bcols = zcols.div_ceil(p.zcta_block);
    let zrows = zones.len() / zcols;
    let n_zctas = bcols * zrows.div_ceil(p.zcta_block);
    let pairs = zones.iter().enumerate().map(|(k, z)| {
        let (i, j) = (k % zcols, k / zcols);
        let block = (j / p.zcta_block) * bcols + i / p.zcta_block;
        (z.zone_id.clone(), pad("J", block, n_zctas))
    });
    CrosswalkTable::from_pairs(pairs).expect("each zone maps to one block")
}

fn place_facilities(p: &ScenarioParams, rng: &mut ChaCha8Rng) -> Result<Vec<FacilityRecord>> {
    let n = p.n_facilities();
    let cells = p.raster_cols * p.raster_rows;
    if n > cells {
        return Err(Error::Infeasible(format!(
            "{n} facilities exceed the {cells} raster cells"
        )));
    }
    let s = p.min_facility_spacing_m;
    let area = p.width() * p.height();
    if n as f64 * std::f64::consts::PI * (s / 2.0).powi(2) > 0.5 * area {
        return Err(Error::Infeasible(format!(
            "{n} facilities cannot keep {s} m apart in a {:.0} m x {:.0} m county",
            p.width(),
            p.height()
        )));
    }
    let bucket = s.max(1.0);
    let mut grid: BTreeMap<(i64, i64), Vec<PlanarPoint>> = BTreeMap::new();
    let mut points = Vec::with_capacity(n);
    let max_attempts = 1000 + 200 * n;
    let mut attempts = 0;
    while points.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Infeasible(format!("could not place {n} facilities {s} m apart")));
        }
        let q = PlanarPoint::new(
            round2(p.xllcorner + rng.gen_range(0.0..p.width())),
            round2(p.yllcorner + rng.gen_range(0.0..p.height())),
        );
        let key = (
            ((q.x - p.xllcorner) / bucket) as i64,
            ((q.y - p.yllcorner) / bucket) as i64,
        );
        let clash = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                grid.get(&(key.0 + dx, key.1 + dy))
                    .is_some_and(|v| v.iter().any(|o| o.distance(&q) < s))
            })
        });
        if !clash {
            grid.entry(key).or_default().push(q);
            points.push(q);
        }
    }
    Ok(points
        .into_iter()
        .enumerate()
        .map(|(k, q)| {
            let (cat, id) = if k < p.n_grocery {
                (Category::Grocery, pad("G", k, p.n_grocery))
            } else {
                (Category::Hospital, pad("H", k - p.n_grocery, p.n_hospital))
            };
            FacilityRecord::new(id, cat, q.x, q.y)
        })
        .collect())
}

/// Visits per facility: one each, the rest by Zipf weight over a random
/// popularity ranking.
fn zipf_allocation(p: &ScenarioParams, rng: &mut ChaCha8Rng) -> Result<Vec<u64>> {
    let n = p.n_facilities();
    if p.visit_total < n as u64 {
        return Err(Error::Infeasible(format!(
            "visit_total {} is smaller than the {n} facilities",
            p.visit_total
        )));
    }
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(rng);
    let weights: Vec<f64> = rank.iter().map(|&r| ((r + 1) as f64).powf(-p.zipf_exponent)).collect();
    let extra = largest_remainder(p.visit_total - n as u64, &weights);
    Ok(extra.into_iter().map(|e| e + 1).collect())
}

/// Splits `total` proportionally to `weights` into integers summing to
/// `total` exactly (Hamilton's method, ties to the lower index).
pub fn largest_remainder(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let quotas: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut out: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = out.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let mut left = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

fn plan_devices(
    zones: &[ZoneGeometry],
    facilities: &[FacilityRecord],
    n_devices: usize,
    homeless: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Device>> {
    if n_devices < zones.len() {
        return Err(Error::Infeasible(format!(
            "{n_devices} devices cannot cover {} zones",
            zones.len()
        )));
    }
    if homeless > n_devices {
        return Err(Error::Infeasible("more homeless devices than devices".into()));
    }
    let mut homes = Vec::with_capacity(zones.len());
    for z in zones {
        homes.push(home_point(z, facilities, rng).ok_or_else(|| {
            Error::Infeasible(format!(
                "zone {} has no point {HOME_CLEARANCE_M} m from every facility",
                z.zone_id
            ))
        })?);
    }
    let mut is_homeless = vec![false; n_devices];
    for i in rand::seq::index::sample(rng, n_devices, homeless) {
        is_homeless[i] = true;
    }
    Ok((0..n_devices)
        .map(|k| Device {
            device_id: pad("D", k, n_devices),
            zone: k % zones.len(),
            home: homes[k % zones.len()],
            homed: !is_homeless[k],
            visits: Vec::new(),
        })
        .collect())
}

fn home_point(z: &ZoneGeometry, facilities: &[FacilityRecord], rng: &mut ChaCha8Rng) -> Option<PlanarPoint> {
    let clear = |q: &PlanarPoint| facilities.iter().all(|f| f.location.distance(q) >= HOME_CLEARANCE_M);
    let c = z.centroid();
    let c = PlanarPoint::new(round2(c.x), round2(c.y));
    if z.contains(c) && clear(&c) {
        return Some(c);
    }
    let bb = z.bbox();
    for _ in 0..500 {
        let q = PlanarPoint::new(
            round2(rng.gen_range(bb.min_x..bb.max_x)),
            round2(rng.gen_range(bb.min_y..bb.max_y)),
        );
        if z.contains(q) && clear(&q) {
            return Some(q);
        }
    }
    None
}

/// Gives every planned visit a device homed in the origin zone and a free
/// (day, slot) with at most one visit per device, facility and day.
fn assign_events(
    zones: &[ZoneGeometry],
    split: &[Vec<(usize, u64)>],
    devices: &mut [Device],
    study_days: u32,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut by_zone: Vec<Vec<usize>> = vec![Vec::new(); zones.len()];
    for (k, d) in devices.iter().enumerate() {
        by_zone[d.zone].push(k);
    }
    let mut used: Vec<HashSet<(u32, u32)>> = vec![HashSet::new(); devices.len()];
    let mut slots: Vec<Vec<u32>> = vec![vec![0; study_days as usize]; devices.len()];
    for (f, rows) in split.iter().enumerate() {
        let f = f as u32;
        for &(zone, count) in rows {
            let members = &by_zone[zone];
            for _ in 0..count {
                let start = rng.gen_range(0..members.len());
                let day0 = rng.gen_range(0..study_days);
                let mut placed = false;
                'device: for step in 0..members.len() {
                    let k = members[(start + step) % members.len()];
                    if !devices[k].homed && devices[k].visits.len() as u32 >= HOMELESS_EVENT_CAP {
                        continue;
                    }
                    for dd in 0..study_days {
                        let day = (day0 + dd) % study_days;
                        if slots[k][day as usize] < SLOTS_PER_DAY && !used[k].contains(&(f, day)) {
                            used[k].insert((f, day));
                            let slot = slots[k][day as usize];
                            slots[k][day as usize] += 1;
                            devices[k].visits.push((f, day, slot));
                            placed = true;
                            break 'device;
                        }
                    }
                }
                if !placed {
                    return Err(Error::Infeasible(format!(
                        "zone {} has too few device-days for its visits; raise n_devices or study_days",
                        zones[zone].zone_id
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_contiguity_graph;

    fn small() -> ScenarioParams {
        ScenarioParams {
            n_zones: 24,
            n_grocery: 12,
            n_hospital: 4,
            visit_total: 2_000,
            raster_cols: 60,
            raster_rows: 40,
            cellsize: 50.0,
            ..ScenarioParams::default()
        }
    }

    #[test]
    fn mesh_matches_constructed_adjacency() {
        let sc = build_scenario(&small()).unwrap();
        assert_eq!(sc.zones.len(), 24);
        let built = build_contiguity_graph(&sc.zones).unwrap();
        assert_eq!(built, sc.expected_adjacency());
    }

    #[test]
    fn od_total_matches_target() {
        let sc = build_scenario(&small()).unwrap();
        assert_eq!(sc.network.total(), 2_000);
        assert_eq!(sc.network.facilities().count(), 16);
    }

    #[test]
    fn largest_remainder_is_exact() {
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0.0, 2.0]), vec![0, 7]);
        assert_eq!(largest_remainder(5, &[]), Vec::<u64>::new());
    }

    #[test]
    fn rasters_nest_across_aeps_and_years() {
        let sc = build_scenario(&small()).unwrap();
        for peril in Peril::SOURCES {
            let mut prev: Option<GridRaster> = None;
            for aep in Aep::standard() {
                let r20 = sc.raster(ScenarioYear::Y2020, peril, aep).unwrap();
                let r60 = sc.raster(ScenarioYear::Y2060, peril, aep).unwrap();
                assert!(r20.values.iter().zip(&r60.values).all(|(a, b)| b >= a));
                if let Some(p) = &prev {
                    assert!(p.values.iter().zip(&r20.values).all(|(a, b)| b >= a));
                }
                prev = Some(r20);
            }
        }
    }

    #[test]
    fn infeasible_parameters() {
        let crowded = ScenarioParams {
            n_grocery: 5000,
            ..small()
        };
        assert!(matches!(build_scenario(&crowded), Err(Error::Infeasible(_))));
        let starved = ScenarioParams {
            visit_total: 3,
            ..small()
        };
        assert!(matches!(build_scenario(&starved), Err(Error::Infeasible(_))));
        assert!(build_scenario(&ScenarioParams {
            zipf_exponent: 0.0,
            ..small()
        })
        .is_err());
    }

    #[test]
    fn pings_plan_conserves_events() {
        let p = ScenarioParams {
            mobility: MobilityData::Pings {
                n_devices: 600,
                homeless_devices: 5,
                study_days: 14,
            },
            ..small()
        };
        let sc = build_scenario(&p).unwrap();
        let ledger = sc.ledger_counts();
        assert_eq!(ledger.visit_total + ledger.dropped_events, 2_000);
        assert_eq!(ledger.per_zone_homes.values().sum::<u64>(), 595);
    }
}
