use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{csv_error, csv_reader, csv_writer, expect_header, looks_like_lonlat, parse_f64};
use crate::diag::{WarningKind, Warnings};
use crate::error::{Error, Result};
use crate::hazard::{Aep, Peril, ScenarioYear};
use crate::mobility::VisitationNetwork;
use crate::spatial::PlanarPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Grocery,
    Hospital,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Grocery, Category::Hospital];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Grocery => "grocery",
            Category::Hospital => "hospital",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grocery" => Ok(Category::Grocery),
            "hospital" => Ok(Category::Hospital),
            other => Err(Error::invalid(format!("unknown category {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacilityRecord {
    pub facility_id: String,
    pub category: Category,
    pub location: PlanarPoint,
    pub naics: Option<String>,
}

impl FacilityRecord {
    pub fn new(id: impl Into<String>, category: Category, x: f64, y: f64) -> Self {
        Self {
            facility_id: id.into(),
            category,
            location: PlanarPoint::new(x, y),
            naics: None,
        }
    }
}

/// Counts facilities per category.
pub fn category_counts(facilities: &[FacilityRecord]) -> BTreeMap<Category, usize> {
    let mut out = BTreeMap::new();
    for f in facilities {
        *out.entry(f.category).or_insert(0) += 1;
    }
    out
}

/// Reads `facility_id,category,x,y[,naics]`.
pub fn load_facilities(path: &Path, warnings: &mut Warnings) -> Result<Vec<FacilityRecord>> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &["facility_id", "category", "x", "y"], &["naics"])?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let at = |msg: String| Error::invalid(format!("{} line {line}: {msg}", path.display()));
        let id = rec[0].to_string();
        if id.is_empty() {
            return Err(at("empty facility_id".into()));
        }
        let category: Category = rec[1]
            .parse()
            .map_err(|_| at(format!("unknown category {:?}", &rec[1])))?;
        let x = parse_f64(&rec[2], "x coordinate", path, line)?;
        let y = parse_f64(&rec[3], "y coordinate", path, line)?;
        let naics = rec.get(4).filter(|s| !s.is_empty()).map(str::to_string);
        if !seen.insert(id.clone()) {
            return Err(at(format!("duplicate facility_id {id}")));
        }
        out.push(FacilityRecord {
            facility_id: id,
            category,
            location: PlanarPoint::new(x, y),
            naics,
        });
    }
    if looks_like_lonlat(out.iter().map(|f| (f.location.x, f.location.y))) {
        warnings.push(
            WarningKind::LonLatCoordinates,
            format!(
                "{}: coordinates look like lon/lat; planar meters are required",
                path.display()
            ),
        );
    }
    Ok(out)
}

pub fn write_facilities(facilities: &[FacilityRecord], path: &Path) -> Result<()> {
    let with_naics = facilities.iter().any(|f| f.naics.is_some());
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    if with_naics {
        w.write_record(["facility_id", "category", "x", "y", "naics"])
            .map_err(io)?;
    } else {
        w.write_record(["facility_id", "category", "x", "y"]).map_err(io)?;
    }
    for f in facilities {
        let mut row = vec![
            f.facility_id.clone(),
            f.category.to_string(),
            f.location.x.to_string(),
            f.location.y.to_string(),
        ];
        if with_naics {
            row.push(f.naics.clone().unwrap_or_default());
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `origin_zone_id,facility_id,visits`. Duplicate pairs are summed and
/// zero-visit rows dropped.
pub fn load_od(path: &Path) -> Result<VisitationNetwork> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &["origin_zone_id", "facility_id", "visits"], &[])?;
    let mut net = VisitationNetwork::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| csv_error(path, e))? {
        let line = rec.position().map_or(0, |p| p.line());
        let at = |msg: String| Error::invalid(format!("{} line {line}: {msg}", path.display()));
        let (origin, facility) = (&rec[0], &rec[1]);
        if origin.is_empty() || facility.is_empty() {
            return Err(at("empty origin_zone_id or facility_id".into()));
        }
        let visits: i64 = rec[2]
            .parse()
            .map_err(|_| at(format!("visits must be a non-negative integer, found {:?}", &rec[2])))?;
        if visits < 0 {
            return Err(at(format!("negative visits {visits}")));
        }
        if visits > 0 {
            net.add(origin, facility, visits as u64);
        }
    }
    Ok(net)
}

/// Writes rows sorted by (origin, facility).
pub fn write_od(net: &VisitationNetwork, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["origin_zone_id", "facility_id", "visits"])
        .map_err(io)?;
    let mut rows: Vec<(&str, &str, u64)> = net.iter().collect();
    rows.sort_unstable();
    for (o, f, v) in rows {
        w.write_record([o, f, v.to_string().as_str()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Many-to-one mapping from origin zones to ZCTAs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrosswalkTable {
    map: BTreeMap<String, String>,
}

impl CrosswalkTable {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut map = BTreeMap::new();
        for (z, j) in pairs {
            let (z, j) = (z.into(), j.into());
            if let Some(prev) = map.get(&z) {
                if prev != &j {
                    return Err(Error::invalid(format!("zone {z} mapped to both {prev} and {j}")));
                }
            }
            map.insert(z, j);
        }
        Ok(Self { map })
    }

    pub fn zcta_of(&self, zone_id: &str) -> Option<&str> {
        self.map.get(zone_id).map(String::as_str)
    }

    pub fn zones_in(&self, zcta: &str) -> BTreeSet<&str> {
        self.map
            .iter()
            .filter(|(_, j)| j.as_str() == zcta)
            .map(|(z, _)| z.as_str())
            .collect()
    }

    pub fn zctas(&self) -> BTreeSet<&str> {
        self.map.values().map(String::as_str).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(z, j)| (z.as_str(), j.as_str()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Reads `zone_id,zcta_id`.
pub fn load_crosswalk(path: &Path, warnings: &mut Warnings) -> Result<CrosswalkTable> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &["zone_id", "zcta_id"], &[])?;
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let (z, j) = (rec[0].to_string(), rec[1].to_string());
        if z.is_empty() || j.is_empty() {
            return Err(Error::invalid(format!(
                "{} line {line}: empty zone_id or zcta_id",
                path.display()
            )));
        }
        match map.get(&z) {
            Some(prev) if prev != &j => {
                return Err(Error::invalid(format!(
                    "{} line {line}: zone {z} listed with ZCTAs {prev} and {j}",
                    path.display()
                )))
            }
            Some(_) => warnings.push(
                WarningKind::DuplicateCrosswalkRow,
                format!("{} line {line}: zone {z} listed twice", path.display()),
            ),
            None => {
                map.insert(z, j);
            }
        }
    }
    if map.is_empty() {
        warnings.push(
            WarningKind::EmptyCrosswalk,
            format!("{}: crosswalk has no rows", path.display()),
        );
    }
    Ok(CrosswalkTable { map })
}

pub fn write_crosswalk(table: &CrosswalkTable, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["zone_id", "zcta_id"]).map_err(io)?;
    for (z, j) in table.iter() {
        w.write_record([z, j]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One hazard layer in the raster catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterManifestEntry {
    pub year: ScenarioYear,
    pub peril: Peril,
    pub aep: Aep,
    pub path: PathBuf,
}

/// Reads `year,peril,aep,path`. Relative paths resolve against the manifest's
/// directory. Non-standard AEPs are rejected unless `allow_custom_aep`.
pub fn load_manifest(path: &Path, allow_custom_aep: bool) -> Result<Vec<RasterManifestEntry>> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &["year", "peril", "aep", "path"], &[])?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let at = |e: Error| match e {
            Error::Validation(m) | Error::OutOfRange(m) => {
                Error::invalid(format!("{} line {line}: {m}", path.display()))
            }
            other => other,
        };
        let year: ScenarioYear = rec[0].parse().map_err(at)?;
        let peril: Peril = rec[1].parse().map_err(at)?;
        if peril == Peril::Combined {
            return Err(at(Error::invalid(
                "manifest layers must be pluvial, fluvial or coastal",
            )));
        }
        let aep: Aep = rec[2].parse().map_err(at)?;
        if !allow_custom_aep && !aep.is_standard() {
            return Err(at(Error::invalid(format!(
                "AEP {aep} is not one of 0.2, 0.1, 0.04, 0.01, 0.002 (use --allow-custom-aep)"
            ))));
        }
        if !seen.insert((year, peril, aep)) {
            return Err(at(Error::invalid(format!("duplicate layer {year} {peril} AEP {aep}"))));
        }
        let p = PathBuf::from(&rec[3]);
        let p = if p.is_absolute() { p } else { base.join(p) };
        out.push(RasterManifestEntry {
            year,
            peril,
            aep,
            path: p,
        });
    }
    Ok(out)
}

/// Writes the manifest with paths made relative to `path`'s directory when
/// possible.
pub fn write_manifest(entries: &[RasterManifestEntry], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut w = csv_writer(path)?;
    let io = |e: csv::Error| csv_error(path, e);
    w.write_record(["year", "peril", "aep", "path"]).map_err(io)?;
    for e in entries {
        let rel = e.path.strip_prefix(base).unwrap_or(&e.path);
        w.write_record([
            e.year.to_string(),
            e.peril.to_string(),
            e.aep.to_string(),
            rel.to_string_lossy().into_owned(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
