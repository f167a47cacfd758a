//! Report tables and GeoJSON layers, their readers, and the output emitter
//! that records what was written.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use lifeline_core::criticality::{CategorySummary, CriticalityScore, Level};
use lifeline_core::hazard::{BufferDepth, ExposureSummaryRow, FacilityExposure};
use lifeline_core::ingest::geometry_json;
use lifeline_core::numeric::format_sig6;
use lifeline_core::regional::{RegionalIndex, RegionalSummary, YearComparison};
use lifeline_core::{
    AdjacencyGraph, Aep, Category, CrosswalkTable, Error, FacilityRecord, Result, ScenarioYear, ZoneGeometry,
};
use serde_json::{json, Value};

use crate::error::CliError;

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

fn reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != header {
        return Err(Error::Validation(format!(
            "{}: header must be {}",
            path.display(),
            header.join(",")
        )));
    }
    Ok(rdr)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::Io {
                path: path.to_path_buf(),
                source: io,
            };
        }
        unreachable!("io error kind checked above");
    }
    Error::Validation(format!("{}: {e}", path.display()))
}

fn flush(path: &Path, mut w: csv::Writer<File>) -> Result<()> {
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn num(x: f64) -> String {
    format_sig6(x)
}

fn opt_num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_string(), format_sig6)
}

fn parse_num(path: &Path, line: u64, field: &str, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Validation(format!("{} line {line}: non-numeric {field} {s:?}", path.display())))
}

fn parse_opt(path: &Path, line: u64, field: &str, s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        Ok(None)
    } else {
        parse_num(path, line, field, s).map(Some)
    }
}

fn parse_field<T: std::str::FromStr<Err = Error>>(path: &Path, line: u64, s: &str) -> Result<T> {
    s.parse()
        .map_err(|e: Error| Error::Validation(format!("{} line {line}: {e}", path.display())))
}

/// Directed edge list; isolated zones appear once with an empty neighbor.
pub fn write_adjacency(adj: &AdjacencyGraph, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(["zone_id", "neighbor_id"]).map_err(e)?;
    for (z, nb) in adj.iter() {
        if nb.is_empty() {
            w.write_record([z, ""]).map_err(e)?;
        }
        for n in nb {
            w.write_record([z, n.as_str()]).map_err(e)?;
        }
    }
    flush(path, w)
}

pub fn read_adjacency(path: &Path) -> Result<AdjacencyGraph> {
    let mut rdr = reader(path, &["zone_id", "neighbor_id"])?;
    let mut ids = Vec::new();
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        ids.push(rec[0].to_string());
        if !rec[1].is_empty() {
            ids.push(rec[1].to_string());
            pairs.push((rec[0].to_string(), rec[1].to_string()));
        }
    }
    let adj = AdjacencyGraph::from_pairs(ids, &pairs)?;
    if !adj.is_symmetric() {
        return Err(Error::Validation(format!(
            "{}: adjacency is not symmetric",
            path.display()
        )));
    }
    Ok(adj)
}

const SCORES_HEADER: [&str; 6] = [
    "facility_id",
    "category",
    "fc_raw",
    "fc_norm",
    "level",
    "catchment_size",
];

pub fn write_scores(scores: &[CriticalityScore], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(SCORES_HEADER).map_err(e)?;
    for s in scores {
        w.write_record([
            s.facility_id.clone(),
            s.category.to_string(),
            num(s.fc_raw),
            num(s.fc_norm),
            s.level.to_string(),
            s.catchment_size.to_string(),
        ])
        .map_err(e)?;
    }
    flush(path, w)
}

pub fn read_scores(path: &Path) -> Result<Vec<CriticalityScore>> {
    let mut rdr = reader(path, &SCORES_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let level: Level = parse_field(path, line, &rec[4])?;
        out.push(CriticalityScore {
            facility_id: rec[0].to_string(),
            category: parse_field::<Category>(path, line, &rec[1])?,
            fc_raw: parse_num(path, line, "fc_raw", &rec[2])?,
            fc_norm: parse_num(path, line, "fc_norm", &rec[3])?,
            level,
            catchment_size: rec[5]
                .parse()
                .map_err(|_| Error::Validation(format!("{} line {line}: bad catchment_size", path.display())))?,
        });
    }
    Ok(out)
}

const EXPOSURE_HEADER: [&str; 5] = ["facility_id", "year", "aep", "depth_ft", "flooded"];

pub fn write_exposure(exposures: &[FacilityExposure], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(EXPOSURE_HEADER).map_err(e)?;
    for x in exposures {
        for ((year, aep), d) in &x.depths {
            w.write_record([
                x.facility_id.clone(),
                year.to_string(),
                aep.to_string(),
                num(d.depth_ft),
                d.flooded.to_string(),
            ])
            .map_err(e)?;
        }
    }
    flush(path, w)
}

pub type DepthTable = BTreeMap<String, BTreeMap<(ScenarioYear, Aep), BufferDepth>>;

pub fn read_exposure(path: &Path) -> Result<DepthTable> {
    let mut rdr = reader(path, &EXPOSURE_HEADER)?;
    let mut out: DepthTable = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let year: ScenarioYear = parse_field(path, line, &rec[1])?;
        let aep: Aep = parse_field(path, line, &rec[2])?;
        let depth_ft = parse_num(path, line, "depth_ft", &rec[3])?;
        let flooded = match &rec[4] {
            "true" => true,
            "false" => false,
            other => {
                return Err(Error::Validation(format!(
                    "{} line {line}: flooded must be true or false, found {other:?}",
                    path.display()
                )))
            }
        };
        out.entry(rec[0].to_string()).or_default().insert(
            (year, aep),
            BufferDepth {
                depth_ft,
                flooded,
                cells_sampled: 0,
            },
        );
    }
    Ok(out)
}

const FE_HEADER: [&str; 4] = ["facility_id", "fe_2020", "fe_2060", "delta"];

pub fn write_fe(exposures: &[FacilityExposure], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(FE_HEADER).map_err(e)?;
    for x in exposures {
        w.write_record([
            x.facility_id.clone(),
            opt_num(x.fe.get(&ScenarioYear::Y2020).copied()),
            opt_num(x.fe.get(&ScenarioYear::Y2060).copied()),
            opt_num(x.delta().ok()),
        ])
        .map_err(e)?;
    }
    flush(path, w)
}

/// Facility exposures per year as read back from `fe.csv`.
pub fn read_fe(path: &Path) -> Result<BTreeMap<String, BTreeMap<ScenarioYear, f64>>> {
    let mut rdr = reader(path, &FE_HEADER)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let mut fe = BTreeMap::new();
        if let Some(v) = parse_opt(path, line, "fe_2020", &rec[1])? {
            fe.insert(ScenarioYear::Y2020, v);
        }
        if let Some(v) = parse_opt(path, line, "fe_2060", &rec[2])? {
            fe.insert(ScenarioYear::Y2060, v);
        }
        out.insert(rec[0].to_string(), fe);
    }
    Ok(out)
}

/// Joins exposure rows and FE values into per-facility exposures, in
/// facility-list order.
pub fn exposures_from_tables(
    facilities: &[FacilityRecord],
    depths: &DepthTable,
    fe: &BTreeMap<String, BTreeMap<ScenarioYear, f64>>,
) -> Vec<FacilityExposure> {
    facilities
        .iter()
        .filter(|f| depths.contains_key(&f.facility_id) || fe.contains_key(&f.facility_id))
        .map(|f| FacilityExposure {
            facility_id: f.facility_id.clone(),
            category: f.category,
            depths: depths.get(&f.facility_id).cloned().unwrap_or_default(),
            fe: fe.get(&f.facility_id).cloned().unwrap_or_default(),
        })
        .collect()
}

const VWME_HEADER: [&str; 5] = ["zcta_id", "year", "vwme", "visit_weight_total", "facility_count"];

pub fn write_vwme(indices: &[RegionalIndex], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(VWME_HEADER).map_err(e)?;
    for i in indices {
        w.write_record([
            i.zcta_id.clone(),
            i.year.to_string(),
            num(i.vwme),
            i.visit_weight_total.to_string(),
            i.facility_count.to_string(),
        ])
        .map_err(e)?;
    }
    flush(path, w)
}

pub fn read_vwme(path: &Path) -> Result<Vec<RegionalIndex>> {
    let mut rdr = reader(path, &VWME_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |i: usize, name: &str| -> Result<u64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Validation(format!("{} line {line}: bad {name}", path.display())))
        };
        out.push(RegionalIndex {
            zcta_id: rec[0].to_string(),
            year: parse_field(path, line, &rec[1])?,
            vwme: parse_num(path, line, "vwme", &rec[2])?,
            visit_weight_total: int(3, "visit_weight_total")?,
            facility_count: int(4, "facility_count")? as usize,
        });
    }
    Ok(out)
}

pub fn write_category_summary(rows: &[CategorySummary], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(["category", "level", "count", "percent", "mean_fc_norm"])
        .map_err(e)?;
    for s in rows {
        for level in Level::ALL {
            w.write_record([
                s.category.to_string(),
                level.to_string(),
                s.counts.get(&level).copied().unwrap_or(0).to_string(),
                num(s.percentages.get(&level).copied().unwrap_or(0.0)),
                num(s.mean_fc_norm),
            ])
            .map_err(e)?;
        }
    }
    flush(path, w)
}

pub fn write_exposure_summary(rows: &[ExposureSummaryRow], path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(["year", "aep", "return_period", "max_depth", "mean_depth", "pct_flooded"])
        .map_err(e)?;
    for r in rows {
        w.write_record([
            r.year.to_string(),
            r.aep.to_string(),
            num(r.aep.return_period()),
            num(r.max_depth),
            num(r.mean_depth),
            num(r.pct_flooded),
        ])
        .map_err(e)?;
    }
    flush(path, w)
}

pub fn write_regional_summary(summary: Option<&RegionalSummary>, path: &Path) -> Result<()> {
    let mut w = writer(path)?;
    let e = |x| csv_err(path, x);
    w.write_record(["metric", "value_2020", "value_2060", "delta", "pct_change"])
        .map_err(e)?;
    if let Some(s) = summary {
        let row = |name: &str, c: &YearComparison| {
            [
                name.to_string(),
                num(c.value_2020),
                num(c.value_2060),
                num(c.delta),
                opt_num(c.pct_change),
            ]
        };
        w.write_record(row("mean_vwme", &s.mean_vwme)).map_err(e)?;
        w.write_record(row("zctas_above_mean", &s.above_mean)).map_err(e)?;
    }
    flush(path, w)
}

fn num_or_null(x: Option<f64>) -> Value {
    x.filter(|v| v.is_finite()).map_or(Value::Null, |v| json!(v))
}

/// Point layer with criticality and exposure properties; unscored or
/// unexposed facilities carry nulls.
pub fn facilities_geojson(
    facilities: &[FacilityRecord],
    scores: &[CriticalityScore],
    exposures: &[FacilityExposure],
) -> Value {
    let by_score: BTreeMap<&str, &CriticalityScore> = scores.iter().map(|s| (s.facility_id.as_str(), s)).collect();
    let by_fe: BTreeMap<&str, &FacilityExposure> = exposures.iter().map(|e| (e.facility_id.as_str(), e)).collect();
    let features: Vec<Value> = facilities
        .iter()
        .map(|f| {
            let s = by_score.get(f.facility_id.as_str());
            let e = by_fe.get(f.facility_id.as_str());
            let fe = |y| e.and_then(|e| e.fe.get(&y).copied());
            json!({
                "type": "Feature",
                "properties": {
                    "facility_id": f.facility_id,
                    "category": f.category.to_string(),
                    "fc_raw": num_or_null(s.map(|s| s.fc_raw)),
                    "fc_norm": num_or_null(s.map(|s| s.fc_norm)),
                    "level": s.map_or(Value::Null, |s| Value::String(s.level.to_string())),
                    "fe_2020": num_or_null(fe(ScenarioYear::Y2020)),
                    "fe_2060": num_or_null(fe(ScenarioYear::Y2060)),
                    "delta": num_or_null(e.and_then(|e| e.delta().ok())),
                },
                "geometry": {"type": "Point", "coordinates": [f.location.x, f.location.y]},
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

/// One feature per ZCTA, its geometry the member zones' polygons. ZCTAs
/// without an index carry null values.
pub fn zctas_geojson(zones: &[ZoneGeometry], crosswalk: &CrosswalkTable, indices: &[RegionalIndex]) -> Value {
    let by_id: BTreeMap<&str, &ZoneGeometry> = zones.iter().map(|z| (z.zone_id.as_str(), z)).collect();
    let mut vw: BTreeMap<(&str, ScenarioYear), f64> = BTreeMap::new();
    for i in indices {
        vw.insert((i.zcta_id.as_str(), i.year), i.vwme);
    }
    let features: Vec<Value> = crosswalk
        .zctas()
        .into_iter()
        .map(|j| {
            let polys: Vec<Value> = crosswalk
                .zones_in(j)
                .into_iter()
                .filter_map(|z| by_id.get(z))
                .flat_map(|z| match geometry_json(z) {
                    Value::Object(mut g) if g.get("type") == Some(&json!("Polygon")) => {
                        vec![g.remove("coordinates").unwrap_or(Value::Null)]
                    }
                    Value::Object(mut g) => match g.remove("coordinates") {
                        Some(Value::Array(parts)) => parts,
                        _ => Vec::new(),
                    },
                    _ => Vec::new(),
                })
                .collect();
            let v20 = vw.get(&(j, ScenarioYear::Y2020)).copied();
            let v60 = vw.get(&(j, ScenarioYear::Y2060)).copied();
            let delta = v20.zip(v60).map(|(a, b)| b - a);
            let geometry = if polys.is_empty() {
                Value::Null
            } else {
                json!({"type": "MultiPolygon", "coordinates": polys})
            };
            json!({
                "type": "Feature",
                "properties": {
                    "zcta_id": j,
                    "vwme_2020": num_or_null(v20),
                    "vwme_2060": num_or_null(v60),
                    "delta": num_or_null(delta),
                },
                "geometry": geometry,
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_json(value: &Value, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub const PARTIAL_MANIFEST: &str = "partial_outputs.json";

/// Writes outputs into one directory and remembers which succeeded. A
/// failed write leaves a partial-output manifest behind.
#[derive(Debug)]
pub struct Emitter {
    dir: PathBuf,
    written: Vec<String>,
}

impl Emitter {
    pub fn new(dir: &Path) -> std::result::Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Write {
            path: dir.to_path_buf(),
            source: Error::Io {
                path: dir.to_path_buf(),
                source: e,
            },
        })?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn emit(&mut self, name: &str, f: impl FnOnce(&Path) -> Result<()>) -> std::result::Result<(), CliError> {
        let path = self.dir.join(name);
        match f(&path) {
            Ok(()) => {
                self.written.push(name.to_string());
                Ok(())
            }
            Err(e) => {
                let manifest = json!({
                    "complete": false,
                    "written": self.written,
                    "failed": name,
                    "error": e.to_string(),
                });
                let _ = write_json(&manifest, &self.dir.join(PARTIAL_MANIFEST));
                Err(CliError::Write { path, source: e })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lifeline_core::criticality::category_summary;

    fn score(id: &str, cat: Category, level: Level) -> CriticalityScore {
        CriticalityScore {
            facility_id: id.into(),
            category: cat,
            fc_raw: 1.5,
            fc_norm: 0.1,
            level,
            catchment_size: 3,
        }
    }

    #[test]
    fn grocery_level_rows() {
        let mut scores = Vec::new();
        for (n, level) in [(235, Level::Low), (72, Level::Medium), (9, Level::High)] {
            for i in 0..n {
                scores.push(score(&format!("G{level}{i}"), Category::Grocery, level));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("category_summary.csv");
        write_category_summary(&category_summary(&scores), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = text.lines().skip(1).collect();
        assert!(rows[0].starts_with("grocery,low,235,74.4,"));
        assert!(rows[1].starts_with("grocery,medium,72,22.8,"));
        assert!(rows[2].starts_with("grocery,high,9,2.8,"));
    }

    #[test]
    fn scores_round_trip_at_six_digits() {
        let s = vec![CriticalityScore {
            fc_raw: 2.0 / 3.0,
            ..score("F1", Category::Hospital, Level::High)
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        write_scores(&s, &path).unwrap();
        let back = read_scores(&path).unwrap();
        assert_eq!(back[0].fc_raw, 0.666667);
        assert_eq!(back[0].level, Level::High);
    }

    #[test]
    fn emitter_records_partial_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut em = Emitter::new(dir.path()).unwrap();
        em.emit("a.json", |p| write_json(&json!({}), p)).unwrap();
        let err = em.emit("missing/b.json", |p| write_json(&json!({}), p)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let manifest: Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(PARTIAL_MANIFEST)).unwrap()).unwrap();
        assert_eq!(manifest["written"], json!(["a.json"]));
        assert_eq!(manifest["failed"], json!("missing/b.json"));
    }

    #[test]
    fn zcta_without_index_has_null_vwme() {
        let zones = vec![
            ZoneGeometry::rect("A", 0.0, 0.0, 1.0, 1.0).unwrap(),
            ZoneGeometry::rect("B", 1.0, 0.0, 2.0, 1.0).unwrap(),
        ];
        let cw = CrosswalkTable::from_pairs([("A", "J1"), ("B", "J2")]).unwrap();
        let idx = vec![RegionalIndex {
            zcta_id: "J1".into(),
            year: ScenarioYear::Y2020,
            vwme: 0.5,
            visit_weight_total: 3,
            facility_count: 1,
        }];
        let g = zctas_geojson(&zones, &cw, &idx);
        let feats = g["features"].as_array().unwrap();
        assert_eq!(feats.len(), 2);
        assert_eq!(feats[0]["properties"]["vwme_2020"], json!(0.5));
        assert_eq!(feats[1]["properties"]["vwme_2020"], Value::Null);
        assert_eq!(feats[1]["geometry"]["type"], json!("MultiPolygon"));
    }
}
