use std::collections::HashSet;
use std::path::Path;

use serde_json::{json, Value};

use super::looks_like_lonlat;
use crate::diag::{WarningKind, Warnings};
use crate::error::{Error, Result};
use crate::spatial::{PlanarPoint, Polygon, ZoneGeometry};

/// Reads a GeoJSON FeatureCollection of Polygon/MultiPolygon features, each
/// carrying `properties.zone_id`.
pub fn load_zones(path: &Path, warnings: &mut Warnings) -> Result<Vec<ZoneGeometry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_zones(&text, warnings).map_err(|e| match e {
        Error::Validation(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_zones(text: &str, warnings: &mut Warnings) -> Result<Vec<ZoneGeometry>> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::invalid(format!("malformed GeoJSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::invalid("top-level object must be a FeatureCollection"));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::invalid("FeatureCollection has no features array"))?;

    let mut zones = Vec::with_capacity(features.len());
    let mut seen = HashSet::new();
    for (i, feat) in features.iter().enumerate() {
        let at = |m: String| Error::invalid(format!("feature {i}: {m}"));
        let zone_id = feat
            .get("properties")
            .and_then(|p| p.get("zone_id"))
            .and_then(Value::as_str)
            .ok_or_else(|| at("missing properties.zone_id".into()))?;
        let geom = feat
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| at("missing geometry".into()))?;
        let coords = geom
            .get("coordinates")
            .ok_or_else(|| at("geometry has no coordinates".into()))?;
        let parts = match geom.get("type").and_then(Value::as_str) {
            Some("Polygon") => vec![parse_polygon(coords).map_err(at)?],
            Some("MultiPolygon") => coords
                .as_array()
                .ok_or_else(|| at("MultiPolygon coordinates must be an array".into()))?
                .iter()
                .map(parse_polygon)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(at)?,
            other => return Err(at(format!("unsupported geometry type {other:?}"))),
        };
        let zone = ZoneGeometry::new(zone_id, parts).map_err(|e| match e {
            Error::Validation(m) => at(m),
            other => other,
        })?;
        zone.validate_shape().map_err(|e| match e {
            Error::Validation(m) => at(m),
            other => other,
        })?;
        if !seen.insert(zone.zone_id.clone()) {
            return Err(at(format!("duplicate zone_id {}", zone.zone_id)));
        }
        zones.push(zone);
    }

    let coords = zones
        .iter()
        .flat_map(|z| z.parts.iter())
        .flat_map(|p| p.exterior.iter())
        .map(|p| (p.x, p.y));
    if looks_like_lonlat(coords) {
        warnings.push(
            WarningKind::LonLatCoordinates,
            "zone coordinates look like lon/lat; planar meters are required",
        );
    }
    Ok(zones)
}

fn parse_polygon(v: &Value) -> std::result::Result<Polygon, String> {
    let rings = v.as_array().ok_or("polygon coordinates must be an array of rings")?;
    if rings.is_empty() {
        return Err("polygon has no rings".into());
    }
    let mut parsed = rings
        .iter()
        .map(parse_ring)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let exterior = parsed.remove(0);
    Ok(Polygon::new(exterior, parsed))
}

fn parse_ring(v: &Value) -> std::result::Result<Vec<PlanarPoint>, String> {
    let pts = v.as_array().ok_or("ring must be an array of positions")?;
    let ring = pts
        .iter()
        .map(|p| {
            let xy = p.as_array().filter(|a| a.len() >= 2).ok_or("position must be [x, y]")?;
            match (xy[0].as_f64(), xy[1].as_f64()) {
                (Some(x), Some(y)) => Ok(PlanarPoint::new(x, y)),
                _ => Err("position coordinates must be numbers"),
            }
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if ring.len() >= 2 && ring.first() != ring.last() {
        return Err("unclosed ring (first vertex differs from last)".into());
    }
    Ok(ring)
}

/// GeoJSON geometry object for a zone.
pub fn geometry_json(zone: &ZoneGeometry) -> Value {
    let poly = |p: &Polygon| -> Value {
        Value::Array(
            p.rings()
                .map(|r| Value::Array(r.iter().map(|pt| json!([pt.x, pt.y])).collect()))
                .collect(),
        )
    };
    if zone.parts.len() == 1 {
        json!({"type": "Polygon", "coordinates": poly(&zone.parts[0])})
    } else {
        json!({"type": "MultiPolygon", "coordinates": zone.parts.iter().map(poly).collect::<Vec<_>>()})
    }
}

pub fn zones_to_geojson(zones: &[ZoneGeometry]) -> Value {
    let features: Vec<Value> = zones
        .iter()
        .map(|z| {
            json!({
                "type": "Feature",
                "properties": {"zone_id": z.zone_id},
                "geometry": geometry_json(z),
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

pub fn write_zones(zones: &[ZoneGeometry], path: &Path) -> Result<()> {
    let text = serde_json::to_string(&zones_to_geojson(zones))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
