//! Strict, validating readers (and matching writers) for every input format.
//!
//! All CSVs are UTF-8, comma-delimited, with a mandatory header row; LF and
//! CRLF line endings are both accepted. Row-level problems are reported with
//! the 1-based line number of the offending row.

mod asc;
mod pings;
mod tables;
mod zones;

pub use asc::{load_raster, parse_raster, write_raster};
pub use pings::{load_pings, Ping, PingReader, PingWriter};
pub use tables::{
    category_counts, load_crosswalk, load_facilities, load_manifest, load_od, write_crosswalk, write_facilities,
    write_manifest, write_od, Category, CrosswalkTable, FacilityRecord, RasterManifestEntry,
};
pub use zones::{geometry_json, load_zones, parse_zones, write_zones, zones_to_geojson};

use std::fs::File;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file))
}

/// Checks the header row: `required` columns in order, optionally followed
/// by the `optional` ones. Returns the number of columns present.
pub(crate) fn expect_header<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    path: &Path,
    required: &[&str],
    optional: &[&str],
) -> Result<usize> {
    let headers = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect::<Vec<_>>();
    let n = headers.len();
    let ok = n >= required.len()
        && n <= required.len() + optional.len()
        && headers
            .iter()
            .zip(required.iter().chain(optional))
            .all(|(h, want)| h == want);
    if !ok {
        let mut want = required.join(",");
        for o in optional {
            want.push_str(&format!("[,{o}]"));
        }
        return Err(Error::invalid(format!(
            "{}: header must be {want}, found {}",
            path.display(),
            headers.join(",")
        )));
    }
    Ok(n)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    let msg = e.to_string();
    match (e.into_kind(), line) {
        (csv::ErrorKind::Io(io), _) => Error::io(path, io),
        (_, Some(l)) => Error::invalid(format!("{} line {l}: {msg}", path.display())),
        (_, None) => Error::invalid(format!("{}: {msg}", path.display())),
    }
}

pub(crate) fn parse_f64(field: &str, what: &str, path: &Path, line: u64) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::invalid(format!(
            "{} line {line}: non-numeric {what} {field:?}",
            path.display()
        ))),
    }
}

/// Planar meters are required; coordinates that all fit the lon/lat
/// envelope are suspicious.
pub(crate) fn looks_like_lonlat<I: IntoIterator<Item = (f64, f64)>>(coords: I) -> bool {
    let mut any = false;
    for (x, y) in coords {
        any = true;
        if x.abs() > 180.0 || y.abs() > 90.0 {
            return false;
        }
    }
    any
}
