//! Esri ASCII grid reader and writer.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spatial::GridRaster;

const HEADER_KEYS: [&str; 6] = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];

pub fn load_raster(path: &Path) -> Result<GridRaster> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_raster(&bytes).map_err(|e| match e {
        Error::Validation(m) => Error::invalid(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses an Esri ASCII grid: six `key value` header lines (keys
/// case-insensitive, any order) followed by `nrows` lines of `ncols` values,
/// northernmost row first.
pub fn parse_raster(bytes: &[u8]) -> Result<GridRaster> {
    let mut header: [Option<f64>; 6] = [None; 6];
    let mut lines = bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix(b"\r").unwrap_or(l)))
        .filter(|(_, l)| l.iter().any(|b| !b.is_ascii_whitespace()))
        .peekable();

    while let Some(&(line_no, line)) = lines.peek() {
        let first = line.iter().find(|b| !b.is_ascii_whitespace()).copied().unwrap_or(b'0');
        if !first.is_ascii_alphabetic() {
            break;
        }
        lines.next();
        let text = std::str::from_utf8(line).map_err(|_| Error::invalid(format!("line {line_no}: not UTF-8")))?;
        let mut tok = text.split_ascii_whitespace();
        let key = tok.next().unwrap_or_default().to_ascii_lowercase();
        let slot = HEADER_KEYS
            .iter()
            .position(|k| *k == key)
            .ok_or_else(|| Error::invalid(format!("line {line_no}: unsupported header key {key:?}")))?;
        let value = tok
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::invalid(format!("line {line_no}: malformed value for {key}")))?;
        if tok.next().is_some() {
            return Err(Error::invalid(format!("line {line_no}: trailing tokens after {key}")));
        }
        if header[slot].replace(value).is_some() {
            return Err(Error::invalid(format!("line {line_no}: repeated header key {key}")));
        }
    }
    for (k, v) in HEADER_KEYS.iter().zip(&header) {
        if v.is_none() {
            return Err(Error::invalid(format!("missing header key {k}")));
        }
    }
    let [ncols, nrows, xll, yll, cellsize, nodata] = header.map(Option::unwrap);
    let dim = |v: f64, k: &str| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 && v < 1e9 {
            Ok(v as usize)
        } else {
            Err(Error::invalid(format!("{k} must be a positive integer, found {v}")))
        }
    };
    let (ncols, nrows) = (dim(ncols, "ncols")?, dim(nrows, "nrows")?);
    if cellsize.is_nan() || cellsize <= 0.0 {
        return Err(Error::invalid("cellsize must be positive"));
    }

    let data: Vec<(usize, &[u8])> = lines.collect();
    if data.len() != nrows {
        let at = data.get(nrows).map(|(l, _)| format!(" (line {l})")).unwrap_or_default();
        return Err(Error::invalid(format!(
            "expected {nrows} data rows, found {}{at}",
            data.len()
        )));
    }
    let mut values = vec![0.0f64; ncols * nrows];
    values
        .par_chunks_mut(ncols)
        .zip(data.par_iter())
        .try_for_each(|(row, (line_no, line))| parse_row(line, row, *line_no, nodata))?;

    GridRaster::new(ncols, nrows, xll, yll, cellsize, nodata, values)
}

fn parse_row(line: &[u8], out: &mut [f64], line_no: usize, nodata: f64) -> Result<()> {
    let mut n = 0;
    for tok in line.split(|b| b.is_ascii_whitespace()).filter(|t| !t.is_empty()) {
        if n == out.len() {
            let count = line
                .split(|b| b.is_ascii_whitespace())
                .filter(|t| !t.is_empty())
                .count();
            return Err(Error::invalid(format!(
                "line {line_no}: {count} values, expected {}",
                out.len()
            )));
        }
        let v = parse_number(tok).ok_or_else(|| {
            Error::invalid(format!(
                "line {line_no}: malformed value {:?}",
                String::from_utf8_lossy(tok)
            ))
        })?;
        if v < 0.0 && v != nodata {
            return Err(Error::invalid(format!("line {line_no}: negative depth {v}")));
        }
        out[n] = v;
        n += 1;
    }
    if n != out.len() {
        return Err(Error::invalid(format!(
            "line {line_no}: {n} values, expected {}",
            out.len()
        )));
    }
    Ok(())
}

const POW10: [f64; 23] = [
    1e0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10, 1e11, 1e12, 1e13, 1e14, 1e15, 1e16, 1e17, 1e18, 1e19, 1e20,
    1e21, 1e22,
];

/// Plain decimals (`-12.345`) take an exact fast path: an integer mantissa
/// below 2^53 divided by an exactly representable power of ten is correctly
/// rounded. Everything else goes through the standard parser.
fn parse_number(tok: &[u8]) -> Option<f64> {
    let (neg, digits) = match tok.first() {
        Some(b'-') => (true, &tok[1..]),
        Some(b'+') => (false, &tok[1..]),
        _ => (false, tok),
    };
    let mut mantissa: u64 = 0;
    let mut frac_digits = 0usize;
    let mut seen_dot = false;
    let mut n_digits = 0usize;
    let mut fast = !digits.is_empty();
    for &b in digits {
        match b {
            b'0'..=b'9' => {
                n_digits += 1;
                if n_digits > 15 {
                    fast = false;
                    break;
                }
                mantissa = mantissa * 10 + u64::from(b - b'0');
                if seen_dot {
                    frac_digits += 1;
                }
            }
            b'.' if !seen_dot => seen_dot = true,
            _ => {
                fast = false;
                break;
            }
        }
    }
    if fast && n_digits > 0 {
        let v = mantissa as f64 / POW10[frac_digits];
        return Some(if neg { -v } else { v });
    }
    std::str::from_utf8(tok)
        .ok()?
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
}

/// Writes `r` as an Esri ASCII grid. Values print in their shortest exact
/// decimal form.
pub fn write_raster(r: &GridRaster, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::with_capacity(1 << 20, file);
    let io = |e| Error::io(path, e);
    write!(
        w,
        "ncols {}\nnrows {}\nxllcorner {}\nyllcorner {}\ncellsize {}\nNODATA_value {}\n",
        r.ncols, r.nrows, r.xllcorner, r.yllcorner, r.cellsize, r.nodata
    )
    .map_err(io)?;
    let mut line = Vec::with_capacity(r.ncols * 8);
    for row in r.values.chunks(r.ncols) {
        line.clear();
        for (i, &v) in row.iter().enumerate() {
            if i > 0 {
                line.push(b' ');
            }
            format_value(&mut line, v);
        }
        line.push(b'\n');
        w.write_all(&line).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn format_value(out: &mut Vec<u8>, v: f64) {
    if v == 0.0 {
        out.push(b'0');
        return;
    }
    // Values with at most three decimals print from their integer form.
    let k = (v * 1000.0).round();
    if k.abs() < 1e15 && k / 1000.0 == v {
        let k = k as i64;
        if k < 0 {
            out.push(b'-');
        }
        let k = k.unsigned_abs();
        let (int, frac) = (k / 1000, k % 1000);
        out.extend_from_slice(int.to_string().as_bytes());
        if frac != 0 {
            let f = format!("{frac:03}");
            out.push(b'.');
            out.extend_from_slice(f.trim_end_matches('0').as_bytes());
        }
        return;
    }
    out.extend_from_slice(v.to_string().as_bytes());
}
