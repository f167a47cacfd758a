use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};

use super::{csv_error, csv_reader, expect_header};
use crate::error::{Error, Result};
use crate::spatial::PlanarPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct Ping {
    pub device_id: String,
    pub timestamp: DateTime<Utc>,
    pub location: PlanarPoint,
}

/// Streaming reader over `device_id,timestamp,x,y`; one record is buffered
/// at a time.
pub struct PingReader {
    rdr: csv::Reader<File>,
    record: csv::StringRecord,
    path: PathBuf,
    done: bool,
}

pub fn load_pings(path: &Path) -> Result<PingReader> {
    let mut rdr = csv_reader(path)?;
    expect_header(&mut rdr, path, &["device_id", "timestamp", "x", "y"], &[])?;
    Ok(PingReader {
        rdr,
        record: csv::StringRecord::new(),
        path: path.to_path_buf(),
        done: false,
    })
}

impl PingReader {
    fn parse_current(&self) -> Result<Ping> {
        let rec = &self.record;
        let line = rec.position().map_or(0, |p| p.line());
        let at = |m: String| Error::invalid(format!("{} line {line}: {m}", self.path.display()));
        let device_id = &rec[0];
        if device_id.is_empty() {
            return Err(at("empty device_id".into()));
        }
        let timestamp = DateTime::parse_from_rfc3339(&rec[1])
            .map_err(|_| {
                at(format!(
                    "malformed timestamp {:?} (ISO 8601 with zone designator required)",
                    &rec[1]
                ))
            })?
            .with_timezone(&Utc);
        let coord = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| at(format!("non-numeric {what} {s:?}")))
        };
        Ok(Ping {
            device_id: device_id.to_string(),
            timestamp,
            location: PlanarPoint::new(coord(&rec[2], "x")?, coord(&rec[3], "y")?),
        })
    }
}

impl Iterator for PingReader {
    type Item = Result<Ping>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.rdr.read_record(&mut self.record) {
            Ok(true) => {
                let r = self.parse_current();
                if r.is_err() {
                    self.done = true;
                }
                Some(r)
            }
            Ok(false) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(csv_error(&self.path, e)))
            }
        }
    }
}

/// Incremental writer for the ping format.
pub struct PingWriter {
    w: BufWriter<File>,
    path: PathBuf,
}

impl PingWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::with_capacity(1 << 16, file);
        w.write_all(b"device_id,timestamp,x,y\n")
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            w,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, ping: &Ping) -> Result<()> {
        writeln!(
            self.w,
            "{},{},{},{}",
            ping.device_id,
            ping.timestamp.to_rfc3339_opts(SecondsFormat::Secs, true),
            ping.location.x,
            ping.location.y
        )
        .map_err(|e| Error::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn parses_and_reports_bad_timestamp() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("p.csv");
        std::fs::write(
            &p,
            "device_id,timestamp,x,y\nd1,2025-05-01T08:00:00Z,10,20\nd1,yesterday,10,20\n",
        )
        .unwrap();
        let mut it = load_pings(&p).unwrap();
        let first = it.next().unwrap().unwrap();
        assert_eq!(first.device_id, "d1");
        assert_eq!(first.timestamp, Utc.with_ymd_and_hms(2025, 5, 1, 8, 0, 0).unwrap());
        assert_eq!(first.location, PlanarPoint::new(10.0, 20.0));
        let err = it.next().unwrap().unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("timestamp"), "{err}");
        assert!(it.next().is_none());
    }

    #[test]
    fn offsets_convert_to_utc() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("p.csv");
        std::fs::write(
            &p,
            "device_id,timestamp,x,y\nd1,2025-05-01T03:00:00-05:00,1,2\nd1,2025-05-01T08:00:00,1,2\n",
        )
        .unwrap();
        let mut it = load_pings(&p).unwrap();
        assert_eq!(
            it.next().unwrap().unwrap().timestamp,
            Utc.with_ymd_and_hms(2025, 5, 1, 8, 0, 0).unwrap()
        );
        // no zone designator
        assert!(it.next().unwrap().is_err());
    }

    #[test]
    fn writer_roundtrip() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("p.csv");
        let ping = Ping {
            device_id: "dev".into(),
            timestamp: Utc.with_ymd_and_hms(2025, 5, 2, 23, 59, 1).unwrap(),
            location: PlanarPoint::new(1.5, -2.25),
        };
        let mut w = PingWriter::create(&p).unwrap();
        w.write(&ping).unwrap();
        w.finish().unwrap();
        let back: Vec<Ping> = load_pings(&p).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(back, vec![ping]);
    }
}
