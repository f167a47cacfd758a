//! A million-row ping file is read incrementally: resident memory while
//! iterating stays far below the size of the materialized rows.

use chrono::{Duration, TimeZone, Utc};
use lifeline_core::ingest::{load_pings, Ping, PingWriter};
use lifeline_core::PlanarPoint;

fn resident_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmRSS:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

#[test]
fn million_rows_stream_in_bounded_memory() {
    const ROWS: usize = 1_000_000;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pings.csv");
    let t0 = Utc.with_ymd_and_hms(2021, 3, 1, 0, 0, 0).unwrap();
    let mut w = PingWriter::create(&path).unwrap();
    for i in 0..ROWS {
        w.write(&Ping {
            device_id: format!("D{:05}", i % 20_000),
            timestamp: t0 + Duration::seconds(i as i64),
            location: PlanarPoint::new(500_000.0 + (i % 977) as f64, 3_000_000.0 + (i % 541) as f64),
        })
        .unwrap();
    }
    w.finish().unwrap();
    let file_kib = std::fs::metadata(&path).unwrap().len() / 1024;

    let before = resident_kib();
    let mut peak = before.unwrap_or(0);
    let mut n = 0usize;
    let mut sum_x = 0.0;
    for (i, p) in load_pings(&path).unwrap().enumerate() {
        let p = p.unwrap();
        sum_x += p.location.x;
        n += 1;
        if i % 50_000 == 0 {
            peak = peak.max(resident_kib().unwrap_or(0));
        }
    }
    assert_eq!(n, ROWS);
    assert!(sum_x > 0.0);
    if let Some(before) = before {
        let growth = peak.saturating_sub(before);
        // Materializing the rows would take well over the file size.
        assert!(
            growth < 16 * 1024,
            "resident memory grew by {growth} KiB (file {file_kib} KiB)"
        );
        assert!(growth < file_kib / 4);
    }
}
