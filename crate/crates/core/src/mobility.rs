//! Home-zone inference, visit detection and the origin-to-facility
//! visitation network built from device pings.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;

use crate::diag::{WarningKind, Warnings};
use crate::error::Result;
use crate::ingest::{FacilityRecord, Ping};
use crate::spatial::{PlanarPoint, ZoneGeometry, ZoneLocator};

/// Visit counts keyed by facility, then origin zone. Zero counts are never
/// stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VisitationNetwork {
    by_facility: BTreeMap<String, BTreeMap<String, u64>>,
}

impl VisitationNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, origin: &str, facility: &str, visits: u64) {
        if visits == 0 {
            return;
        }
        let row = match self.by_facility.get_mut(facility) {
            Some(r) => r,
            None => self.by_facility.entry(facility.to_string()).or_default(),
        };
        match row.get_mut(origin) {
            Some(v) => *v += visits,
            None => {
                row.insert(origin.to_string(), visits);
            }
        }
    }

    pub fn get(&self, origin: &str, facility: &str) -> u64 {
        self.by_facility
            .get(facility)
            .and_then(|r| r.get(origin))
            .copied()
            .unwrap_or(0)
    }

    /// Origins and counts for one facility, sorted by zone_id.
    pub fn facility_visits(&self, facility: &str) -> Option<&BTreeMap<String, u64>> {
        self.by_facility.get(facility)
    }

    pub fn facilities(&self) -> impl Iterator<Item = &str> {
        self.by_facility.keys().map(String::as_str)
    }

    pub fn origins(&self) -> BTreeSet<&str> {
        self.by_facility
            .values()
            .flat_map(|r| r.keys().map(String::as_str))
            .collect()
    }

    /// `(origin, facility, visits)` triples, grouped by facility.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u64)> {
        self.by_facility
            .iter()
            .flat_map(|(f, r)| r.iter().map(move |(o, v)| (o.as_str(), f.as_str(), *v)))
    }

    pub fn total(&self) -> u64 {
        self.by_facility.values().flat_map(|r| r.values()).sum()
    }

    pub fn pair_count(&self) -> usize {
        self.by_facility.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_facility.is_empty()
    }

    pub fn merge(&mut self, other: &VisitationNetwork) {
        for (o, f, v) in other.iter() {
            self.add(o, f, v);
        }
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Self {
        let mut out = Self::new();
        for (o, f, v) in self.iter() {
            out.add(o, f, v * factor);
        }
        out
    }
}

impl<'a> FromIterator<(&'a str, &'a str, u64)> for VisitationNetwork {
    fn from_iter<T: IntoIterator<Item = (&'a str, &'a str, u64)>>(iter: T) -> Self {
        let mut net = Self::new();
        for (o, f, v) in iter {
            net.add(o, f, v);
        }
        net
    }
}

/// A timestamped position of one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub t: DateTime<Utc>,
    pub location: PlanarPoint,
}

impl Fix {
    pub fn new(t: DateTime<Utc>, x: f64, y: f64) -> Self {
        Self {
            t,
            location: PlanarPoint::new(x, y),
        }
    }
}

fn sort_fixes(fixes: &mut [Fix]) {
    fixes.sort_by(|a, b| {
        a.t.cmp(&b.t)
            .then(a.location.x.total_cmp(&b.location.x))
            .then(a.location.y.total_cmp(&b.location.y))
    });
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomeParams {
    /// Cumulative dwell must exceed this many hours.
    pub min_dwell_hours: f64,
    /// Gaps longer than this between two pings accrue no dwell.
    pub max_gap_hours: f64,
}

impl Default for HomeParams {
    fn default() -> Self {
        Self {
            min_dwell_hours: 24.0,
            max_gap_hours: 6.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisitParams {
    pub radius_m: f64,
    pub min_dwell_min: f64,
}

impl Default for VisitParams {
    fn default() -> Self {
        Self {
            radius_m: 50.0,
            min_dwell_min: 5.0,
        }
    }
}

/// Zone with the largest cumulative dwell, if that dwell exceeds the
/// threshold. Dwell between consecutive pings accrues to a zone only when
/// both pings lie in it and the gap is within `max_gap_hours`.
pub fn infer_home_zone(fixes: &[Fix], zones: &ZoneLocator<'_>, params: HomeParams) -> Option<String> {
    let mut sorted = fixes.to_vec();
    sort_fixes(&mut sorted);
    let max_gap_ms = (params.max_gap_hours * 3_600_000.0).round() as i64;
    let located: Vec<Option<&str>> = sorted.iter().map(|f| zones.locate(f.location).zone()).collect();
    let mut dwell: BTreeMap<&str, i64> = BTreeMap::new();
    for i in 1..sorted.len() {
        if let (Some(a), Some(b)) = (located[i - 1], located[i]) {
            let gap = (sorted[i].t - sorted[i - 1].t).num_milliseconds();
            if a == b && gap <= max_gap_ms {
                *dwell.entry(a).or_insert(0) += gap;
            }
        }
    }
    // BTreeMap iterates in zone_id order, so the first maximum wins ties.
    let (zone, ms) = dwell
        .into_iter()
        .fold(None::<(&str, i64)>, |best, (z, ms)| match best {
            Some((_, b)) if b >= ms => best,
            _ => Some((z, ms)),
        })?;
    let threshold_ms = params.min_dwell_hours * 3_600_000.0;
    (ms as f64 > threshold_ms).then(|| zone.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VisitEvent {
    pub device_id: String,
    pub facility_id: String,
    pub date: NaiveDate,
}

/// Bucketed lookup of the nearest facility within a fixed radius.
pub struct FacilityIndex<'a> {
    facilities: &'a [FacilityRecord],
    radius: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl<'a> FacilityIndex<'a> {
    pub fn new(facilities: &'a [FacilityRecord], radius: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        let radius = radius.max(1e-3);
        for (i, f) in facilities.iter().enumerate() {
            let key = Self::key(f.location, radius);
            cells.entry(key).or_default().push(i as u32);
        }
        Self {
            facilities,
            radius,
            cells,
        }
    }

    fn key(p: PlanarPoint, radius: f64) -> (i64, i64) {
        ((p.x / radius).floor() as i64, (p.y / radius).floor() as i64)
    }

    /// Nearest facility within the radius; equal distances resolve to the
    /// smaller facility_id.
    pub fn nearest(&self, p: PlanarPoint) -> Option<&'a FacilityRecord> {
        let (cx, cy) = Self::key(p, self.radius);
        let r2 = self.radius * self.radius;
        let mut best: Option<(f64, &'a FacilityRecord)> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(ids) = self.cells.get(&(cx + dx, cy + dy)) else {
                    continue;
                };
                for &i in ids {
                    let f = &self.facilities[i as usize];
                    let d2 = f.location.distance_sq(&p);
                    if d2 > r2 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bd, bf)) => d2 < bd || (d2 == bd && f.facility_id < bf.facility_id),
                    };
                    if better {
                        best = Some((d2, f));
                    }
                }
            }
        }
        best.map(|(_, f)| f)
    }
}

/// Visits of one device: runs of consecutive pings credited to the same
/// facility that span at least `min_dwell_min`, deduplicated per UTC date.
pub fn detect_visits(
    device_id: &str,
    fixes: &[Fix],
    facilities: &FacilityIndex<'_>,
    params: VisitParams,
) -> Vec<VisitEvent> {
    let mut sorted = fixes.to_vec();
    sort_fixes(&mut sorted);
    let min_ms = (params.min_dwell_min * 60_000.0).round() as i64;
    let mut found: BTreeSet<(&str, NaiveDate)> = BTreeSet::new();
    let mut run: Option<(&str, DateTime<Utc>, DateTime<Utc>)> = None;
    fn close<'a>(
        run: Option<(&'a str, DateTime<Utc>, DateTime<Utc>)>,
        min_ms: i64,
        found: &mut BTreeSet<(&'a str, NaiveDate)>,
    ) {
        if let Some((f, start, end)) = run {
            if (end - start).num_milliseconds() >= min_ms {
                found.insert((f, start.date_naive()));
            }
        }
    }
    for fix in &sorted {
        let here = facilities.nearest(fix.location).map(|f| f.facility_id.as_str());
        run = match (run, here) {
            (Some((f, start, _)), Some(h)) if f == h => Some((f, start, fix.t)),
            (prev, h) => {
                close(prev, min_ms, &mut found);
                h.map(|h| (h, fix.t, fix.t))
            }
        };
    }
    close(run, min_ms, &mut found);
    found
        .into_iter()
        .map(|(f, date)| VisitEvent {
            device_id: device_id.to_string(),
            facility_id: f.to_string(),
            date,
        })
        .collect()
}

/// Counts events per (home zone, facility). Events of devices without a
/// home are dropped; the returned count is what was dropped.
pub fn build_visitation_network(
    events: &[VisitEvent],
    homes: &HashMap<String, String>,
    warnings: &mut Warnings,
) -> (VisitationNetwork, usize) {
    let mut net = VisitationNetwork::new();
    let mut dropped = 0;
    for e in events {
        match homes.get(&e.device_id) {
            Some(zone) => net.add(zone, &e.facility_id, 1),
            None => dropped += 1,
        }
    }
    warnings.push_counted(
        WarningKind::HomelessDeviceEvent,
        dropped,
        format!("{dropped} visit events dropped: device has no inferred home zone"),
    );
    (net, dropped)
}

#[derive(Debug, Clone, Default)]
pub struct MobilityOutput {
    pub network: VisitationNetwork,
    pub homes: BTreeMap<String, String>,
    pub devices: usize,
    pub events: usize,
    pub dropped_events: usize,
}

/// Full ping-to-network stage. Pings are grouped per device (input order
/// within a device is irrelevant), devices are processed independently and
/// their counts merged.
pub fn network_from_pings<I>(
    pings: I,
    zones: &[ZoneGeometry],
    facilities: &[FacilityRecord],
    home: HomeParams,
    visit: VisitParams,
    warnings: &mut Warnings,
) -> Result<MobilityOutput>
where
    I: IntoIterator<Item = Result<Ping>>,
{
    let mut by_device: BTreeMap<String, Vec<Fix>> = BTreeMap::new();
    for p in pings {
        let p = p?;
        let fix = Fix {
            t: p.timestamp,
            location: p.location,
        };
        match by_device.get_mut(&p.device_id) {
            Some(v) => v.push(fix),
            None => {
                by_device.insert(p.device_id, vec![fix]);
            }
        }
    }
    let locator = ZoneLocator::new(zones);
    let index = FacilityIndex::new(facilities, visit.radius_m);
    let per_device: Vec<(String, Option<String>, Vec<VisitEvent>)> = by_device
        .into_par_iter()
        .map(|(device, fixes)| {
            let home_zone = infer_home_zone(&fixes, &locator, home);
            let events = detect_visits(&device, &fixes, &index, visit);
            (device, home_zone, events)
        })
        .collect();

    let devices = per_device.len();
    let mut homes = BTreeMap::new();
    let mut events = Vec::new();
    for (device, h, ev) in per_device {
        if let Some(z) = h {
            homes.insert(device, z);
        }
        events.extend(ev);
    }
    let home_lookup: HashMap<String, String> = homes.iter().map(|(d, z)| (d.clone(), z.clone())).collect();
    let (network, dropped_events) = build_visitation_network(&events, &home_lookup, warnings);
    Ok(MobilityOutput {
        network,
        homes,
        devices,
        events: events.len(),
        dropped_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Category;
    use chrono::{Duration, TimeZone};

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 5, 1, 0, 0, 0).unwrap()
    }

    fn zones() -> Vec<ZoneGeometry> {
        vec![
            ZoneGeometry::rect("A", 0.0, 0.0, 1000.0, 1000.0).unwrap(),
            ZoneGeometry::rect("B", 1000.0, 0.0, 2000.0, 1000.0).unwrap(),
        ]
    }

    /// Pings every `step_h` hours in a zone starting at `start_h`, `n` pings.
    fn stay(start_h: i64, step_h: i64, n: i64, x: f64) -> Vec<Fix> {
        (0..n)
            .map(|i| Fix::new(t0() + Duration::hours(start_h + i * step_h), x, 500.0))
            .collect()
    }

    #[test]
    fn home_is_zone_with_most_dwell() {
        let zs = zones();
        let loc = ZoneLocator::new(&zs);
        // A: 11 pings 3 h apart = 30 h; B: 6 pings 1 h apart = 5 h.
        let mut fixes = stay(0, 3, 11, 500.0);
        fixes.extend(stay(100, 1, 6, 1500.0));
        fixes.reverse();
        assert_eq!(
            infer_home_zone(&fixes, &loc, HomeParams::default()).as_deref(),
            Some("A")
        );
    }

    #[test]
    fn below_threshold_is_no_home() {
        let zs = zones();
        let loc = ZoneLocator::new(&zs);
        let fixes = stay(0, 2, 6, 500.0); // 10 h
        assert_eq!(infer_home_zone(&fixes, &loc, HomeParams::default()), None);
    }

    #[test]
    fn gaps_over_cap_do_not_accrue() {
        let zs = zones();
        let loc = ZoneLocator::new(&zs);
        let fixes = stay(0, 7, 10, 500.0); // 63 h but every gap > 6 h
        assert_eq!(infer_home_zone(&fixes, &loc, HomeParams::default()), None);
    }

    #[test]
    fn tie_breaks_lexicographically() {
        let zs = zones();
        let loc = ZoneLocator::new(&zs);
        let mut fixes = stay(100, 3, 11, 1500.0); // B: 30 h, listed first
        fixes.extend(stay(0, 3, 11, 500.0)); // A: 30 h
        assert_eq!(
            infer_home_zone(&fixes, &loc, HomeParams::default()).as_deref(),
            Some("A")
        );
    }

    #[test]
    fn exactly_threshold_is_not_more_than() {
        let zs = zones();
        let loc = ZoneLocator::new(&zs);
        let fixes = stay(0, 3, 9, 500.0); // 24 h exactly
        assert_eq!(infer_home_zone(&fixes, &loc, HomeParams::default()), None);
    }

    fn facilities() -> Vec<FacilityRecord> {
        vec![
            FacilityRecord::new("F", Category::Grocery, 100.0, 100.0),
            FacilityRecord::new("G", Category::Grocery, 160.0, 100.0),
        ]
    }

    fn near(min: i64, x: f64) -> Fix {
        Fix::new(t0() + Duration::hours(10) + Duration::minutes(min), x, 100.0)
    }

    #[test]
    fn three_pings_over_ten_minutes_is_a_visit() {
        let fs = facilities();
        let idx = FacilityIndex::new(&fs, 50.0);
        let fixes = vec![near(0, 80.0), near(5, 80.0), near(10, 80.0)];
        let ev = detect_visits("d", &fixes, &idx, VisitParams::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].facility_id, "F");
        assert_eq!(ev[0].date, NaiveDate::from_ymd_opt(2025, 5, 1).unwrap());
    }

    #[test]
    fn isolated_ping_is_not_a_visit() {
        let fs = facilities();
        let idx = FacilityIndex::new(&fs, 50.0);
        assert!(detect_visits("d", &[near(0, 80.0)], &idx, VisitParams::default()).is_empty());
    }

    #[test]
    fn same_day_episodes_dedup() {
        let fs = facilities();
        let idx = FacilityIndex::new(&fs, 50.0);
        let fixes = vec![
            near(0, 80.0),
            near(6, 80.0),
            near(60, 900.0),
            near(120, 80.0),
            near(130, 80.0),
        ];
        assert_eq!(detect_visits("d", &fixes, &idx, VisitParams::default()).len(), 1);
    }

    #[test]
    fn nearest_facility_gets_credit() {
        let fs = facilities();
        let idx = FacilityIndex::new(&fs, 50.0);
        // 20 m from F, 40 m from G
        assert_eq!(idx.nearest(PlanarPoint::new(120.0, 100.0)).unwrap().facility_id, "F");
        assert_eq!(idx.nearest(PlanarPoint::new(150.0, 100.0)).unwrap().facility_id, "G");
        // equidistant
        assert_eq!(idx.nearest(PlanarPoint::new(130.0, 100.0)).unwrap().facility_id, "F");
        assert!(idx.nearest(PlanarPoint::new(500.0, 500.0)).is_none());
    }

    #[test]
    fn network_counts_and_homeless_drop() {
        let day = NaiveDate::from_ymd_opt(2025, 5, 1).unwrap();
        let ev = |d: &str| VisitEvent {
            device_id: d.into(),
            facility_id: "F".into(),
            date: day,
        };
        let homes: HashMap<String, String> = [("d1".to_string(), "A".to_string()), ("d2".to_string(), "A".to_string())]
            .into_iter()
            .collect();
        let mut w = Warnings::new();
        let (net, dropped) = build_visitation_network(&[ev("d1"), ev("d2"), ev("d3")], &homes, &mut w);
        assert_eq!(net.get("A", "F"), 2);
        assert_eq!(dropped, 1);
        assert_eq!(w.count(WarningKind::HomelessDeviceEvent), 1);
    }

    #[test]
    fn network_merge_is_count_sum() {
        let a: VisitationNetwork = [("A", "F", 2), ("B", "F", 1)].into_iter().collect();
        let b: VisitationNetwork = [("A", "F", 3), ("A", "G", 4)].into_iter().collect();
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.get("A", "F"), 5);
        assert_eq!(ab.total(), 10);
    }
}
