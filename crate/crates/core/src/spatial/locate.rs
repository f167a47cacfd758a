use super::{BBox, PlanarPoint, ZoneGeometry, COORD_EPS};
use crate::diag::{WarningKind, Warnings};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Located<'a> {
    Outside,
    Inside(&'a str),
    /// Several zones contain the point; `chosen` is the smallest zone_id.
    Overlap {
        chosen: &'a str,
        candidates: Vec<&'a str>,
    },
}

impl<'a> Located<'a> {
    pub fn zone(&self) -> Option<&'a str> {
        match self {
            Located::Outside => None,
            Located::Inside(z) => Some(z),
            Located::Overlap { chosen, .. } => Some(chosen),
        }
    }
}

/// Point-in-zone lookup over a bucketed bounding-box grid.
#[derive(Debug)]
pub struct ZoneLocator<'a> {
    zones: &'a [ZoneGeometry],
    boxes: Vec<BBox>,
    extent: BBox,
    bucket: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<u32>>,
}

impl<'a> ZoneLocator<'a> {
    pub fn new(zones: &'a [ZoneGeometry]) -> Self {
        let boxes: Vec<BBox> = zones.iter().map(ZoneGeometry::bbox).collect();
        let mut extent = BBox::empty();
        for b in &boxes {
            extent.merge(b);
        }
        if zones.is_empty() {
            return Self {
                zones,
                boxes,
                extent,
                bucket: 1.0,
                nx: 0,
                ny: 0,
                buckets: Vec::new(),
            };
        }
        let w = (extent.max_x - extent.min_x).max(COORD_EPS);
        let h = (extent.max_y - extent.min_y).max(COORD_EPS);
        // Aim for roughly one zone per bucket.
        let side = (zones.len() as f64).sqrt().ceil().max(1.0);
        let bucket = (w.max(h) / side).max(COORD_EPS);
        let nx = ((w / bucket).ceil() as usize).max(1);
        let ny = ((h / bucket).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); nx * ny];
        for (i, b) in boxes.iter().enumerate() {
            let (c0, r0) = Self::cell_of(&extent, bucket, nx, ny, b.min_x - COORD_EPS, b.min_y - COORD_EPS);
            let (c1, r1) = Self::cell_of(&extent, bucket, nx, ny, b.max_x + COORD_EPS, b.max_y + COORD_EPS);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets[r * nx + c].push(i as u32);
                }
            }
        }
        Self {
            zones,
            boxes,
            extent,
            bucket,
            nx,
            ny,
            buckets,
        }
    }

    fn cell_of(extent: &BBox, bucket: f64, nx: usize, ny: usize, x: f64, y: f64) -> (usize, usize) {
        let c = ((x - extent.min_x) / bucket).floor().clamp(0.0, (nx - 1) as f64) as usize;
        let r = ((y - extent.min_y) / bucket).floor().clamp(0.0, (ny - 1) as f64) as usize;
        (c, r)
    }

    pub fn locate(&self, p: PlanarPoint) -> Located<'a> {
        if self.nx == 0 || !p.is_finite() || !self.extent.contains(p, COORD_EPS) {
            return Located::Outside;
        }
        let (c, r) = Self::cell_of(&self.extent, self.bucket, self.nx, self.ny, p.x, p.y);
        let mut hits: Vec<&'a str> = self.buckets[r * self.nx + c]
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| self.boxes[i].contains(p, COORD_EPS) && self.zones[i].contains(p))
            .map(|i| self.zones[i].zone_id.as_str())
            .collect();
        match hits.len() {
            0 => Located::Outside,
            1 => Located::Inside(hits[0]),
            _ => {
                hits.sort_unstable();
                Located::Overlap {
                    chosen: hits[0],
                    candidates: hits,
                }
            }
        }
    }
}

/// Zone containing `p` (boundary inclusive). Points in several zones resolve
/// to the smallest zone_id and record an overlap warning.
pub fn locate_zone(p: PlanarPoint, zones: &[ZoneGeometry], warnings: &mut Warnings) -> Option<String> {
    let mut hits: Vec<&str> = zones
        .iter()
        .filter(|z| z.contains(p))
        .map(|z| z.zone_id.as_str())
        .collect();
    hits.sort_unstable();
    if hits.len() > 1 {
        warnings.push(
            WarningKind::OverlappingZones,
            format!("point ({}, {}) lies in zones {}", p.x, p.y, hits.join(", ")),
        );
    }
    hits.first().map(|z| z.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zones() -> Vec<ZoneGeometry> {
        vec![
            ZoneGeometry::rect("B", 1.0, 0.0, 2.0, 1.0).unwrap(),
            ZoneGeometry::rect("A", 0.0, 0.0, 1.0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn centroid_outside_and_shared_edge() {
        let zs = zones();
        let mut w = Warnings::new();
        assert_eq!(
            locate_zone(PlanarPoint::new(0.5, 0.5), &zs, &mut w).as_deref(),
            Some("A")
        );
        assert_eq!(locate_zone(PlanarPoint::new(5.0, 0.5), &zs, &mut w), None);
        assert!(w.is_empty());
        assert_eq!(
            locate_zone(PlanarPoint::new(1.0, 0.5), &zs, &mut w).as_deref(),
            Some("A")
        );
        assert_eq!(w.count(WarningKind::OverlappingZones), 1);
    }

    #[test]
    fn locator_agrees_with_linear_scan() {
        let mut zs = Vec::new();
        for r in 0..7 {
            for c in 0..9 {
                zs.push(
                    ZoneGeometry::rect(
                        format!("z{r}_{c}"),
                        c as f64 * 10.0,
                        r as f64 * 10.0,
                        c as f64 * 10.0 + 10.0,
                        r as f64 * 10.0 + 10.0,
                    )
                    .unwrap(),
                );
            }
        }
        let loc = ZoneLocator::new(&zs);
        let mut w = Warnings::new();
        for i in 0..400 {
            let p = PlanarPoint::new((i * 37 % 1000) as f64 / 10.0 - 2.0, (i * 53 % 760) as f64 / 10.0 - 2.0);
            assert_eq!(
                loc.locate(p).zone().map(str::to_string),
                locate_zone(p, &zs, &mut w),
                "{p:?}"
            );
        }
        assert!(matches!(
            loc.locate(PlanarPoint::new(10.0, 10.0)),
            Located::Overlap { .. }
        ));
    }
}
