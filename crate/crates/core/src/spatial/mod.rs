//! Planar geometry kernel: zone polygons, contiguity, point location and
//! raster cell sampling. Coordinates are meters in one shared planar CRS.

mod contiguity;
mod locate;
mod raster;

pub use contiguity::{build_contiguity_graph, AdjacencyGraph};
pub use locate::{locate_zone, Located, ZoneLocator};
pub use raster::{sample_buffer_cells, GridRaster};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates closer than this (meters) are treated as coincident.
pub const COORD_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarPoint {
    pub x: f64,
    pub y: f64,
}

impl PlanarPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &PlanarPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(&self, other: &PlanarPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl From<(f64, f64)> for PlanarPoint {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BBox {
    pub fn empty() -> Self {
        Self {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }

    pub fn include(&mut self, p: PlanarPoint) {
        self.min_x = self.min_x.min(p.x);
        self.min_y = self.min_y.min(p.y);
        self.max_x = self.max_x.max(p.x);
        self.max_y = self.max_y.max(p.y);
    }

    pub fn merge(&mut self, other: &BBox) {
        self.min_x = self.min_x.min(other.min_x);
        self.min_y = self.min_y.min(other.min_y);
        self.max_x = self.max_x.max(other.max_x);
        self.max_y = self.max_y.max(other.max_y);
    }

    pub fn contains(&self, p: PlanarPoint, eps: f64) -> bool {
        p.x >= self.min_x - eps && p.x <= self.max_x + eps && p.y >= self.min_y - eps && p.y <= self.max_y + eps
    }
}

/// One polygon part: a closed exterior ring and optional closed holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<PlanarPoint>,
    pub holes: Vec<Vec<PlanarPoint>>,
}

impl Polygon {
    pub fn new(exterior: Vec<PlanarPoint>, holes: Vec<Vec<PlanarPoint>>) -> Self {
        Self { exterior, holes }
    }

    pub fn rings(&self) -> impl Iterator<Item = &Vec<PlanarPoint>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }

    pub fn area(&self) -> f64 {
        let holes: f64 = self.holes.iter().map(|h| ring_signed_area(h).abs()).sum();
        ring_signed_area(&self.exterior).abs() - holes
    }

    /// Boundary points count as inside.
    pub fn contains(&self, p: PlanarPoint) -> bool {
        if self.rings().any(|r| on_ring(r, p)) {
            return true;
        }
        ring_contains(&self.exterior, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }
}

/// A named origin area made of one or more polygon parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ZoneGeometry {
    pub zone_id: String,
    pub parts: Vec<Polygon>,
}

impl ZoneGeometry {
    /// Checks ring closure, vertex count and finiteness. Area and
    /// self-intersection are checked by [`ZoneGeometry::validate_shape`].
    pub fn new(zone_id: impl Into<String>, parts: Vec<Polygon>) -> Result<Self> {
        let zone_id = zone_id.into();
        if zone_id.is_empty() {
            return Err(Error::invalid("empty zone_id"));
        }
        if parts.is_empty() {
            return Err(Error::invalid(format!("zone {zone_id}: no polygon parts")));
        }
        for part in &parts {
            for ring in part.rings() {
                if ring.len() < 4 {
                    return Err(Error::invalid(format!(
                        "zone {zone_id}: ring has {} vertices, need at least 4",
                        ring.len()
                    )));
                }
                if ring.iter().any(|p| !p.is_finite()) {
                    return Err(Error::invalid(format!("zone {zone_id}: non-finite coordinate")));
                }
                if ring.first() != ring.last() {
                    return Err(Error::invalid(format!("zone {zone_id}: unclosed ring")));
                }
            }
        }
        Ok(Self { zone_id, parts })
    }

    /// Axis-aligned rectangle, handy for tests and synthetic meshes.
    pub fn rect(zone_id: impl Into<String>, x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        let ring = vec![
            PlanarPoint::new(x0, y0),
            PlanarPoint::new(x1, y0),
            PlanarPoint::new(x1, y1),
            PlanarPoint::new(x0, y1),
            PlanarPoint::new(x0, y0),
        ];
        Self::new(zone_id, vec![Polygon::new(ring, vec![])])
    }

    pub fn area(&self) -> f64 {
        self.parts.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::empty();
        for part in &self.parts {
            for p in &part.exterior {
                b.include(*p);
            }
        }
        b
    }

    pub fn contains(&self, p: PlanarPoint) -> bool {
        self.bbox().contains(p, COORD_EPS) && self.parts.iter().any(|part| part.contains(p))
    }

    /// Rejects zero-area zones and self-intersecting exterior rings.
    pub fn validate_shape(&self) -> Result<()> {
        for part in &self.parts {
            if ring_signed_area(&part.exterior).abs() <= COORD_EPS * COORD_EPS {
                return Err(Error::invalid(format!(
                    "zone {}: degenerate polygon (area 0)",
                    self.zone_id
                )));
            }
            if ring_self_intersects(&part.exterior) {
                return Err(Error::invalid(format!(
                    "zone {}: self-intersecting exterior ring",
                    self.zone_id
                )));
            }
        }
        if self.area() <= COORD_EPS * COORD_EPS {
            return Err(Error::invalid(format!(
                "zone {}: degenerate polygon (area 0)",
                self.zone_id
            )));
        }
        Ok(())
    }

    /// Area-weighted centroid of the exterior of the largest part.
    pub fn centroid(&self) -> PlanarPoint {
        let part = self
            .parts
            .iter()
            .max_by(|a, b| a.area().total_cmp(&b.area()))
            .expect("zone has at least one part");
        ring_centroid(&part.exterior)
    }

    pub(crate) fn segments(&self) -> impl Iterator<Item = (PlanarPoint, PlanarPoint)> + '_ {
        self.parts
            .iter()
            .flat_map(|p| p.rings())
            .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
    }
}

pub(crate) fn ring_signed_area(ring: &[PlanarPoint]) -> f64 {
    let mut s = 0.0;
    for w in ring.windows(2) {
        s += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    s / 2.0
}

fn ring_centroid(ring: &[PlanarPoint]) -> PlanarPoint {
    let a = ring_signed_area(ring);
    let (mut cx, mut cy) = (0.0, 0.0);
    for w in ring.windows(2) {
        let cross = w[0].x * w[1].y - w[1].x * w[0].y;
        cx += (w[0].x + w[1].x) * cross;
        cy += (w[0].y + w[1].y) * cross;
    }
    PlanarPoint::new(cx / (6.0 * a), cy / (6.0 * a))
}

/// Even-odd crossing test; boundary handling is done by the caller.
fn ring_contains(ring: &[PlanarPoint], p: PlanarPoint) -> bool {
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.y > p.y) != (b.y > p.y) {
            let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_at {
                inside = !inside;
            }
        }
    }
    inside
}

fn on_ring(ring: &[PlanarPoint], p: PlanarPoint) -> bool {
    ring.windows(2).any(|w| point_on_segment(p, w[0], w[1]))
}

pub(crate) fn point_on_segment(p: PlanarPoint, a: PlanarPoint, b: PlanarPoint) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    if len <= COORD_EPS {
        return p.distance(&a) <= COORD_EPS;
    }
    let cross = (dx * (p.y - a.y) - dy * (p.x - a.x)).abs() / len;
    if cross > COORD_EPS {
        return false;
    }
    let t = (dx * (p.x - a.x) + dy * (p.y - a.y)) / len;
    t >= -COORD_EPS && t <= len + COORD_EPS
}

fn orientation(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint, d: PlanarPoint) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    point_on_segment(c, a, b) || point_on_segment(d, a, b) || point_on_segment(a, c, d) || point_on_segment(b, c, d)
}

fn ring_self_intersects(ring: &[PlanarPoint]) -> bool {
    let n = ring.len() - 1;
    if n < 4 {
        return false;
    }
    for i in 0..n {
        for j in (i + 2)..n {
            // first and last segments share the closing vertex
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_cross(ring[i], ring[i + 1], ring[j], ring[j + 1]) {
                return true;
            }
        }
    }
    false
}
