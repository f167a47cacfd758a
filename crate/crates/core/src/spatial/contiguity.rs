use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::{PlanarPoint, ZoneGeometry, COORD_EPS};
use crate::error::{Error, Result};

/// Rook contiguity between zones plus the derived substitutability count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdjacencyGraph {
    neighbors: BTreeMap<String, BTreeSet<String>>,
}

impl AdjacencyGraph {
    /// Builds a graph from explicit neighbor pairs. Pairs are symmetrized and
    /// self-pairs are rejected.
    pub fn from_pairs<I, S>(zone_ids: I, pairs: &[(S, S)]) -> Result<Self>
    where
        I: IntoIterator,
        I::Item: Into<String>,
        S: AsRef<str>,
    {
        let mut neighbors: BTreeMap<String, BTreeSet<String>> =
            zone_ids.into_iter().map(|z| (z.into(), BTreeSet::new())).collect();
        for (a, b) in pairs {
            let (a, b) = (a.as_ref(), b.as_ref());
            if a == b {
                return Err(Error::invalid(format!("zone {a} cannot neighbor itself")));
            }
            for z in [a, b] {
                if !neighbors.contains_key(z) {
                    return Err(Error::UnknownZone(z.to_string()));
                }
            }
            neighbors.get_mut(a).unwrap().insert(b.to_string());
            neighbors.get_mut(b).unwrap().insert(a.to_string());
        }
        Ok(Self { neighbors })
    }

    pub fn neighbors(&self, zone_id: &str) -> Option<&BTreeSet<String>> {
        self.neighbors.get(zone_id)
    }

    /// Number of boundary-sharing neighbors, floored at 1.
    pub fn substitutability(&self, zone_id: &str) -> Option<u32> {
        self.neighbors.get(zone_id).map(|n| (n.len() as u32).max(1))
    }

    pub fn contains(&self, zone_id: &str) -> bool {
        self.neighbors.contains_key(zone_id)
    }

    pub fn zone_ids(&self) -> impl Iterator<Item = &str> {
        self.neighbors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.neighbors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_symmetric(&self) -> bool {
        self.neighbors.iter().all(|(a, ns)| {
            ns.iter()
                .all(|b| self.neighbors.get(b).is_some_and(|back| back.contains(a)))
        })
    }

    pub fn is_irreflexive(&self) -> bool {
        self.neighbors.iter().all(|(a, ns)| !ns.contains(a))
    }
}

struct Edge {
    a: PlanarPoint,
    b: PlanarPoint,
    min_x: f64,
    max_x: f64,
    min_y: f64,
    max_y: f64,
    zone: usize,
}

/// Two zones are neighbors iff their boundaries share a segment of positive
/// length. Corner-only contact does not count.
pub fn build_contiguity_graph(zones: &[ZoneGeometry]) -> Result<AdjacencyGraph> {
    let mut seen = HashSet::new();
    for z in zones {
        if !seen.insert(z.zone_id.as_str()) {
            return Err(Error::invalid(format!("duplicate zone_id {}", z.zone_id)));
        }
        z.validate_shape()?;
    }

    let mut edges: Vec<Edge> = zones
        .iter()
        .enumerate()
        .flat_map(|(zi, z)| {
            z.segments()
                .filter(|(a, b)| a.distance(b) > COORD_EPS)
                .map(move |(a, b)| Edge {
                    a,
                    b,
                    min_x: a.x.min(b.x),
                    max_x: a.x.max(b.x),
                    min_y: a.y.min(b.y),
                    max_y: a.y.max(b.y),
                    zone: zi,
                })
        })
        .collect();
    edges.sort_by(|e, f| e.min_x.total_cmp(&f.min_x));

    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    for (i, e) in edges.iter().enumerate() {
        for f in &edges[i + 1..] {
            if f.min_x > e.max_x + COORD_EPS {
                break;
            }
            if e.zone == f.zone || f.min_y > e.max_y + COORD_EPS || f.max_y < e.min_y - COORD_EPS {
                continue;
            }
            let key = (e.zone.min(f.zone), e.zone.max(f.zone));
            if pairs.contains(&key) {
                continue;
            }
            if shares_run(e.a, e.b, f.a, f.b) {
                pairs.insert(key);
            }
        }
    }

    let mut neighbors: BTreeMap<String, BTreeSet<String>> =
        zones.iter().map(|z| (z.zone_id.clone(), BTreeSet::new())).collect();
    for (i, j) in pairs {
        let (a, b) = (&zones[i].zone_id, &zones[j].zone_id);
        neighbors.get_mut(a).unwrap().insert(b.clone());
        neighbors.get_mut(b).unwrap().insert(a.clone());
    }
    Ok(AdjacencyGraph { neighbors })
}

/// True when segment cd lies on the line through ab and their overlap along
/// it is longer than the coincidence tolerance.
fn shares_run(a: PlanarPoint, b: PlanarPoint, c: PlanarPoint, d: PlanarPoint) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len = dx.hypot(dy);
    let off_line = |p: PlanarPoint| (dx * (p.y - a.y) - dy * (p.x - a.x)).abs() / len;
    if off_line(c) > COORD_EPS || off_line(d) > COORD_EPS {
        return false;
    }
    let along = |p: PlanarPoint| (dx * (p.x - a.x) + dy * (p.y - a.y)) / len;
    let (t0, t1) = (along(c), along(d));
    let lo = t0.min(t1).max(0.0);
    let hi = t0.max(t1).min(len);
    hi - lo > COORD_EPS
}
