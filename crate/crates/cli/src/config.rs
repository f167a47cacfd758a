//! Run configuration: documented defaults, overridden by a config file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use lifeline_core::criticality::{Grouping, Thresholds};
use lifeline_core::hazard::{AepWeights, DEFAULT_BUFFER_M};
use lifeline_core::mobility::{HomeParams, VisitParams};
use lifeline_core::regional::{FcSource, Membership};
use lifeline_core::Aep;
use serde_json::{Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub zones: Option<PathBuf>,
    pub facilities: Option<PathBuf>,
    pub od: Option<PathBuf>,
    pub pings: Option<PathBuf>,
    pub crosswalk: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub exposure: Option<PathBuf>,
    pub fe: Option<PathBuf>,
    pub vwme: Option<PathBuf>,

    pub min_dwell_hours: f64,
    pub max_gap_hours: f64,
    pub visit_radius_m: f64,
    pub min_visit_dwell_min: f64,
    pub buffer_m: f64,
    pub grouping: Grouping,
    pub thresholds: Thresholds,
    pub aep_scale: f64,
    /// Explicit per-AEP weights; `None` means AEP probability × `aep_scale`.
    pub aep_weights: Option<Vec<(Aep, f64)>>,
    pub allow_custom_aep: bool,
    pub membership: Membership,
    pub fc_source: FcSource,
    /// Worker threads; not part of the echoed configuration because it
    /// never changes results.
    pub jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let home = HomeParams::default();
        let visit = VisitParams::default();
        Self {
            zones: None,
            facilities: None,
            od: None,
            pings: None,
            crosswalk: None,
            manifest: None,
            adjacency: None,
            scores: None,
            exposure: None,
            fe: None,
            vwme: None,
            min_dwell_hours: home.min_dwell_hours,
            max_gap_hours: home.max_gap_hours,
            visit_radius_m: visit.radius_m,
            min_visit_dwell_min: visit.min_dwell_min,
            buffer_m: DEFAULT_BUFFER_M,
            grouping: Grouping::default(),
            thresholds: Thresholds::default(),
            aep_scale: 1.0,
            aep_weights: None,
            allow_custom_aep: false,
            membership: Membership::default(),
            fc_source: FcSource::default(),
            jobs: None,
        }
    }
}

pub const KEYS: [&str; 24] = [
    "zones",
    "facilities",
    "od",
    "pings",
    "crosswalk",
    "manifest",
    "adjacency",
    "scores",
    "exposure",
    "fe",
    "vwme",
    "min_dwell_hours",
    "max_gap_hours",
    "visit_radius_m",
    "min_visit_dwell_min",
    "buffer_m",
    "grouping",
    "thresholds",
    "aep_scale",
    "aep_weights",
    "allow_custom_aep",
    "membership",
    "fc_source",
    "jobs",
];

fn positive(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = v
        .parse()
        .map_err(|_| format!("{key}: expected a number, found {v:?}"))?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{key} must be positive"))
    }
}

pub fn parse_thresholds(v: &str) -> Result<Thresholds, String> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    let [m, h] = parts[..] else {
        return Err(format!("thresholds: expected MEDIUM,HIGH, found {v:?}"));
    };
    let m: f64 = m.parse().map_err(|_| format!("thresholds: bad number {m:?}"))?;
    let h: f64 = h.parse().map_err(|_| format!("thresholds: bad number {h:?}"))?;
    Thresholds::new(m, h).map_err(|e| match e {
        lifeline_core::Error::Validation(m) | lifeline_core::Error::OutOfRange(m) => m,
        other => other.to_string(),
    })
}

/// `AEP:WEIGHT` pairs separated by commas, e.g. `0.2:20,0.1:10`.
pub fn parse_aep_weights(v: &str) -> Result<Vec<(Aep, f64)>, String> {
    v.split(',')
        .map(|pair| {
            let (a, w) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| format!("aep_weights: expected AEP:WEIGHT, found {pair:?}"))?;
            let aep: Aep = a.trim().parse().map_err(|e: lifeline_core::Error| e.to_string())?;
            Ok((aep, positive("aep_weights", w.trim())?))
        })
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("{key}: expected true or false, found {v:?}")),
    }
}

impl RunConfig {
    /// Sets one key from its textual form.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let path = || Some(PathBuf::from(v));
        match key {
            "zones" => self.zones = path(),
            "facilities" => self.facilities = path(),
            "od" => self.od = path(),
            "pings" => self.pings = path(),
            "crosswalk" => self.crosswalk = path(),
            "manifest" => self.manifest = path(),
            "adjacency" => self.adjacency = path(),
            "scores" => self.scores = path(),
            "exposure" => self.exposure = path(),
            "fe" => self.fe = path(),
            "vwme" => self.vwme = path(),
            "min_dwell_hours" => self.min_dwell_hours = positive(key, v)?,
            "max_gap_hours" => self.max_gap_hours = positive(key, v)?,
            "visit_radius_m" => self.visit_radius_m = positive(key, v)?,
            "min_visit_dwell_min" => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| format!("{key}: expected a number, found {v:?}"))?;
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(format!("{key} must be non-negative"));
                }
                self.min_visit_dwell_min = x;
            }
            "buffer_m" => self.buffer_m = positive(key, v)?,
            "grouping" => self.grouping = v.parse().map_err(|e: lifeline_core::Error| e.to_string())?,
            "thresholds" => self.thresholds = parse_thresholds(v)?,
            "aep_scale" => self.aep_scale = positive(key, v)?,
            "aep_weights" => self.aep_weights = Some(parse_aep_weights(v)?),
            "allow_custom_aep" => self.allow_custom_aep = parse_bool(key, v)?,
            "membership" => self.membership = v.parse().map_err(|e: lifeline_core::Error| e.to_string())?,
            "fc_source" => self.fc_source = v.parse().map_err(|e: lifeline_core::Error| e.to_string())?,
            "jobs" => {
                let n: usize = v
                    .parse()
                    .map_err(|_| format!("jobs: expected a positive integer, found {v:?}"))?;
                if n == 0 {
                    return Err("jobs must be positive".into());
                }
                self.jobs = Some(n);
            }
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Applies a config file: JSON (a flat object, or a run_metadata.json
    /// whose `config` object is used) or `key = value` lines with `#`
    /// comments.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let bad = |m: String| CliError::Usage(format!("{}: {m}", path.display()));
        if text.trim_start().starts_with('{') {
            let v: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
            let obj = match v.get("config") {
                Some(Value::Object(o)) => o.clone(),
                _ => v.as_object().cloned().unwrap_or_default(),
            };
            for (k, v) in obj {
                let s = match v {
                    Value::Null => continue,
                    Value::String(s) => s,
                    Value::Array(items) => items
                        .iter()
                        .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                self.set(&k, &s).map_err(bad)?;
            }
        } else {
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| bad(format!("line {}: expected key = value", i + 1)))?;
                self.set(k.trim(), v.trim())
                    .map_err(|m| bad(format!("line {}: {m}", i + 1)))?;
            }
        }
        Ok(())
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.od.is_some() && self.pings.is_some() {
            return Err(CliError::Usage("--od and --pings are mutually exclusive".into()));
        }
        Ok(())
    }

    pub fn home_params(&self) -> HomeParams {
        HomeParams {
            min_dwell_hours: self.min_dwell_hours,
            max_gap_hours: self.max_gap_hours,
        }
    }

    pub fn visit_params(&self) -> VisitParams {
        VisitParams {
            radius_m: self.visit_radius_m,
            min_dwell_min: self.min_visit_dwell_min,
        }
    }

    pub fn weights(&self, aeps: impl IntoIterator<Item = Aep>) -> lifeline_core::Result<AepWeights> {
        match &self.aep_weights {
            Some(pairs) => AepWeights::from_pairs(pairs.iter().map(|&(a, w)| (a, w * self.aep_scale))),
            None => AepWeights::from_probabilities(aeps, self.aep_scale),
        }
    }

    /// The resolved configuration in the same keys `set` accepts.
    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        let p = |v: &Option<PathBuf>| {
            v.as_ref()
                .map_or(Value::Null, |p| Value::String(p.display().to_string()))
        };
        m.insert("zones".into(), p(&self.zones));
        m.insert("facilities".into(), p(&self.facilities));
        m.insert("od".into(), p(&self.od));
        m.insert("pings".into(), p(&self.pings));
        m.insert("crosswalk".into(), p(&self.crosswalk));
        m.insert("manifest".into(), p(&self.manifest));
        m.insert("adjacency".into(), p(&self.adjacency));
        m.insert("scores".into(), p(&self.scores));
        m.insert("exposure".into(), p(&self.exposure));
        m.insert("fe".into(), p(&self.fe));
        m.insert("vwme".into(), p(&self.vwme));
        m.insert("min_dwell_hours".into(), self.min_dwell_hours.into());
        m.insert("max_gap_hours".into(), self.max_gap_hours.into());
        m.insert("visit_radius_m".into(), self.visit_radius_m.into());
        m.insert("min_visit_dwell_min".into(), self.min_visit_dwell_min.into());
        m.insert("buffer_m".into(), self.buffer_m.into());
        m.insert("grouping".into(), self.grouping.to_string().into());
        m.insert(
            "thresholds".into(),
            format!("{},{}", self.thresholds.medium, self.thresholds.high).into(),
        );
        m.insert("aep_scale".into(), self.aep_scale.into());
        m.insert(
            "aep_weights".into(),
            self.aep_weights.as_ref().map_or(Value::Null, |w| {
                Value::String(w.iter().map(|(a, x)| format!("{a}:{x}")).collect::<Vec<_>>().join(","))
            }),
        );
        m.insert("allow_custom_aep".into(), self.allow_custom_aep.into());
        m.insert("membership".into(), self.membership.to_string().into());
        m.insert("fc_source".into(), self.fc_source.to_string().into());
        Value::Object(m)
    }
}
