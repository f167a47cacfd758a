use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WarningKind {
    OverlappingZones,
    LonLatCoordinates,
    EmptyCrosswalk,
    DuplicateCrosswalkRow,
    HomelessDeviceEvent,
    ConstantGroup,
    RasterCoverage,
    UnmappedZone,
    EmptyCatchment,
    InsufficientData,
}

impl fmt::Display for WarningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Warning {
    pub kind: WarningKind,
    pub message: String,
    /// Number of occurrences this entry stands for.
    pub count: usize,
}

/// Counted, non-fatal anomalies collected while loading or computing.
#[derive(Debug, Default, Clone)]
pub struct Warnings {
    items: Vec<Warning>,
}

impl Warnings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, kind: WarningKind, message: impl Into<String>) {
        self.push_counted(kind, 1, message);
    }

    pub fn push_counted(&mut self, kind: WarningKind, count: usize, message: impl Into<String>) {
        if count == 0 {
            return;
        }
        self.items.push(Warning {
            kind,
            message: message.into(),
            count,
        });
    }

    pub fn count(&self, kind: WarningKind) -> usize {
        self.items.iter().filter(|w| w.kind == kind).map(|w| w.count).sum()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Warning> {
        self.items.iter()
    }

    pub fn extend(&mut self, other: Warnings) {
        self.items.extend(other.items);
    }

    pub fn counts(&self) -> BTreeMap<WarningKind, usize> {
        let mut out = BTreeMap::new();
        for w in &self.items {
            *out.entry(w.kind).or_insert(0) += w.count;
        }
        out
    }
}
