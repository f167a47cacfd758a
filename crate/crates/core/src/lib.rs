//! Visitation-based functional criticality of lifeline facilities, their
//! flood exposure under present and future scenarios, and a regional risk
//! index that propagates facility risk to the communities that depend on
//! them.
//!
//! The pipeline runs bottom-up: [`spatial`] builds zone contiguity,
//! [`mobility`] turns pings into an origin-facility visit network,
//! [`criticality`] scores facilities, [`hazard`] samples flood depths,
//! [`regional`] aggregates to ZCTAs, and [`synth`] produces test scenarios.

pub mod criticality;
pub mod diag;
pub mod error;
pub mod hazard;
pub mod ingest;
pub mod mobility;
pub mod numeric;
pub mod regional;
pub mod spatial;
pub mod synth;

pub use criticality::{CriticalityScore, Grouping, Level, Thresholds};
pub use diag::{Warning, WarningKind, Warnings};
pub use error::{Error, Result};
pub use hazard::{Aep, AepWeights, FacilityExposure, Peril, ScenarioYear};
pub use ingest::{Category, CrosswalkTable, FacilityRecord};
pub use mobility::VisitationNetwork;
pub use regional::RegionalIndex;
pub use spatial::{AdjacencyGraph, GridRaster, PlanarPoint, ZoneGeometry};
