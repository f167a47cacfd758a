//! Shared fixtures for the benchmarks.

use lifeline_core::ingest::write_raster;
use lifeline_core::synth::{build_scenario, Scenario, ScenarioParams};
use lifeline_core::{Aep, Peril, ScenarioYear};

/// A synthetic county sized by zone and facility counts. Rasters are
/// rendered on demand, so a large `raster` only sets the county extent.
pub fn county(n_zones: usize, n_facilities: usize, visit_total: u64, raster: usize) -> Scenario {
    let n_hospital = n_facilities / 5;
    let params = ScenarioParams {
        seed: 99,
        n_zones,
        n_grocery: n_facilities - n_hospital,
        n_hospital,
        visit_total,
        raster_cols: raster,
        raster_rows: raster,
        ..ScenarioParams::default()
    };
    build_scenario(&params).expect("benchmark scenario is feasible")
}

/// One ESRI ASCII layer of `sc`, serialized to bytes.
pub fn raster_bytes(sc: &Scenario) -> Vec<u8> {
    let r = sc
        .raster(ScenarioYear::Y2060, Peril::Pluvial, Aep::new(0.01).expect("valid AEP"))
        .expect("raster renders");
    let dir = std::env::temp_dir().join(format!("lifeline-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("layer.asc");
    write_raster(&r, &path).expect("raster writes");
    let bytes = std::fs::read(&path).expect("raster reads back");
    let _ = std::fs::remove_dir_all(&dir);
    bytes
}
