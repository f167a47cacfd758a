//! Command-line grammar and the pipeline stages behind each subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use lifeline_core::criticality::{category_summary, score_facilities, ScoringOptions};
use lifeline_core::hazard::{assess_exposure, exposure_summary, HazardOptions};
use lifeline_core::ingest::{
    load_crosswalk, load_facilities, load_manifest, load_od, load_pings, load_zones, write_od, RasterManifestEntry,
};
use lifeline_core::mobility::network_from_pings;
use lifeline_core::regional::{compute_regional, regional_summary, Membership, RegionalOptions, RegionalOutput};
use lifeline_core::spatial::{build_contiguity_graph, ZoneLocator};
use lifeline_core::synth::{generate_scenario, sha256_file, MobilityData, ScenarioParams};
use lifeline_core::{
    AdjacencyGraph, CriticalityScore, CrosswalkTable, Error, FacilityExposure, FacilityRecord, ScenarioYear,
    VisitationNetwork, Warnings, ZoneGeometry,
};
use serde_json::{json, Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{self, Emitter};

#[derive(Debug, Parser)]
#[command(
    name = "llc",
    version,
    about = "Lifeline facility criticality, flood exposure and regional risk"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Configuration file (key = value lines or JSON); flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Worker threads [env: LLC_JOBS; default: available parallelism].
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,

    #[command(flatten)]
    pub inputs: InputArgs,

    #[command(flatten)]
    pub tunables: TunableArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rook contiguity of the zone mesh, written as adjacency.csv.
    Adjacency,
    /// Home inference and visit detection from pings, written as od.csv.
    Mobility,
    /// Functional criticality scores, written as scores.csv.
    Criticality,
    /// Buffer depths and AEP-weighted exposure, written as exposure.csv and fe.csv.
    Hazard,
    /// Visitation-weighted mean exposure per ZCTA, written as vwme.csv.
    Regional,
    /// Summary tables and GeoJSON layers from stage outputs.
    Report,
    /// Every stage in sequence, writing the full report bundle.
    RunAll,
    /// Generate a synthetic county with known ground truth.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Adjacency => "adjacency",
            Command::Mobility => "mobility",
            Command::Criticality => "criticality",
            Command::Hazard => "hazard",
            Command::Regional => "regional",
            Command::Report => "report",
            Command::RunAll => "run-all",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Zone polygons (GeoJSON).
    #[arg(long, global = true, value_name = "FILE")]
    pub zones: Option<String>,
    /// Facility table (CSV).
    #[arg(long, global = true, value_name = "FILE")]
    pub facilities: Option<String>,
    /// Origin-destination visit table (CSV).
    #[arg(long, global = true, value_name = "FILE")]
    pub od: Option<String>,
    /// Raw device pings (CSV).
    #[arg(long, global = true, value_name = "FILE")]
    pub pings: Option<String>,
    /// Zone to ZCTA crosswalk (CSV).
    #[arg(long, global = true, value_name = "FILE")]
    pub crosswalk: Option<String>,
    /// Flood raster manifest (CSV).
    #[arg(long, global = true, value_name = "FILE")]
    pub manifest: Option<String>,
    /// Prebuilt adjacency edge list; rebuilt from --zones when absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub adjacency: Option<String>,
    /// Criticality scores from an earlier run.
    #[arg(long, global = true, value_name = "FILE")]
    pub scores: Option<String>,
    /// Per-layer exposure from an earlier run.
    #[arg(long, global = true, value_name = "FILE")]
    pub exposure: Option<String>,
    /// Facility exposure from an earlier run.
    #[arg(long, global = true, value_name = "FILE")]
    pub fe: Option<String>,
    /// Regional indices from an earlier run.
    #[arg(long, global = true, value_name = "FILE")]
    pub vwme: Option<String>,
}

#[derive(Debug, Args)]
pub struct TunableArgs {
    /// Cumulative dwell a zone needs to become a device's home [default: 24].
    #[arg(long, global = true, value_name = "HOURS")]
    pub min_dwell_hours: Option<String>,
    /// Longest gap between fixes still counted as dwell [default: 6].
    #[arg(long, global = true, value_name = "HOURS")]
    pub max_gap_hours: Option<String>,
    /// Visit radius around a facility [default: 50].
    #[arg(long, global = true, value_name = "METERS")]
    pub visit_radius: Option<String>,
    /// Minimum dwell inside the visit radius [default: 5].
    #[arg(long, global = true, value_name = "MINUTES")]
    pub min_visit_dwell: Option<String>,
    /// Buffer radius for depth sampling [default: 100].
    #[arg(long, global = true, value_name = "METERS")]
    pub buffer: Option<String>,
    /// Normalization grouping: per-category or global.
    #[arg(long, global = true)]
    pub grouping: Option<String>,
    /// Level cut points MEDIUM,HIGH [default: 0.3,0.5].
    #[arg(long, global = true, value_name = "MEDIUM,HIGH")]
    pub thresholds: Option<String>,
    /// Multiplier on AEP weights, e.g. 100 for percentage points [default: 1].
    #[arg(long, global = true, value_name = "FACTOR")]
    pub aep_scale: Option<String>,
    /// Explicit AEP weights as AEP:WEIGHT pairs.
    #[arg(long, global = true, value_name = "PAIRS")]
    pub aep_weights: Option<String>,
    /// Accept AEPs outside the standard five.
    #[arg(long, global = true)]
    pub allow_custom_aep: bool,
    /// Count only facilities located inside a ZCTA toward its index.
    #[arg(long, global = true)]
    pub containment: bool,
    /// Criticality column used in the regional index: norm or raw.
    #[arg(long, global = true)]
    pub fc_source: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthMobility {
    Od,
    Pings,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario parameters as JSON; flags override it.
    #[arg(long, value_name = "FILE")]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_zones: Option<usize>,
    #[arg(long)]
    pub n_grocery: Option<usize>,
    #[arg(long)]
    pub n_hospital: Option<usize>,
    #[arg(long)]
    pub visit_total: Option<u64>,
    /// Raster columns and rows.
    #[arg(long, value_name = "CELLS")]
    pub raster_size: Option<usize>,
    #[arg(long, value_name = "METERS")]
    pub cellsize: Option<f64>,
    /// Multiplier from 2020 to 2060 depths.
    #[arg(long)]
    pub growth: Option<f64>,
    #[arg(long, value_enum)]
    pub mobility: Option<SynthMobility>,
    #[arg(long)]
    pub n_devices: Option<usize>,
    #[arg(long)]
    pub homeless_devices: Option<usize>,
    #[arg(long)]
    pub study_days: Option<u32>,
}

impl SynthArgs {
    pub fn resolve(&self) -> Result<ScenarioParams, CliError> {
        let mut p = match &self.params {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read params {}: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => ScenarioParams::default(),
        };
        macro_rules! take {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { p.$field = v; })*
            };
        }
        take!(seed => seed, n_zones => n_zones, n_grocery => n_grocery, n_hospital => n_hospital,
              visit_total => visit_total, cellsize => cellsize, growth => depth_growth_2060);
        if let Some(n) = self.raster_size {
            p.raster_cols = n;
            p.raster_rows = n;
        }
        let (mut dev, mut homeless, mut days) = match p.mobility {
            MobilityData::Pings {
                n_devices,
                homeless_devices,
                study_days,
            } => (n_devices, homeless_devices, study_days),
            MobilityData::Od => (p.n_zones.max(1) * 20, 0, 14),
        };
        dev = self.n_devices.unwrap_or(dev);
        homeless = self.homeless_devices.unwrap_or(homeless);
        days = self.study_days.unwrap_or(days);
        let pings_flags = self.n_devices.is_some() || self.homeless_devices.is_some() || self.study_days.is_some();
        let pings = match self.mobility {
            Some(SynthMobility::Pings) => true,
            Some(SynthMobility::Od) => {
                if pings_flags {
                    return Err(CliError::Usage("device flags require --mobility pings".into()));
                }
                false
            }
            None => matches!(p.mobility, MobilityData::Pings { .. }) || pings_flags,
        };
        p.mobility = if pings {
            MobilityData::Pings {
                n_devices: dev,
                homeless_devices: homeless,
                study_days: days,
            }
        } else {
            MobilityData::Od
        };
        Ok(p)
    }
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let i = &self.inputs;
        let t = &self.tunables;
        let pairs: [(&str, Option<&String>); 22] = [
            ("zones", i.zones.as_ref()),
            ("facilities", i.facilities.as_ref()),
            ("od", i.od.as_ref()),
            ("pings", i.pings.as_ref()),
            ("crosswalk", i.crosswalk.as_ref()),
            ("manifest", i.manifest.as_ref()),
            ("adjacency", i.adjacency.as_ref()),
            ("scores", i.scores.as_ref()),
            ("exposure", i.exposure.as_ref()),
            ("fe", i.fe.as_ref()),
            ("vwme", i.vwme.as_ref()),
            ("min_dwell_hours", t.min_dwell_hours.as_ref()),
            ("max_gap_hours", t.max_gap_hours.as_ref()),
            ("visit_radius_m", t.visit_radius.as_ref()),
            ("min_visit_dwell_min", t.min_visit_dwell.as_ref()),
            ("buffer_m", t.buffer.as_ref()),
            ("grouping", t.grouping.as_ref()),
            ("thresholds", t.thresholds.as_ref()),
            ("aep_scale", t.aep_scale.as_ref()),
            ("aep_weights", t.aep_weights.as_ref()),
            ("fc_source", t.fc_source.as_ref()),
            ("jobs", None),
        ];
        for (key, v) in pairs {
            if let Some(v) = v {
                cfg.set(key, v).map_err(CliError::Usage)?;
            }
        }
        if t.allow_custom_aep {
            cfg.allow_custom_aep = true;
        }
        if t.containment {
            cfg.membership = Membership::Containment;
        }
        if let Some(n) = self.jobs {
            cfg.set("jobs", &n.to_string()).map_err(CliError::Usage)?;
        } else if let Ok(v) = std::env::var("LLC_JOBS") {
            cfg.set("jobs", v.trim())
                .map_err(|m| CliError::Usage(format!("LLC_JOBS: {m}")))?;
        }
        cfg.check()?;
        Ok(cfg)
    }
}

/// Everything a command did, echoed into run_metadata.json.
#[derive(Debug, Default)]
pub struct RunRecord {
    pub inputs: BTreeMap<String, Value>,
    pub counts: Map<String, Value>,
    pub notes: Vec<String>,
}

impl RunRecord {
    fn input(&mut self, key: &str, path: &Path) -> Result<(), CliError> {
        let digest = sha256_file(path)?;
        self.inputs.insert(
            key.to_string(),
            json!({"path": path.display().to_string(), "sha256": digest}),
        );
        Ok(())
    }

    fn count(&mut self, key: &str, n: impl Into<Value>) {
        self.counts.insert(key.to_string(), n.into());
    }
}

fn require<'a>(v: &'a Option<PathBuf>, flag: &str, stage: &str) -> Result<&'a Path, CliError> {
    v.as_deref()
        .ok_or_else(|| CliError::Usage(format!("{stage} requires --{flag}")))
}

/// An explicit path, else the file a previous stage left in the output directory.
fn upstream(v: &Option<PathBuf>, out: &Path, name: &str, flag: &str, stage: &str) -> Result<PathBuf, CliError> {
    if let Some(p) = v {
        return Ok(p.clone());
    }
    let p = out.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Usage(format!(
            "{stage} requires --{flag} or {name} in the output directory"
        )))
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    stage: &'static str,
    rec: RunRecord,
    warnings: Warnings,
}

impl Ctx<'_> {
    fn zones(&mut self) -> Result<Vec<ZoneGeometry>, CliError> {
        let path = require(&self.cfg.zones, "zones", self.stage)?;
        self.rec.input("zones", path)?;
        let z = load_zones(path, &mut self.warnings)?;
        self.rec.count("zones", z.len());
        Ok(z)
    }

    fn facilities(&mut self) -> Result<Vec<FacilityRecord>, CliError> {
        let path = require(&self.cfg.facilities, "facilities", self.stage)?;
        self.rec.input("facilities", path)?;
        let f = load_facilities(path, &mut self.warnings)?;
        self.rec.count("facilities", f.len());
        Ok(f)
    }

    fn crosswalk(&mut self) -> Result<CrosswalkTable, CliError> {
        let path = require(&self.cfg.crosswalk, "crosswalk", self.stage)?;
        self.rec.input("crosswalk", path)?;
        let c = load_crosswalk(path, &mut self.warnings)?;
        self.rec.count("zctas", c.zctas().len());
        Ok(c)
    }

    fn manifest(&mut self) -> Result<Vec<RasterManifestEntry>, CliError> {
        let path = require(&self.cfg.manifest, "manifest", self.stage)?;
        self.rec.input("manifest", path)?;
        let m = load_manifest(path, self.cfg.allow_custom_aep)?;
        for e in &m {
            let key = format!("raster {} {} {}", e.year, e.peril, e.aep);
            self.rec.input(&key, &e.path)?;
        }
        self.rec.count("raster_layers", m.len());
        Ok(m)
    }

    fn pings_network(
        &mut self,
        path: &Path,
        zones: &[ZoneGeometry],
        facilities: &[FacilityRecord],
    ) -> Result<VisitationNetwork, CliError> {
        self.rec.input("pings", path)?;
        let out = network_from_pings(
            load_pings(path)?,
            zones,
            facilities,
            self.cfg.home_params(),
            self.cfg.visit_params(),
            &mut self.warnings,
        )?;
        self.rec.count("devices", out.devices);
        self.rec.count("homed_devices", out.homes.len());
        self.rec.count("visit_events", out.events);
        self.rec.count("dropped_events", out.dropped_events);
        Ok(out.network)
    }

    /// The visitation network from --od, or derived from --pings.
    fn network(
        &mut self,
        zones: &mut Option<Vec<ZoneGeometry>>,
        facilities: &[FacilityRecord],
    ) -> Result<VisitationNetwork, CliError> {
        let net = if let Some(path) = &self.cfg.od {
            self.rec.input("od", path)?;
            load_od(path)?
        } else if let Some(path) = self.cfg.pings.clone() {
            if zones.is_none() {
                *zones = Some(self.zones()?);
            }
            self.pings_network(&path, zones.as_deref().unwrap_or_default(), facilities)?
        } else {
            return Err(CliError::Usage(format!("{} requires --od or --pings", self.stage)));
        };
        self.rec.count("visit_total", net.total());
        self.rec.count("od_pairs", net.pair_count());
        Ok(net)
    }

    fn adjacency(&mut self, zones: &mut Option<Vec<ZoneGeometry>>) -> Result<AdjacencyGraph, CliError> {
        if let Some(path) = &self.cfg.adjacency {
            self.rec.input("adjacency", path)?;
            return Ok(output::read_adjacency(path)?);
        }
        if zones.is_none() {
            *zones = Some(self.zones()?);
        }
        Ok(build_contiguity_graph(zones.as_deref().unwrap_or_default())?)
    }

    fn score(
        &mut self,
        net: &VisitationNetwork,
        facilities: &[FacilityRecord],
        adj: &AdjacencyGraph,
    ) -> Result<Vec<CriticalityScore>, CliError> {
        let opts = ScoringOptions {
            grouping: self.cfg.grouping,
            thresholds: self.cfg.thresholds,
        };
        let out = score_facilities(net, facilities, adj, opts, &mut self.warnings)?;
        self.rec.count("scored_facilities", out.scores.len());
        self.rec.count("empty_catchment", out.empty_catchment.len());
        Ok(out.scores)
    }

    fn exposures(
        &mut self,
        facilities: &[FacilityRecord],
        manifest: &[RasterManifestEntry],
    ) -> Result<Vec<FacilityExposure>, CliError> {
        let aeps: std::collections::BTreeSet<_> = manifest.iter().map(|e| e.aep).collect();
        let opts = HazardOptions {
            buffer_m: self.cfg.buffer_m,
            weights: self.cfg.weights(aeps)?,
        };
        Ok(assess_exposure(facilities, manifest, &opts, &mut self.warnings)?)
    }

    fn regional(
        &mut self,
        net: &VisitationNetwork,
        crosswalk: &CrosswalkTable,
        scores: &[CriticalityScore],
        exposures: &[FacilityExposure],
        facilities: &[FacilityRecord],
        zones: &mut Option<Vec<ZoneGeometry>>,
    ) -> Result<RegionalOutput, CliError> {
        let mut opts = RegionalOptions {
            membership: self.cfg.membership,
            fc_source: self.cfg.fc_source,
            facility_zcta: BTreeMap::new(),
        };
        if opts.membership == Membership::Containment {
            if zones.is_none() {
                *zones = Some(self.zones()?);
            }
            let locator = ZoneLocator::new(zones.as_deref().unwrap_or_default());
            for f in facilities {
                let j = locator.locate(f.location).zone().and_then(|z| crosswalk.zcta_of(z));
                if let Some(j) = j {
                    opts.facility_zcta.insert(f.facility_id.clone(), j.to_string());
                }
            }
        }
        let out = compute_regional(net, crosswalk, scores, exposures, &opts, &mut self.warnings)?;
        self.rec
            .count("zctas_with_index", out.for_year(ScenarioYear::Y2020).len());
        self.rec.count("zctas_insufficient", out.insufficient.len());
        Ok(out)
    }
}

/// Everything the summary tables and layers are built from.
struct ReportInputs<'a> {
    zones: &'a [ZoneGeometry],
    facilities: &'a [FacilityRecord],
    crosswalk: &'a CrosswalkTable,
    scores: &'a [CriticalityScore],
    exposures: &'a [FacilityExposure],
    indices: &'a [lifeline_core::RegionalIndex],
}

fn emit_report(em: &mut Emitter, rec: &mut RunRecord, r: ReportInputs<'_>) -> Result<(), CliError> {
    let ReportInputs {
        zones,
        facilities,
        crosswalk,
        scores,
        exposures,
        indices,
    } = r;
    let cats = category_summary(scores);
    em.emit("category_summary.csv", |p| output::write_category_summary(&cats, p))?;

    let mut rows = Vec::new();
    for year in ScenarioYear::ALL {
        rows.extend(exposure_summary(exposures, year));
    }
    em.emit("exposure_summary.csv", |p| output::write_exposure_summary(&rows, p))?;

    let of = |y: ScenarioYear| indices.iter().filter(|i| i.year == y).collect::<Vec<_>>();
    let (i20, i60) = (of(ScenarioYear::Y2020), of(ScenarioYear::Y2060));
    let summary = if i20.is_empty() || i60.is_empty() {
        None
    } else {
        Some(regional_summary(&i20, &i60)?)
    };
    if summary.is_none() {
        rec.notes
            .push("regional_summary.csv is empty: indices for both years are required".into());
    }
    em.emit("regional_summary.csv", |p| {
        output::write_regional_summary(summary.as_ref(), p)
    })?;

    let fg = output::facilities_geojson(facilities, scores, exposures);
    em.emit("facilities.geojson", |p| output::write_json(&fg, p))?;
    let zg = output::zctas_geojson(zones, crosswalk, indices);
    em.emit("zctas.geojson", |p| output::write_json(&zg, p))?;
    Ok(())
}

fn notes(cfg: &RunConfig) -> Vec<String> {
    let weights = match &cfg.aep_weights {
        Some(_) => format!("FE weights are the explicit AEP weights times {}", cfg.aep_scale),
        None => format!("FE weights are the AEP probabilities times {}", cfg.aep_scale),
    };
    vec![
        format!(
            "fc_norm is min-max normalized ({}); levels use low < {} <= medium < {} <= high",
            cfg.grouping, cfg.thresholds.medium, cfg.thresholds.high
        ),
        format!(
            "buffer depth is the mean of flooded cells within {} m; perils combine by cellwise maximum",
            cfg.buffer_m
        ),
        weights,
        format!(
            "vwme uses fc_{} with {} membership; ZCTAs without visits have no index",
            cfg.fc_source, cfg.membership
        ),
    ]
}

fn run_stage(command: &Command, cfg: &RunConfig, em: &mut Emitter) -> Result<(RunRecord, Warnings), CliError> {
    let mut ctx = Ctx {
        cfg,
        stage: command.name(),
        rec: RunRecord::default(),
        warnings: Warnings::new(),
    };
    let out = em.dir().to_path_buf();
    let mut zones: Option<Vec<ZoneGeometry>> = None;
    match command {
        Command::Adjacency => {
            let z = ctx.zones()?;
            let adj = build_contiguity_graph(&z)?;
            ctx.rec
                .count("adjacency_edges", adj.iter().map(|(_, n)| n.len()).sum::<usize>() / 2);
            em.emit("adjacency.csv", |p| output::write_adjacency(&adj, p))?;
        }
        Command::Mobility => {
            if cfg.od.is_some() {
                return Err(CliError::Usage(
                    "mobility derives od.csv from --pings; --od is not accepted".into(),
                ));
            }
            let path = require(&cfg.pings, "pings", ctx.stage)?.to_path_buf();
            let z = ctx.zones()?;
            let f = ctx.facilities()?;
            let net = ctx.pings_network(&path, &z, &f)?;
            ctx.rec.count("visit_total", net.total());
            em.emit("od.csv", |p| write_od(&net, p))?;
        }
        Command::Criticality => {
            let f = ctx.facilities()?;
            let net = ctx.network(&mut zones, &f)?;
            let adj = ctx.adjacency(&mut zones)?;
            let scores = ctx.score(&net, &f, &adj)?;
            em.emit("scores.csv", |p| output::write_scores(&scores, p))?;
        }
        Command::Hazard => {
            let f = ctx.facilities()?;
            let m = ctx.manifest()?;
            let ex = ctx.exposures(&f, &m)?;
            em.emit("exposure.csv", |p| output::write_exposure(&ex, p))?;
            em.emit("fe.csv", |p| output::write_fe(&ex, p))?;
        }
        Command::Regional => {
            let f = ctx.facilities()?;
            let cw = ctx.crosswalk()?;
            let net = ctx.network(&mut zones, &f)?;
            let sp = upstream(&cfg.scores, &out, "scores.csv", "scores", ctx.stage)?;
            let fp = upstream(&cfg.fe, &out, "fe.csv", "fe", ctx.stage)?;
            ctx.rec.input("scores", &sp)?;
            ctx.rec.input("fe", &fp)?;
            let scores = output::read_scores(&sp)?;
            let ex = output::exposures_from_tables(&f, &BTreeMap::new(), &output::read_fe(&fp)?);
            let reg = ctx.regional(&net, &cw, &scores, &ex, &f, &mut zones)?;
            em.emit("vwme.csv", |p| output::write_vwme(&reg.indices, p))?;
        }
        Command::Report => {
            let z = ctx.zones()?;
            let f = ctx.facilities()?;
            let cw = ctx.crosswalk()?;
            let mut read = |v: &Option<PathBuf>, name: &str, flag: &str| -> Result<PathBuf, CliError> {
                let p = upstream(v, &out, name, flag, "report")?;
                ctx.rec.input(flag, &p)?;
                Ok(p)
            };
            let sp = read(&cfg.scores, "scores.csv", "scores")?;
            let ep = read(&cfg.exposure, "exposure.csv", "exposure")?;
            let fp = read(&cfg.fe, "fe.csv", "fe")?;
            let vp = read(&cfg.vwme, "vwme.csv", "vwme")?;
            let scores = output::read_scores(&sp)?;
            let ex = output::exposures_from_tables(&f, &output::read_exposure(&ep)?, &output::read_fe(&fp)?);
            let indices = output::read_vwme(&vp)?;
            ctx.rec
                .notes
                .push("report values are read back from CSV at 6 significant digits".into());
            let inputs = ReportInputs {
                zones: &z,
                facilities: &f,
                crosswalk: &cw,
                scores: &scores,
                exposures: &ex,
                indices: &indices,
            };
            emit_report(em, &mut ctx.rec, inputs)?;
        }
        Command::RunAll => {
            zones = Some(ctx.zones()?);
            let f = ctx.facilities()?;
            let cw = ctx.crosswalk()?;
            let m = ctx.manifest()?;
            let net = ctx.network(&mut zones, &f)?;
            let adj = ctx.adjacency(&mut zones)?;
            let scores = ctx.score(&net, &f, &adj)?;
            let ex = ctx.exposures(&f, &m)?;
            let reg = ctx.regional(&net, &cw, &scores, &ex, &f, &mut zones)?;
            em.emit("scores.csv", |p| output::write_scores(&scores, p))?;
            em.emit("exposure.csv", |p| output::write_exposure(&ex, p))?;
            em.emit("fe.csv", |p| output::write_fe(&ex, p))?;
            em.emit("vwme.csv", |p| output::write_vwme(&reg.indices, p))?;
            let z = zones.take().unwrap_or_default();
            let inputs = ReportInputs {
                zones: &z,
                facilities: &f,
                crosswalk: &cw,
                scores: &scores,
                exposures: &ex,
                indices: &reg.indices,
            };
            emit_report(em, &mut ctx.rec, inputs)?;
        }
        Command::Synth(_) => unreachable!("synth is dispatched separately"),
    }
    Ok((ctx.rec, ctx.warnings))
}

/// Result of a successful command.
#[derive(Debug)]
pub struct Outcome {
    pub outputs: Vec<String>,
    pub warnings: Warnings,
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = cli.resolve_config()?;
    let jobs = cfg
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| dispatch(cli, &cfg))
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut em = Emitter::new(&cli.out)?;
    if let Command::Synth(args) = &cli.command {
        let params = args.resolve()?;
        let dir = em.dir().to_path_buf();
        let ledger = generate_scenario(&params, &dir).map_err(|e| match e {
            Error::Io { .. } => CliError::Write {
                path: dir.clone(),
                source: e,
            },
            other => CliError::Runtime(other),
        })?;
        eprintln!(
            "llc: synthetic county written to {} ({} visits, {} rasters)",
            dir.display(),
            ledger.visit_total,
            ledger.raster_checksums.len()
        );
        return Ok(Outcome {
            outputs: lifeline_core::synth::bundle_files(&dir)?
                .into_iter()
                .map(|p| p.display().to_string())
                .collect(),
            warnings: Warnings::new(),
        });
    }

    let (rec, stage_warnings) = run_stage(&cli.command, cfg, &mut em)?;
    let warnings: Vec<Value> = stage_warnings
        .iter()
        .map(|w| json!({"kind": w.kind.to_string(), "message": w.message, "count": w.count}))
        .collect();
    let mut all_notes = notes(cfg);
    all_notes.extend(rec.notes.iter().cloned());
    let meta = json!({
        "tool": "llc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config": cfg.to_json(),
        "inputs": rec.inputs,
        "counts": rec.counts,
        "warnings": warnings,
        "outputs": em.written(),
        "notes": all_notes,
    });
    em.emit("run_metadata.json", |p| output::write_json(&meta, p))?;
    for w in stage_warnings.iter() {
        eprintln!("llc: warning [{}]: {}", w.kind, w.message);
    }
    Ok(Outcome {
        outputs: em.written().to_vec(),
        warnings: stage_warnings,
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("llc: error: {e}");
            e.exit_code()
        }
    }
}
