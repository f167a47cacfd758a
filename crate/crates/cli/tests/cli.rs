use std::path::Path;
use std::process::Command;

use serde_json::Value;

const BUNDLE: [&str; 9] = [
    "scores.csv",
    "exposure.csv",
    "fe.csv",
    "vwme.csv",
    "category_summary.csv",
    "exposure_summary.csv",
    "regional_summary.csv",
    "facilities.geojson",
    "zctas.geojson",
];

fn llc(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_llc"))
        .args(args)
        .env_remove("LLC_JOBS")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn synth(dir: &Path, extra: &[&str]) {
    let d = dir.to_str().unwrap();
    let mut args = vec![
        "synth",
        "--out",
        d,
        "--n-zones",
        "36",
        "--n-grocery",
        "16",
        "--n-hospital",
        "5",
        "--visit-total",
        "4000",
        "--raster-size",
        "100",
    ];
    args.extend_from_slice(extra);
    let (code, err) = llc(&args);
    assert_eq!(code, 0, "{err}");
}

fn inputs(dir: &Path) -> Vec<String> {
    let p = |f: &str| dir.join(f).display().to_string();
    vec![
        "--zones".into(),
        p("zones.geojson"),
        "--facilities".into(),
        p("facilities.csv"),
        "--crosswalk".into(),
        p("crosswalk.csv"),
        "--manifest".into(),
        p("manifest.csv"),
    ]
}

fn run_all(data: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let mut args: Vec<String> = vec!["run-all".into(), "--out".into(), out.display().to_string()];
    args.extend(inputs(data));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    llc(&refs)
}

fn od_arg(dir: &Path) -> String {
    dir.join("od.csv").display().to_string()
}

fn metadata(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("run_metadata.json")).unwrap()).unwrap()
}

#[test]
fn run_all_writes_the_complete_bundle() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(data.path(), &[]);
    let (code, err) = run_all(data.path(), out.path(), &["--od", &od_arg(data.path())]);
    assert_eq!(code, 0, "{err}");
    for f in BUNDLE {
        assert!(out.path().join(f).is_file(), "{f} missing");
    }
    let meta = metadata(out.path());
    assert_eq!(meta["command"], "run-all");
    assert_eq!(meta["outputs"].as_array().unwrap().len(), 9);
    assert_eq!(meta["counts"]["visit_total"], 4000);
    let head = std::fs::read_to_string(out.path().join("scores.csv")).unwrap();
    assert!(head.starts_with("facility_id,category,fc_raw,fc_norm,level,catchment_size\n"));
}

#[test]
fn rerun_from_metadata_reproduces_bytes() {
    let data = tempfile::tempdir().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(data.path(), &[]);
    let (code, err) = run_all(
        data.path(),
        a.path(),
        &["--od", &od_arg(data.path()), "--aep-scale", "100", "--buffer", "75"],
    );
    assert_eq!(code, 0, "{err}");
    let cfg = a.path().join("run_metadata.json").display().to_string();
    let (code, err) = llc(&["run-all", "--config", &cfg, "--out", b.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    for f in BUNDLE.iter().chain(&["run_metadata.json"]) {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn stages_chain_to_the_same_tables_as_run_all() {
    let data = tempfile::tempdir().unwrap();
    let (staged, whole) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    synth(data.path(), &[]);
    let od = od_arg(data.path());
    let s = staged.path().to_str().unwrap();
    let mut common = inputs(data.path());
    common.extend(["--od".to_string(), od.clone(), "--out".into(), s.into()]);
    let run = |stage: &str, extra: &[String]| {
        let mut args = vec![stage.to_string()];
        args.extend(common.iter().cloned());
        args.extend(extra.iter().cloned());
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        let (code, err) = llc(&refs);
        assert_eq!(code, 0, "{stage}: {err}");
    };
    run("adjacency", &[]);
    run("criticality", &["--adjacency".into(), format!("{s}/adjacency.csv")]);
    run("hazard", &[]);
    run("regional", &[]);
    run("report", &[]);
    let (code, err) = run_all(data.path(), whole.path(), &["--od", &od]);
    assert_eq!(code, 0, "{err}");
    for f in ["scores.csv", "exposure.csv", "fe.csv"] {
        assert_eq!(
            std::fs::read(staged.path().join(f)).unwrap(),
            std::fs::read(whole.path().join(f)).unwrap(),
            "{f}"
        );
    }
    for f in BUNDLE {
        assert!(staged.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn pings_drive_the_pipeline() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(
        data.path(),
        &[
            "--mobility",
            "pings",
            "--n-devices",
            "2000",
            "--homeless-devices",
            "10",
            "--study-days",
            "14",
        ],
    );
    let pings = data.path().join("pings.csv").display().to_string();
    let (code, err) = run_all(data.path(), out.path(), &["--pings", &pings]);
    assert_eq!(code, 0, "{err}");
    let ledger: Value =
        serde_json::from_str(&std::fs::read_to_string(data.path().join("ledger.json")).unwrap()).unwrap();
    let meta = metadata(out.path());
    assert_eq!(meta["counts"]["visit_total"], ledger["visit_total"]);
    assert_eq!(meta["counts"]["dropped_events"], ledger["dropped_events"]);
    assert_eq!(meta["counts"]["homed_devices"], 1990);

    let (code, err) = llc(&[
        "mobility",
        "--out",
        out.path().to_str().unwrap(),
        "--zones",
        data.path().join("zones.geojson").to_str().unwrap(),
        "--facilities",
        data.path().join("facilities.csv").to_str().unwrap(),
        "--pings",
        &pings,
    ]);
    assert_eq!(code, 0, "{err}");
    let od = std::fs::read_to_string(out.path().join("od.csv")).unwrap();
    assert!(od.starts_with("origin_zone_id,facility_id,visits\n"));
}

#[test]
fn flags_override_config_file() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(data.path(), &[]);
    let cfg = out.path().join("run.conf");
    std::fs::write(&cfg, "# tunables\nbuffer_m = 50\nthresholds = 0.2,0.6\n").unwrap();
    let cfg = cfg.display().to_string();
    let od = od_arg(data.path());
    let (code, err) = run_all(
        data.path(),
        out.path(),
        &["--od", &od, "--config", &cfg, "--buffer", "100"],
    );
    assert_eq!(code, 0, "{err}");
    let meta = metadata(out.path());
    assert_eq!(meta["config"]["buffer_m"], 100.0);
    assert_eq!(meta["config"]["thresholds"], "0.2,0.6");
    let (code, _) = run_all(data.path(), out.path(), &["--od", &od, "--config", &cfg]);
    assert_eq!(code, 0);
    assert_eq!(metadata(out.path())["config"]["buffer_m"], 50.0);
}

#[test]
fn exit_codes() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(data.path(), &[]);
    let od = od_arg(data.path());

    assert_eq!(llc(&["--help"]).0, 0);
    assert_eq!(llc(&["--version"]).0, 0);
    assert_eq!(llc(&[]).0, 1);
    assert_eq!(llc(&["run-all", "--no-such-flag"]).0, 1);

    let (code, err) = run_all(data.path(), out.path(), &["--od", &od, "--thresholds", "0.5,0.3"]);
    assert_eq!(code, 1);
    assert!(err.contains("thresholds must increase"), "{err}");

    let pings = data.path().join("pings.csv").display().to_string();
    assert_eq!(run_all(data.path(), out.path(), &["--od", &od, "--pings", &pings]).0, 1);
    assert_eq!(run_all(data.path(), out.path(), &[]).0, 1, "no mobility input");
    assert_eq!(run_all(data.path(), out.path(), &["--od", "/nonexistent/od.csv"]).0, 1);

    let bad = out.path().join("bad_od.csv");
    std::fs::write(&bad, "origin_zone_id,facility_id,visits\nZ01,G01,-4\n").unwrap();
    assert_eq!(run_all(data.path(), out.path(), &["--od", bad.to_str().unwrap()]).0, 2);

    let unknown = out.path().join("unknown_od.csv");
    std::fs::write(&unknown, "origin_zone_id,facility_id,visits\nZ01,NOPE,4\n").unwrap();
    assert_eq!(
        run_all(data.path(), out.path(), &["--od", unknown.to_str().unwrap()]).0,
        2
    );
}

#[test]
fn jobs_from_environment() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(data.path(), &[]);
    let mut args: Vec<String> = vec!["run-all".into(), "--out".into(), out.path().display().to_string()];
    args.extend(inputs(data.path()));
    args.extend(["--od".to_string(), od_arg(data.path())]);
    let status = |jobs: &str| {
        Command::new(env!("CARGO_BIN_EXE_llc"))
            .args(&args)
            .env("LLC_JOBS", jobs)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(status("2"), Some(0));
    assert_eq!(status("0"), Some(1));
    assert_eq!(status("many"), Some(1));
}

#[test]
fn write_failure_leaves_partial_manifest() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(data.path(), &[]);
    std::fs::create_dir(out.path().join("fe.csv")).unwrap();
    let (code, err) = run_all(data.path(), out.path(), &["--od", &od_arg(data.path())]);
    assert_eq!(code, 2, "{err}");
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(out.path().join("partial_outputs.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], false);
    assert_eq!(manifest["failed"], "fe.csv");
    assert_eq!(manifest["written"], serde_json::json!(["scores.csv", "exposure.csv"]));
}

#[test]
fn zcta_without_visits_renders_null() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    synth(data.path(), &[]);
    let cw = std::fs::read_to_string(data.path().join("crosswalk.csv")).unwrap();
    let target = cw.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    let silent: Vec<String> = cw
        .lines()
        .skip(1)
        .filter(|l| l.ends_with(&format!(",{target}")))
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert!(!silent.is_empty());
    let od_path = data.path().join("od.csv");
    let od = std::fs::read_to_string(&od_path).unwrap();
    let kept: Vec<&str> = od
        .lines()
        .filter(|l| !silent.iter().any(|z| l.starts_with(&format!("{z},"))))
        .collect();
    std::fs::write(&od_path, kept.join("\n") + "\n").unwrap();

    let (code, err) = run_all(data.path(), out.path(), &["--od", &od_arg(data.path())]);
    assert_eq!(code, 0, "{err}");
    let g: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("zctas.geojson")).unwrap()).unwrap();
    let j01 = g["features"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["properties"]["zcta_id"] == target.as_str())
        .unwrap();
    assert!(j01["properties"]["vwme_2020"].is_null());
    assert!(j01["properties"]["delta"].is_null());
    assert_eq!(j01["geometry"]["type"], "MultiPolygon");
    let meta = metadata(out.path());
    assert!(meta["warnings"]
        .as_array()
        .unwrap()
        .iter()
        .any(|w| w["kind"] == "insufficient_data"));
}
