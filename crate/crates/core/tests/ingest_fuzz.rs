//! Every loader must reject its own writer's output after a single schema
//! violation.

use std::path::Path;

use lifeline_core::ingest::{
    load_crosswalk, load_facilities, load_od, load_raster, write_crosswalk, write_facilities, write_od, write_raster,
};
use lifeline_core::{Category, CrosswalkTable, FacilityRecord, GridRaster, VisitationNetwork, Warnings};
use proptest::prelude::*;

/// Applies mutation `kind` to data line `row` (1-based, after the header).
fn mutate_csv(text: &str, kind: usize, row: usize, numeric_col: usize, special: &dyn Fn(&mut Vec<String>)) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let row = 1 + row % (lines.len() - 1);
    let mut fields: Vec<String> = lines[row].split(',').map(str::to_string).collect();
    match kind {
        0 => lines[0] = format!("x{}", lines[0]),
        1 => {
            fields.push("extra".into());
            lines[row] = fields.join(",");
        }
        2 => {
            fields.pop();
            lines[row] = fields.join(",");
        }
        3 => {
            fields[numeric_col] = "abc".into();
            lines[row] = fields.join(",");
        }
        _ => {
            special(&mut fields);
            if fields.len() == 1 && fields[0].contains('\n') {
                lines[row] = fields[0].clone();
            } else {
                lines[row] = fields.join(",");
            }
        }
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

fn rewrite(path: &Path, f: impl FnOnce(&str) -> String) {
    let text = std::fs::read_to_string(path).unwrap();
    std::fs::write(path, f(&text)).unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn od_loader_rejects_mutations(rows in prop::collection::vec((0u8..9, 0u8..9, 1u32..500), 1..30), kind in 0usize..5, row in any::<usize>()) {
        let mut net = VisitationNetwork::new();
        for (o, f, v) in rows {
            net.add(&format!("Z{o}"), &format!("F{f}"), v as u64);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("od.csv");
        write_od(&net, &path).unwrap();
        rewrite(&path, |t| mutate_csv(t, kind, row, 2, &|f| f[2] = "-3".into()));
        prop_assert!(load_od(&path).is_err());
    }

    #[test]
    fn facility_loader_rejects_mutations(n in 1usize..20, kind in 0usize..5, row in any::<usize>()) {
        let facilities: Vec<FacilityRecord> = (0..n)
            .map(|i| FacilityRecord::new(format!("F{i}"), Category::Grocery, 500_000.0 + i as f64, 3_000_000.0))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("facilities.csv");
        write_facilities(&facilities, &path).unwrap();
        rewrite(&path, |t| mutate_csv(t, kind, row, 2, &|f| f[1] = "pharmacy".into()));
        prop_assert!(load_facilities(&path, &mut Warnings::new()).is_err());
    }

    #[test]
    fn crosswalk_loader_rejects_mutations(n in 1usize..20, kind in 0usize..5, row in any::<usize>()) {
        let table = CrosswalkTable::from_pairs((0..n).map(|i| (format!("Z{i}"), format!("J{}", i / 3)))).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crosswalk.csv");
        write_crosswalk(&table, &path).unwrap();
        // Kind 3 has no numeric column to corrupt; blank a required field instead.
        let kind = if kind == 3 { 2 } else { kind };
        rewrite(&path, |t| {
            mutate_csv(t, kind, row, 1, &|f| {
                let dup = format!("{0},{1}\n{0},other", f[0], f[1]);
                *f = vec![dup];
            })
        });
        prop_assert!(load_crosswalk(&path, &mut Warnings::new()).is_err());
    }

    #[test]
    fn raster_loader_rejects_mutations(nc in 1usize..8, nr in 1usize..8, kind in 0usize..6, row in any::<usize>(), col in any::<usize>()) {
        let values: Vec<f64> = (0..nc * nr).map(|i| (i % 7) as f64 * 0.25).collect();
        let r = GridRaster::new(nc, nr, 0.0, 0.0, 10.0, -9999.0, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.asc");
        write_raster(&r, &path).unwrap();
        rewrite(&path, |t| {
            let mut lines: Vec<String> = t.lines().map(str::to_string).collect();
            let data = 6 + row % nr;
            let mut vals: Vec<String> = lines[data].split(' ').map(str::to_string).collect();
            let c = col % nc;
            match kind {
                0 => {
                    lines.remove(row % 6);
                }
                1 => {
                    vals.push("1".into());
                    lines[data] = vals.join(" ");
                }
                2 => {
                    vals.pop();
                    lines[data] = if vals.is_empty() { "x".into() } else { vals.join(" ") };
                }
                3 => {
                    vals[c] = "abc".into();
                    lines[data] = vals.join(" ");
                }
                4 => {
                    vals[c] = "-0.5".into();
                    lines[data] = vals.join(" ");
                }
                _ => {
                    lines.remove(data);
                }
            }
            lines.join("\n") + "\n"
        });
        prop_assert!(load_raster(&path).is_err());
    }
}
