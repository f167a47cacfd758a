use std::collections::{BTreeMap, BTreeSet};

use lifeline_core::criticality::{self, normalize_scores, score_facilities, Grouping, ScoringOptions};
use lifeline_core::hazard::{aep_weighted_exposure, combine_perils, facility_mean_depth, AepWeights};
use lifeline_core::ingest::{load_od, write_od};
use lifeline_core::regional::vwme;
use lifeline_core::spatial::{build_contiguity_graph, sample_buffer_cells, Located, ZoneLocator};
use lifeline_core::synth::{build_scenario, ScenarioParams};
use lifeline_core::{
    AdjacencyGraph, Aep, Category, FacilityRecord, GridRaster, Peril, PlanarPoint, ScenarioYear, VisitationNetwork,
    Warnings,
};
use proptest::prelude::*;

fn network(triples: &[(u8, u8, u32)]) -> VisitationNetwork {
    let mut net = VisitationNetwork::new();
    for &(o, f, v) in triples {
        net.add(&format!("O{o:02}"), &format!("F{f:02}"), v as u64);
    }
    net
}

fn raster_strategy() -> impl Strategy<Value = GridRaster> {
    (1usize..12, 1usize..12, 1u32..4).prop_flat_map(|(nc, nr, cs)| {
        prop::collection::vec(
            prop_oneof![3 => Just(0.0), 1 => Just(-9999.0), 4 => (0u32..5000).prop_map(|v| v as f64 / 1000.0)],
            nc * nr,
        )
        .prop_map(move |values| GridRaster::new(nc, nr, 0.0, 0.0, cs as f64 * 10.0, -9999.0, values).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthetic_meshes_have_symmetric_irreflexive_adjacency(seed in any::<u64>(), n in 1usize..40, jitter in 0.0f64..0.24) {
        let params = ScenarioParams {
            seed,
            n_zones: n,
            n_grocery: 2,
            n_hospital: 1,
            visit_total: 50,
            raster_cols: 40,
            raster_rows: 30,
            jitter,
            ..ScenarioParams::default()
        };
        let sc = build_scenario(&params).unwrap();
        let g = build_contiguity_graph(&sc.zones).unwrap();
        prop_assert!(g.is_symmetric());
        prop_assert!(g.is_irreflexive());
        prop_assert_eq!(g, sc.expected_adjacency());
    }

    #[test]
    fn every_point_in_the_mesh_locates(seed in any::<u64>(), n in 1usize..30, u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let params = ScenarioParams {
            seed,
            n_zones: n,
            n_grocery: 1,
            n_hospital: 1,
            visit_total: 10,
            raster_cols: 40,
            raster_rows: 40,
            ..ScenarioParams::default()
        };
        let sc = build_scenario(&params).unwrap();
        let side = 40.0 * params.cellsize;
        let p = PlanarPoint::new(params.xllcorner + u * side, params.yllcorner + v * side);
        let loc = ZoneLocator::new(&sc.zones);
        let hit = loc.locate(p);
        prop_assert!(hit.zone().is_some());
        let containing: Vec<&str> = sc.zones.iter().filter(|z| z.contains(p)).map(|z| z.zone_id.as_str()).collect();
        match hit {
            Located::Inside(z) => prop_assert_eq!(containing, vec![z]),
            Located::Overlap { chosen, .. } => prop_assert_eq!(Some(&chosen), containing.iter().min()),
            Located::Outside => unreachable!(),
        }
    }

    #[test]
    fn buffer_sample_grows_with_radius(r in raster_strategy(), x in -20.0f64..150.0, y in -20.0f64..150.0, r1 in 0.0f64..80.0, extra in 0.0f64..80.0) {
        let c = PlanarPoint::new(x, y);
        let a = sample_buffer_cells(&r, c, r1).len();
        let b = sample_buffer_cells(&r, c, r1 + extra).len();
        prop_assert!(a <= b);
    }

    #[test]
    fn buffer_mean_lies_between_wet_extremes(r in raster_strategy(), x in 0.0f64..120.0, y in 0.0f64..120.0, rad in 1.0f64..60.0) {
        let d = facility_mean_depth(&r, PlanarPoint::new(x, y), rad);
        let cells = sample_buffer_cells(&r, PlanarPoint::new(x, y), rad);
        let wet: Vec<f64> = cells.iter().copied().filter(|&v| v > 0.0).collect();
        if wet.is_empty() {
            prop_assert!(!d.flooded && d.depth_ft == 0.0);
        } else {
            let lo = wet.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = wet.iter().copied().fold(0.0, f64::max);
            prop_assert!(d.flooded);
            prop_assert!(lo <= d.depth_ft && d.depth_ft <= hi);
        }
    }

    #[test]
    fn od_round_trip(triples in prop::collection::vec((0u8..20, 0u8..10, 0u32..1000), 0..60)) {
        let net = network(&triples);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("od.csv");
        write_od(&net, &path).unwrap();
        prop_assert_eq!(load_od(&path).unwrap(), net);
    }

    #[test]
    fn normalization_is_idempotent(xs in prop::collection::vec((any::<bool>(), 0.0f64..100.0), 2..40)) {
        let raw: Vec<(Category, f64)> = xs
            .iter()
            .map(|&(h, x)| (if h { Category::Hospital } else { Category::Grocery }, x))
            .collect();
        let mut w = Warnings::new();
        let once = normalize_scores(&raw, Grouping::Global, &mut w).unwrap();
        let again: Vec<(Category, f64)> = raw.iter().map(|(c, _)| *c).zip(once.iter().copied()).collect();
        let twice = normalize_scores(&again, Grouping::Global, &mut w).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!(once.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn exposure_is_linear_in_depth(ds in prop::collection::vec(0.0f64..20.0, 5), c in 0.0f64..10.0) {
        let w = AepWeights::standard(1.0).unwrap();
        let base: BTreeMap<Aep, f64> = Aep::standard().into_iter().zip(ds.iter().copied()).collect();
        let scaled: BTreeMap<Aep, f64> = base.iter().map(|(a, d)| (*a, d * c)).collect();
        let fe = aep_weighted_exposure(&base, &w).unwrap();
        let fe_c = aep_weighted_exposure(&scaled, &w).unwrap();
        prop_assert!((fe_c - c * fe).abs() <= 1e-12 * (1.0 + fe_c.abs()));
    }

    #[test]
    fn peril_combination_commutes_and_is_idempotent(vals in prop::collection::vec((0u32..3000, 0u32..3000, any::<bool>()), 1..50)) {
        let n = vals.len();
        let mk = |pick: &dyn Fn(&(u32, u32, bool)) -> f64| {
            GridRaster::new(n, 1, 0.0, 0.0, 10.0, -9999.0, vals.iter().map(pick).collect()).unwrap()
        };
        let a = mk(&|t| t.0 as f64 / 1000.0);
        let b = mk(&|t| if t.2 { -9999.0 } else { t.1 as f64 / 1000.0 });
        let ab = combine_perils(&[(Peril::Pluvial, &a), (Peril::Fluvial, &b)]).unwrap();
        let ba = combine_perils(&[(Peril::Fluvial, &b), (Peril::Pluvial, &a)]).unwrap();
        prop_assert_eq!(&ab.values, &ba.values);
        let aa = combine_perils(&[(Peril::Pluvial, &a), (Peril::Pluvial, &a)]).unwrap();
        prop_assert_eq!(&aa.values, &a.values);
    }

    #[test]
    fn vwme_bounds_and_weight_scaling(rows in prop::collection::vec((0.0f64..1.0, 0.0f64..5.0, 1u64..500), 1..12), c in 1u64..50) {
        let fc: BTreeMap<String, f64> = rows.iter().enumerate().map(|(i, r)| (format!("F{i}"), r.0)).collect();
        let fe: BTreeMap<String, f64> = rows.iter().enumerate().map(|(i, r)| (format!("F{i}"), r.1)).collect();
        let v: BTreeMap<String, u64> = rows.iter().enumerate().map(|(i, r)| (format!("F{i}"), r.2)).collect();
        let vc: BTreeMap<String, u64> = v.iter().map(|(k, x)| (k.clone(), x * c)).collect();
        let a = vwme("J", ScenarioYear::Y2020, &fc, &fe, &v).unwrap().unwrap();
        let b = vwme("J", ScenarioYear::Y2020, &fc, &fe, &vc).unwrap().unwrap();
        let risks: Vec<f64> = rows.iter().map(|r| r.0 * r.1).collect();
        let lo = risks.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= a.vwme && a.vwme <= hi);
        prop_assert!((a.vwme - b.vwme).abs() <= 1e-12 * (1.0 + a.vwme));
    }
}

/// Independent evaluation of the criticality formula from raw triples.
fn brute_force_fc(triples: &[(u8, u8, u32)], pairs: &[(u8, u8)], facility: u8) -> Option<f64> {
    let mut per_origin: BTreeMap<u8, u64> = BTreeMap::new();
    for &(o, f, v) in triples {
        if f == facility && v > 0 {
            *per_origin.entry(o).or_insert(0) += v as u64;
        }
    }
    if per_origin.is_empty() {
        return None;
    }
    let mut total = 0.0;
    for (&o, &v) in &per_origin {
        let mut nb = BTreeSet::new();
        for &(a, b) in pairs {
            if a == o && b != o {
                nb.insert(b);
            }
            if b == o && a != o {
                nb.insert(a);
            }
        }
        total += v as f64 / nb.len().max(1) as f64;
    }
    Some(total / per_origin.len() as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn criticality_matches_brute_force(
        triples in prop::collection::vec((0u8..20, 0u8..10, 0u32..200), 1..80),
        pairs in prop::collection::vec((0u8..20, 0u8..20), 0..40),
    ) {
        let net = network(&triples);
        let ids: Vec<String> = (0..20).map(|i| format!("O{i:02}")).collect();
        let named: Vec<(String, String)> = pairs
            .iter()
            .filter(|(a, b)| a != b)
            .map(|(a, b)| (format!("O{a:02}"), format!("O{b:02}")))
            .collect();
        let adj = AdjacencyGraph::from_pairs(ids, &named).unwrap();
        for f in 0..10u8 {
            let id = format!("F{f:02}");
            let expected = brute_force_fc(&triples, &pairs, f);
            match criticality::dependence_vector(&net, &id, &adj) {
                Ok(dv) => {
                    let got = criticality::functional_criticality(&dv).unwrap();
                    let want = expected.unwrap();
                    prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(f64::MIN_POSITIVE));
                }
                Err(_) => prop_assert!(expected.is_none()),
            }
        }
    }

    #[test]
    fn scaling_visits_keeps_levels_and_ranks(
        triples in prop::collection::vec((0u8..12, 0u8..8, 1u32..100), 4..50),
    ) {
        let facilities: Vec<FacilityRecord> = (0..8u8)
            .map(|f| FacilityRecord::new(format!("F{f:02}"), if f < 5 { Category::Grocery } else { Category::Hospital }, 0.0, 0.0))
            .collect();
        let adj = AdjacencyGraph::from_pairs((0..12).map(|i| format!("O{i:02}")), &[("O00".to_string(), "O01".to_string())]).unwrap();
        let even: Vec<(u8, u8, u32)> = triples.iter().map(|&(o, f, v)| (o, f, v * 2)).collect();
        let base = network(&even);
        let score = |net: &VisitationNetwork| {
            score_facilities(net, &facilities, &adj, ScoringOptions::default(), &mut Warnings::new()).unwrap().scores
        };
        let s0 = score(&base);
        for c in [3u64, 1000] {
            let s1 = score(&base.scaled(c));
            for (a, b) in s0.iter().zip(&s1) {
                prop_assert!((a.fc_norm - b.fc_norm).abs() <= 1e-9);
                prop_assert_eq!(a.level, b.level);
            }
        }
    }
}
