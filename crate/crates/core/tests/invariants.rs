//! Property-based invariants across stages.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use techspace::advantage::{advantage_matrix, entry_positions, rta_from_counts, AdvantageMatrix};
use techspace::atlas::{average_linkage_order, export_i4t_heatmap, export_space, KeptReason};
use techspace::complexity::mor;
use techspace::corpus::{Category, I4TMap};
use techspace::panel::{
    assemble_panel, box_cox_by_year, default_lambda_grid, split, PanelConfig, PanelSources,
    SplitScheme, Var,
};
use techspace::relatedness::{density_of_row, proximity, ProximityMatrix};
use techspace::synthlab::oracle;

fn counts_strategy() -> impl Strategy<Value = (usize, usize, Vec<u64>)> {
    (2usize..12, 2usize..12).prop_flat_map(|(nf, nt)| {
        (
            Just(nf),
            Just(nt),
            prop::collection::vec(prop_oneof![3 => Just(0u64), 2 => 1u64..20], nf * nt),
        )
    })
}

fn adv_strategy() -> impl Strategy<Value = AdvantageMatrix> {
    (2usize..10, 2usize..10).prop_flat_map(|(nf, nt)| {
        prop::collection::vec(prop::collection::vec(any::<bool>(), nt), nf).prop_map(move |rows| {
            AdvantageMatrix::from_rows(
                (0..nf).map(|i| format!("F{i}")).collect(),
                (0..nt).map(|a| format!("T{a:02}")).collect(),
                &rows,
            )
        })
    })
}

fn names(n: usize, p: &str) -> Vec<String> {
    (0..n).map(|i| format!("{p}{i:02}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rta_is_nonnegative_and_scale_free((nf, nt, counts) in counts_strategy(), k in 2u64..50) {
        prop_assume!(counts.iter().any(|&c| c > 0));
        let a = rta_from_counts(2020, &names(nf, "F"), &names(nt, "T"), &counts).unwrap();
        let scaled: Vec<u64> = counts.iter().map(|c| c * k).collect();
        let b = rta_from_counts(2020, &names(nf, "F"), &names(nt, "T"), &scaled).unwrap();
        prop_assert!(a.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
        prop_assert_eq!(a.values, b.values);
    }

    #[test]
    fn proximity_is_symmetric_and_bounded(adv in adv_strategy()) {
        let p = proximity(&adv);
        let ubiquity = adv.col_sums();
        for a in 0..p.n() {
            for b in 0..p.n() {
                let v = p.get(a, b);
                prop_assert!((0.0..=1.0).contains(&v));
                prop_assert_eq!(v, p.get(b, a));
            }
            if ubiquity[a] > 0 {
                prop_assert_eq!(p.get(a, a), 1.0);
            }
        }
    }

    #[test]
    fn density_is_a_share(adv in adv_strategy()) {
        let p = proximity(&adv);
        for i in 0..adv.n_firms() {
            for a in 0..adv.n_techs() {
                let d = density_of_row(&p, adv.row(i), a);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
            }
        }
    }

    #[test]
    fn mor_iterations_are_standardized(adv in adv_strategy()) {
        if let Ok(s) = mor(&adv, 20) {
            for n in 0..=20 {
                let v = s.tech(n);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!(var.abs() < 1e-9 || (var - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn entry_positions_match_sliding_window(
        series in prop::collection::vec(prop_oneof![Just(0.0), Just(0.5), Just(1.0), Just(3.0)], 0..14),
        lead in 0usize..4,
        persistence in 0usize..4,
    ) {
        prop_assert_eq!(entry_positions(&series, lead, persistence), oracle::entries(&series, lead, persistence));
    }

    #[test]
    fn space_graph_spans_each_component(adv in adv_strategy(), threshold in 0.0f64..1.0) {
        let p = proximity(&adv);
        let counts: Vec<u64> = adv.col_sums().iter().map(|&c| c as u64).collect();
        prop_assume!(counts.iter().any(|&c| c > 0));
        let g = export_space(&p, &counts, &I4TMap::default(), threshold).unwrap();
        prop_assert_eq!(g.tree_edges(), g.nodes.len() - g.components.len());
        prop_assert_eq!(g.components.iter().sum::<usize>(), g.nodes.len());
        for e in &g.edges {
            prop_assert!(e.a != e.b);
            prop_assert!(e.weight > 0.0 && e.weight <= 1.0);
            if e.kept_reason == KeptReason::AboveThreshold {
                prop_assert!(e.weight >= threshold);
            }
        }
    }

    #[test]
    fn space_graph_is_label_equivariant(adv in adv_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let nt = adv.n_techs();
        let mut perm: Vec<usize> = (0..nt).collect();
        perm.shuffle(&mut common::rng(seed));
        let p = proximity(&adv);
        // Distinct weights keep the spanning tree unique.
        let values: Vec<f64> = (0..nt * nt)
            .map(|k| {
                let (a, b) = (k / nt, k % nt);
                if a == b { 1.0 } else if p.get(a, b) > 0.0 { p.get(a, b) * (1.0 - 1e-6 * (a.min(b) * nt + a.max(b)) as f64) } else { 0.0 }
            })
            .collect();
        let q = ProximityMatrix { techs: p.techs.clone(), values };
        let relabelled = ProximityMatrix {
            techs: (0..nt).map(|a| q.techs[perm[a]].clone()).collect(),
            values: (0..nt * nt).map(|k| q.get(perm[k / nt], perm[k % nt])).collect(),
        };
        let counts = vec![1u64; nt];
        let edge_set = |g: &techspace::atlas::SpaceGraph| -> BTreeSet<(String, String, bool)> {
            g.edges.iter().map(|e| (e.a.clone().min(e.b.clone()), e.a.clone().max(e.b.clone()), e.kept_reason == KeptReason::SpanningTree)).collect()
        };
        let g1 = export_space(&q, &counts, &I4TMap::default(), 0.25).unwrap();
        let g2 = export_space(&relabelled, &counts, &I4TMap::default(), 0.25).unwrap();
        prop_assert_eq!(edge_set(&g1), edge_set(&g2));
    }

    #[test]
    fn heatmap_matches_nested_loops(adv in adv_strategy(), seed in any::<u64>()) {
        let p = proximity(&adv);
        let tax = common::random_taxonomy(&mut common::rng(seed), &p.techs);
        let present: BTreeSet<Category> = p.techs.iter().filter_map(|t| tax.classify(t)).collect();
        let Ok(h) = export_i4t_heatmap(&p, &tax) else {
            prop_assert!(present.len() < 2);
            return Ok(());
        };
        let k = h.categories.len();
        for x in 0..k {
            for y in 0..k {
                prop_assert_eq!(h.values[x][y], h.values[y][x]);
                let ma: Vec<usize> = (0..p.n()).filter(|&a| tax.classify(&p.techs[a]) == Some(h.categories[x])).collect();
                let mb: Vec<usize> = (0..p.n()).filter(|&a| tax.classify(&p.techs[a]) == Some(h.categories[y])).collect();
                let mut sum = 0.0;
                let mut n = 0;
                for &a in &ma {
                    for &b in &mb {
                        if x == y && a >= b {
                            continue;
                        }
                        sum += p.get(a, b);
                        n += 1;
                    }
                }
                let expected = if n == 0 { 1.0 } else { sum / n as f64 };
                prop_assert!((h.values[x][y] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linkage_order_is_a_permutation(n in 1usize..8, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = common::rng(seed);
        let mut s = vec![vec![1.0; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let v = r.random_range(0.0..1.0);
                s[i][j] = v;
                s[j][i] = v;
            }
        }
        let mut order = average_linkage_order(&s);
        order.sort_unstable();
        prop_assert_eq!(order, (0..n).collect::<Vec<_>>());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splits_partition_sorted_groups(seed in 0u64..10_000) {
        let c = common::random_corpus(seed, 20, 15, 7);
        let src = PanelSources { cube: &c.cube, firms: &c.firms, gov: &c.gov, taxonomy: &c.taxonomy };
        let panel = assemble_panel(src, None, &PanelConfig::default()).unwrap().panel;
        prop_assume!(panel.len() >= 10);
        let q = split(&panel, Var::Omega, SplitScheme::Quartiles).unwrap();
        let mut all: Vec<usize> = q.groups.iter().flat_map(|g| g.1.clone()).collect();
        for g in &q.groups {
            prop_assert!(g.1.windows(2).all(|w| w[0] < w[1]));
        }
        all.sort_unstable();
        prop_assert_eq!(all, (0..panel.len()).collect::<Vec<_>>());
        for w in q.groups.windows(2) {
            let hi = w[0].1.iter().map(|&i| panel.rows[i].omega).fold(f64::MIN, f64::max);
            let lo = w[1].1.iter().map(|&i| panel.rows[i].omega).fold(f64::MAX, f64::min);
            prop_assert!(hi <= lo);
        }
        let d = split(&panel, Var::Age, SplitScheme::DecileExtremes).unwrap();
        prop_assert_eq!(d.groups[0].1.len(), panel.len() / 10);
        prop_assert!(d.groups[0].1.iter().all(|i| !d.groups[1].1.contains(i)));
    }

    #[test]
    fn box_cox_centers_within_year(seed in 0u64..10_000) {
        let c = common::random_corpus(seed, 20, 15, 7);
        let src = PanelSources { cube: &c.cube, firms: &c.firms, gov: &c.gov, taxonomy: &c.taxonomy };
        let panel = assemble_panel(src, None, &PanelConfig::default()).unwrap().panel;
        prop_assume!(!panel.is_empty());
        let grid = default_lambda_grid();
        let (t, report) = box_cox_by_year(&panel, &Var::TRANSFORMED, &grid).unwrap();
        prop_assert_eq!(t.len(), panel.len());
        for e in &report.entries {
            if let Some(l) = e.lambda {
                prop_assert!(grid.iter().any(|g| (g - l).abs() < 1e-12));
            }
            let vals: Vec<f64> = t.rows.iter().filter(|r| r.year == e.year).map(|r| r.value(e.variable).unwrap()).collect();
            let scale = vals.iter().map(|v| v.abs()).fold(1.0, f64::max);
            prop_assert!((vals.iter().sum::<f64>() / vals.len() as f64).abs() < 1e-9 * scale);
        }
        // Untransformed columns pass through.
        for (a, b) in panel.rows.iter().zip(&t.rows) {
            prop_assert_eq!(a.entry, b.entry);
            prop_assert_eq!(a.gov, b.gov);
            prop_assert_eq!(a.tci, b.tci);
        }
    }
}

#[test]
fn advantage_threshold_is_inclusive() {
    // Equal shares give RTA exactly 1.
    let counts = [1u64, 1, 1, 1];
    let r = rta_from_counts(2020, &names(2, "F"), &names(2, "T"), &counts).unwrap();
    assert!(r.values.iter().all(|&v| v == 1.0));
    assert!(advantage_matrix(&r).cells.iter().all(|&b| b));
}
