mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use common::*;
use irmetro_core::diffmerge::{merge_into_original, select_all};
use irmetro_core::hypergraph::{construct_hypergraph, reduce_hyperedges, simplify_hyperedges};
use irmetro_core::ingest::{parse_graph, to_json};
use irmetro_core::localize::prepare_for_metromap;
use irmetro_core::simplify::{
    merge_equivalent_nodes, remove_dead_nodes, simplify_graph, MergeMode,
};
use irmetro_core::synthgen::generate_corpus;
use irmetro_core::{run_pipeline, validate_graph, PipelineOptions};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dumps_round_trip(seed in 0u64..10_000) {
        let c = generate_corpus(&small_config(seed)).unwrap();
        let merged = merge_into_original(&c.original, &select_all(&c.original, &c.variants)).unwrap();
        for g in std::iter::once(&c.original).chain(&c.variants).chain([&merged]) {
            let back = parse_graph(Path::new("mem.json"), &to_json(g)).unwrap();
            prop_assert_eq!(&back, g);
            prop_assert_eq!(to_json(&back), to_json(g));
        }
    }

    #[test]
    fn every_stage_keeps_the_invariants(seed in 0u64..10_000) {
        let c = generate_corpus(&small_config(seed)).unwrap();
        for g in std::iter::once(&c.original).chain(&c.variants) {
            prop_assert!(validate_graph(g).is_empty());
        }
        let merged = merge_into_original(&c.original, &select_all(&c.original, &c.variants)).unwrap();
        prop_assert!(validate_graph(&merged).is_empty(), "{:?}", validate_graph(&merged));
        for mode in [MergeMode::Fixpoint, MergeMode::SinglePass] {
            let s = simplify_graph(&merged, mode);
            prop_assert!(validate_graph(&s).is_empty());
            let h = simplify_hyperedges(&reduce_hyperedges(&construct_hypergraph(&s)));
            prop_assert!(h.check().is_empty(), "{:?}", h.check());
        }
    }

    #[test]
    fn simplification_is_idempotent_and_conserves_weight(seed in any::<u64>()) {
        let g = random_ir_graph(&mut rng(seed), 50);
        let once = simplify_graph(&g, MergeMode::Fixpoint);
        prop_assert_eq!(&merge_equivalent_nodes(&once), &once);
        let live: u32 = remove_dead_nodes(&g).nodes.values().map(|n| n.merged_count).sum();
        prop_assert_eq!(once.nodes.values().map(|n| n.merged_count).sum::<u32>(), live);
        let single = simplify_graph(&g, MergeMode::SinglePass);
        prop_assert!(single.nodes.len() >= once.nodes.len());
        prop_assert!(once.nodes.keys().all(|k| single.nodes.contains_key(k)));
    }

    #[test]
    fn hypergraph_simplification_keeps_memberships(seed in any::<u64>()) {
        let h = reduce_hyperedges(&random_hypergraph(&mut rng(seed)));
        let out = simplify_hyperedges(&h);
        prop_assert_eq!(out.total_merged_count(), h.total_merged_count());
        let before = h.memberships();
        let after = out.memberships();
        for (id, sets) in &after {
            prop_assert_eq!(sets, &before[id]);
        }
        prop_assert_eq!(&simplify_hyperedges(&out), &out);
    }

    #[test]
    fn metro_prep_shapes_hold(seed in any::<u64>()) {
        let h = simplify_hyperedges(&reduce_hyperedges(&random_hypergraph(&mut rng(seed))));
        let prep = prepare_for_metromap(&h);
        let real_before: BTreeSet<u32> = h.nodes.keys().copied().collect();
        let mut real_after: BTreeSet<u32> = BTreeSet::new();
        for (id, n) in prep.main.nodes.iter().chain(&prep.isolated_nodes) {
            if n.is_dummy {
                prop_assert!(!real_before.contains(id));
            } else {
                real_after.insert(*id);
            }
        }
        prop_assert_eq!(real_after, real_before);
        for e in prep.main.hyperedges.iter().chain(&prep.isolated) {
            prop_assert!(e.members.len() >= 2);
            let dummies = e
                .members
                .iter()
                .filter(|m| prep.main.nodes.get(m).or_else(|| prep.isolated_nodes.get(m)).is_some_and(|n| n.is_dummy))
                .count();
            prop_assert!(dummies <= 1);
        }
    }

    #[test]
    fn exports_are_well_formed(seed in 0u64..10_000) {
        let c = generate_corpus(&small_config(seed)).unwrap();
        let out = run_pipeline(&c.original, &c.variants, &PipelineOptions::default()).unwrap();
        let x = &out.export;
        prop_assert!(x.stats.is_consistent());
        let stations: BTreeMap<u32, &_> = x.stations.iter().map(|s| (s.node_id, s)).collect();
        prop_assert_eq!(stations.len(), x.stations.len());
        for line in &x.lines {
            let order: Vec<(bool, u32)> = line
                .members
                .iter()
                .map(|m| stations.get(m).map(|s| (s.is_dummy, s.phase_id)))
                .collect::<Option<_>>()
                .expect("every member is a station");
            prop_assert!(order.windows(2).all(|w| w[0] <= w[1]), "{} not in generation order", line.name);
            prop_assert!((0.0..=1.0).contains(&line.suspiciousness));
            prop_assert_eq!(line.highlight, line.rank.is_some_and(|r| r <= x.top_k));
        }
        let ranked: Vec<f64> = x.report.ranking.iter().map(|n| x.report.row(n).unwrap().score).collect();
        prop_assert!(ranked.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(x.report.ranking.iter().all(|n| !x.report.excluded.contains(n)));
    }
}

#[test]
fn a_collapsed_component_is_not_dead() {
    let mut g = irmetro_core::IRGraph::new(0, irmetro_core::GraphLabel::Original);
    let mut p = irmetro_core::PhaseExecution::new(irmetro_core::PhaseRef::new("GraphBuilder", 0));
    for id in 0..2 {
        g.nodes.insert(
            id,
            irmetro_core::IRNode::new(id, irmetro_core::Opcode::new("Add", 1), 0),
        );
        p.generated.push(id);
    }
    g.phases.push(p);
    g.add_edge(0, 1);
    g.derive_node_phases(true);
    let out = simplify_graph(&g, MergeMode::Fixpoint);
    assert_eq!(out.nodes.len(), 1);
    assert_eq!(out.nodes[&0].merged_count, 2);
    assert!(out.nodes[&0].neighbors.is_empty());
    assert_eq!(out, oracle_simplify(&g));
}

#[test]
fn pipeline_is_deterministic_across_thread_counts() {
    let c = generate_corpus(&irmetro_core::synthgen::GenConfig::with_seed(11)).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let again = generate_corpus(&irmetro_core::synthgen::GenConfig::with_seed(11)).unwrap();
            assert_eq!(to_json(&again.original), to_json(&c.original));
            run_pipeline(
                &again.original,
                &again.variants,
                &PipelineOptions::default(),
            )
            .unwrap()
            .export
            .to_json()
        })
    };
    assert_eq!(run(1), run(4));
}
