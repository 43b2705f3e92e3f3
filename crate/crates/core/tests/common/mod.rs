//! Random inputs, brute-force oracles and hand-built case corpora shared by
//! the integration tests and the acceptance runner.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use irmetro_core::diffmerge::SubIR;
use irmetro_core::ir::{
    node_key, GraphLabel, Hyperedge, Hypergraph, IRGraph, IRNode, NodeId, NodeKey, NodeStatusFlags,
    Opcode, PhaseExecution, PhaseRef,
};
use irmetro_core::synthgen::{BugMode, BugSpec, GenConfig, NodeRange};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_status(rng: &mut ChaCha8Rng) -> NodeStatusFlags {
    let mut s = NodeStatusFlags::default();
    if rng.gen_bool(0.1) {
        match rng.gen_range(0..4) {
            0 => s.replaced = true,
            1 => s.killed = true,
            2 => s.removed = true,
            _ => s.appended = true,
        }
    }
    s
}

/// A small IR graph rich in twins: few opcodes and phases, copied neighbor
/// sets, the odd self-loop and isolated node.
pub fn random_ir_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> IRGraph {
    let n = rng.gen_range(2..=max_nodes);
    let n_ops = rng.gen_range(1..=3);
    let names = ["GraphBuilder", "Typer", "GraphBuilder", "EarlyOptimization"];
    let execs = rng.gen_range(1..=names.len());
    let mut g = IRGraph::new(0, GraphLabel::Original);
    for (k, name) in names.iter().take(execs).enumerate() {
        g.phases
            .push(PhaseExecution::new(PhaseRef::new(*name, k as u32)));
    }
    for id in 0..n as NodeId {
        let op = rng.gen_range(0..n_ops);
        let mut node = IRNode::new(id, Opcode::new(format!("Op{op}"), op), 0);
        if rng.gen_bool(0.15) {
            node.ir_id = rng.gen_range(1..3);
        }
        node.status = random_status(rng);
        g.nodes.insert(id, node);
        let gen = rng.gen_range(0..execs);
        g.phases[gen].generated.push(id);
        for (k, p) in g.phases.iter_mut().enumerate() {
            if k > gen && rng.gen_bool(0.2) {
                p.optimized.push(id);
            }
        }
    }

    let ids: Vec<NodeId> = g.nodes.keys().copied().collect();
    let edges = rng.gen_range(0..=2 * n);
    for _ in 0..edges {
        let a = *ids.choose(rng).expect("nodes");
        let b = *ids.choose(rng).expect("nodes");
        if a != b || rng.gen_bool(0.05) {
            g.add_edge(a, b);
        }
    }
    // copy neighbor sets so twin classes actually occur
    for _ in 0..rng.gen_range(0..=n / 3) {
        let src = *ids.choose(rng).expect("nodes");
        let dst = *ids.choose(rng).expect("nodes");
        if src == dst {
            continue;
        }
        let nbrs: Vec<NodeId> = g.nodes[&src].neighbors.iter().copied().collect();
        for nb in nbrs {
            if nb != dst && nb != src {
                g.add_edge(dst, nb);
            }
        }
        if rng.gen_bool(0.5) {
            g.add_edge(src, dst);
        }
        let (s_op, s_ir, s_st) = {
            let s = &g.nodes[&src];
            (s.opcode.clone(), s.ir_id, s.status)
        };
        let d = g.nodes.get_mut(&dst).expect("dst");
        d.opcode = s_op;
        d.ir_id = s_ir;
        d.status = s_st;
    }
    g.derive_node_phases(true);
    g
}

/// Independent removal: node, incident edges and phase list entries.
fn oracle_remove(g: &mut IRGraph, id: NodeId) {
    g.nodes.remove(&id);
    for n in g.nodes.values_mut() {
        n.neighbors.remove(&id);
    }
    for p in &mut g.phases {
        p.generated.retain(|&x| x != id);
        p.optimized.retain(|&x| x != id);
    }
}

/// Generation phase name and optimizing phase names read off the phase lists.
fn oracle_phase_info(g: &IRGraph, id: NodeId) -> (Option<String>, Vec<String>) {
    let gen = g
        .phases
        .iter()
        .find(|p| p.generated.contains(&id))
        .map(|p| p.phase.name.clone());
    let opts = g
        .phases
        .iter()
        .flat_map(|p| {
            p.optimized
                .iter()
                .filter(move |&&x| x == id)
                .map(move |_| p.phase.name.clone())
        })
        .collect();
    (gen, opts)
}

fn oracle_equivalent(g: &IRGraph, a: NodeId, b: NodeId) -> bool {
    let (na, nb) = (&g.nodes[&a], &g.nodes[&b]);
    if na.is_dummy || nb.is_dummy || na.neighbors.contains(&a) || nb.neighbors.contains(&b) {
        return false;
    }
    if na.opcode.name != nb.opcode.name || na.ir_id != nb.ir_id || na.status != nb.status {
        return false;
    }
    if oracle_phase_info(g, a) != oracle_phase_info(g, b) {
        return false;
    }
    let ra: BTreeSet<NodeId> = na.neighbors.iter().copied().filter(|&x| x != b).collect();
    let rb: BTreeSet<NodeId> = nb.neighbors.iter().copied().filter(|&x| x != a).collect();
    ra == rb
}

/// Degree scan, then merge the first equivalent pair found until none is left.
pub fn oracle_simplify(g: &IRGraph) -> IRGraph {
    let mut g = g.clone();
    let dead: Vec<NodeId> = g
        .nodes
        .values()
        .filter(|n| n.neighbors.iter().all(|&m| m == n.node_id))
        .map(|n| n.node_id)
        .collect();
    for id in dead {
        oracle_remove(&mut g, id);
    }
    loop {
        let ids: Vec<NodeId> = g.nodes.keys().copied().collect();
        let mut pair = None;
        'scan: for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                if oracle_equivalent(&g, a, b) {
                    pair = Some((a, b));
                    break 'scan;
                }
            }
        }
        let Some((keep, drop)) = pair else { break };
        let extra = g.nodes[&drop].merged_count;
        g.nodes.get_mut(&keep).expect("keep").merged_count += extra;
        oracle_remove(&mut g, drop);
    }
    g
}

/// Hyperedges named from a small pool so names repeat; ids are the
/// execution order.
pub fn random_hypergraph(rng: &mut ChaCha8Rng) -> Hypergraph {
    let n = rng.gen_range(1..=40);
    let m = rng.gen_range(1..=10);
    let names = [
        "GraphBuilder",
        "Typer",
        "TypedLowering",
        "SimplifiedLowering",
        "EarlyOptimization",
    ];
    let mut hyperedges: Vec<Hyperedge> = (0..m)
        .map(|k| Hyperedge::new(k.to_string(), *names.choose(rng).expect("names")))
        .collect();
    let mut nodes = BTreeMap::new();
    for id in 0..n as NodeId {
        let op = rng.gen_range(0..2);
        let mut node = IRNode::new(id, Opcode::new(format!("Op{op}"), op), rng.gen_range(0..3));
        node.status = random_status(rng);
        node.merged_count = rng.gen_range(1..=3);
        let mut placed = false;
        for e in &mut hyperedges {
            if rng.gen_bool(0.3) {
                e.members.insert(id);
                placed = true;
            }
        }
        if !placed {
            hyperedges[rng.gen_range(0..m)].members.insert(id);
        }
        nodes.insert(id, node);
    }
    Hypergraph { nodes, hyperedges }
}

/// name -> (joined id, member union), by brute-force group-by.
pub fn oracle_reduce(h: &Hypergraph) -> BTreeMap<String, (String, BTreeSet<NodeId>)> {
    let names: BTreeSet<&str> = h.hyperedges.iter().map(|e| e.name.as_str()).collect();
    names
        .into_iter()
        .map(|name| {
            let mut parts: Vec<&Hyperedge> =
                h.hyperedges.iter().filter(|e| e.name == name).collect();
            parts.sort_by_key(|e| e.id.parse::<u32>().expect("numeric id"));
            let id = parts
                .iter()
                .map(|e| e.id.clone())
                .collect::<Vec<_>>()
                .join("@");
            let members = parts
                .iter()
                .flat_map(|e| e.members.iter().copied())
                .collect();
            (name.to_string(), (id, members))
        })
        .collect()
}

/// Partition of the non-dummy nodes into (properties, membership) classes.
pub fn oracle_hyper_classes(h: &Hypergraph) -> BTreeSet<BTreeSet<NodeId>> {
    let member_of = |id: NodeId| -> Vec<bool> {
        h.hyperedges
            .iter()
            .map(|e| e.members.contains(&id))
            .collect()
    };
    let ids: Vec<NodeId> = h
        .nodes
        .values()
        .filter(|n| !n.is_dummy)
        .map(|n| n.node_id)
        .collect();
    let mut classes: Vec<BTreeSet<NodeId>> = Vec::new();
    for &a in &ids {
        let na = &h.nodes[&a];
        let home = classes.iter_mut().find(|c| {
            let b = *c.iter().next().expect("non-empty");
            let nb = &h.nodes[&b];
            na.opcode.name == nb.opcode.name
                && na.status == nb.status
                && na.ir_id == nb.ir_id
                && member_of(a) == member_of(b)
        });
        match home {
            Some(c) => {
                c.insert(a);
            }
            None => classes.push([a].into_iter().collect()),
        }
    }
    classes.into_iter().collect()
}

pub fn key_set(g: &IRGraph) -> BTreeSet<NodeKey> {
    g.nodes.values().filter_map(|n| node_key(n).ok()).collect()
}

/// Original keys plus the keys of every node in every candidate phase.
pub fn oracle_key_union(original: &IRGraph, subirs: &[SubIR]) -> BTreeSet<NodeKey> {
    let mut keys = key_set(original);
    for s in subirs {
        for cp in &s.candidate_phases {
            for n in cp.nodes.values() {
                if let Ok(k) = node_key(n) {
                    keys.insert(k);
                }
            }
        }
    }
    keys
}

/// Small synthetic corpora with varied mutation pressure and optional bugs.
pub fn small_config(seed: u64) -> GenConfig {
    let mut r = rng(seed ^ 0x5eed);
    let mut cfg = GenConfig::with_seed(seed);
    cfg.n_variants = r.gen_range(1..=5);
    cfg.nodes_per_graph = NodeRange { min: 80, max: 160 };
    cfg.variant_mutation_rate = r.gen_range(0.0..0.4);
    if r.gen_bool(0.5) {
        let names = cfg.distinct_phases();
        let mode = if r.gen_bool(0.5) {
            BugMode::MissingOptimization
        } else {
            BugMode::ExtraNode
        };
        cfg.bug = Some(BugSpec {
            phase_name: names[r.gen_range(1..names.len())].clone(),
            mode,
        });
    }
    cfg
}

pub const CASE_PHASES: [&str; 5] = [
    "GraphBuilder",
    "Typer",
    "TypedLowering",
    "SimplifiedLowering",
    "EarlyOptimization",
];

/// Describes a corpus whose nodes are all built by GraphBuilder, in a chain,
/// with distinct opcodes so nothing merges.
pub struct CaseSpec {
    pub nodes: u32,
    /// Phase name -> node ids the original optimizes there.
    pub original_opts: Vec<(&'static str, Vec<NodeId>)>,
    /// Per variant: phase name -> extra node ids optimized there.
    pub variant_opts: Vec<Vec<(&'static str, Vec<NodeId>)>>,
    /// Per variant: phase name -> number of extra nodes generated there.
    pub variant_gens: Vec<Vec<(&'static str, u32)>>,
}

fn case_base(spec: &CaseSpec) -> IRGraph {
    let mut g = IRGraph::new(0, GraphLabel::Original);
    for (k, name) in CASE_PHASES.iter().enumerate() {
        g.phases
            .push(PhaseExecution::new(PhaseRef::new(*name, k as u32)));
    }
    for id in 0..spec.nodes {
        let mut n = IRNode::new(id, Opcode::new(format!("Op{id}"), id), 0);
        n.address = format!("0x{:x}", 0x1000 + 0x28 * id);
        g.nodes.insert(id, n);
        g.phases[0].generated.push(id);
        if id > 0 {
            g.add_edge(id - 1, id);
        }
    }
    for (name, ids) in &spec.original_opts {
        let k = CASE_PHASES
            .iter()
            .position(|p| p == name)
            .expect("case phase");
        g.phases[k].optimized.extend(ids.iter().copied());
    }
    g
}

/// Original (buggy) plus variants built from `spec`.
pub fn case_corpus(spec: &CaseSpec) -> (IRGraph, Vec<IRGraph>) {
    let mut original = case_base(spec);
    original.buggy = Some(true);
    original.derive_node_phases(true);
    let n_variants = spec.variant_opts.len().max(spec.variant_gens.len());
    let mut variants = Vec::new();
    for v in 0..n_variants {
        let ir_id = v as u32 + 1;
        let mut g = case_base(spec);
        g.ir_id = ir_id;
        g.label = GraphLabel::Variant;
        g.buggy = Some(false);
        for (name, ids) in spec.variant_opts.get(v).into_iter().flatten() {
            let k = CASE_PHASES
                .iter()
                .position(|p| p == name)
                .expect("case phase");
            g.phases[k].optimized.extend(ids.iter().copied());
        }
        for (name, count) in spec.variant_gens.get(v).into_iter().flatten() {
            let k = CASE_PHASES
                .iter()
                .position(|p| p == name)
                .expect("case phase");
            for i in 0..*count {
                let id = g.next_node_id();
                let code = 0x100 + i;
                g.nodes.insert(
                    id,
                    IRNode::new(id, Opcode::new(format!("{name}Op{i}"), code), 0),
                );
                g.phases[k].generated.push(id);
                g.add_edge(id, i % spec.nodes);
                g.add_edge(id, (i + 1) % spec.nodes);
            }
        }
        for n in g.nodes.values_mut() {
            n.ir_id = ir_id;
            n.address = format!("0x{:x}", 0x9000 * ir_id + 0x28 * n.node_id);
        }
        g.derive_node_phases(true);
        variants.push(g);
    }
    (original, variants)
}

/// EarlyOptimization line: 11 members, 9 of them from non-buggy variants.
pub fn case_5129() -> CaseSpec {
    CaseSpec {
        nodes: 24,
        original_opts: vec![
            ("Typer", vec![1, 2, 3, 4]),
            ("TypedLowering", vec![5, 6, 7, 8]),
            ("SimplifiedLowering", vec![9, 10, 11, 12]),
            ("EarlyOptimization", vec![13, 14]),
        ],
        variant_opts: vec![
            vec![("EarlyOptimization", vec![15, 16, 17])],
            vec![("EarlyOptimization", vec![18, 19, 20])],
            vec![("EarlyOptimization", vec![21, 22, 23])],
            vec![],
        ],
        variant_gens: vec![],
    }
}

/// SimplifiedLowering line: 16 members, 13 of them foreign.
pub fn case_961237() -> CaseSpec {
    CaseSpec {
        nodes: 29,
        original_opts: vec![
            ("Typer", vec![1, 2, 3, 4]),
            ("TypedLowering", vec![5, 6, 7, 8]),
            ("EarlyOptimization", vec![9, 10, 11, 12]),
            ("SimplifiedLowering", vec![13, 14, 15]),
        ],
        variant_opts: vec![
            vec![("SimplifiedLowering", vec![16, 17, 18, 19, 20])],
            vec![("SimplifiedLowering", vec![21, 22, 23, 24])],
            vec![("SimplifiedLowering", vec![25, 26, 27, 28])],
        ],
        variant_gens: vec![],
    }
}

/// Typer line: 4 members; the only one Typer generated comes from a variant.
pub fn case_1072171() -> CaseSpec {
    CaseSpec {
        nodes: 16,
        original_opts: vec![
            ("Typer", vec![1, 2, 3]),
            ("TypedLowering", vec![4, 5, 6, 7]),
            ("SimplifiedLowering", vec![8, 9, 10, 11]),
            ("EarlyOptimization", vec![12, 13, 14, 15]),
        ],
        variant_opts: vec![],
        variant_gens: vec![vec![("Typer", 1)], vec![]],
    }
}

/// A hypergraph with `real` nodes spread over `lines` overlapping lines.
pub fn budget_hypergraph(real: u32, lines: usize) -> Hypergraph {
    let mut nodes = BTreeMap::new();
    let mut hyperedges: Vec<Hyperedge> = (0..lines)
        .map(|k| Hyperedge::new(k.to_string(), format!("Phase{k}")))
        .collect();
    for id in 0..real {
        nodes.insert(id, IRNode::new(id, Opcode::new("Add", 1), 0));
        let k = id as usize % lines;
        hyperedges[k].members.insert(id);
        hyperedges[(k + 1) % lines].members.insert(id);
    }
    Hypergraph { nodes, hyperedges }
}
