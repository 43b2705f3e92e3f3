//! Graph-level reduction of a merged IR: dead-node removal and merging of
//! equivalent nodes.

use std::collections::{BTreeSet, HashMap};

use crate::ir::{IRGraph, IRNode, NodeId, NodeStatusFlags};

/// Keeps only nodes with at least one edge to another node.
pub fn remove_dead_nodes(g: &IRGraph) -> IRGraph {
    let dead: BTreeSet<NodeId> = g
        .nodes
        .values()
        .filter(|n| n.proper_degree() == 0)
        .map(|n| n.node_id)
        .collect();
    let mut out = g.clone();
    out.remove_nodes(&dead);
    log::debug!("removed {} dead nodes", dead.len());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeMode {
    /// Repeat until no mergeable pair remains.
    #[default]
    Fixpoint,
    /// One sweep over the input's neighbor sets.
    SinglePass,
}

/// Everything except the neighbor set that two mergeable nodes must share.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeSignature<'a> {
    pub opcode: &'a str,
    pub gen_phase: Option<&'a str>,
    pub opt_phases: Vec<&'a str>,
    pub status: NodeStatusFlags,
    pub ir_id: u32,
}

pub fn signature(n: &IRNode) -> NodeSignature<'_> {
    NodeSignature {
        opcode: &n.opcode.name,
        gen_phase: n.gen_phase.as_ref().map(|p| p.name.as_str()),
        opt_phases: n.opt_phases.iter().map(|p| p.name.as_str()).collect(),
        status: n.status,
        ir_id: n.ir_id,
    }
}

/// True when `a` and `b` may be merged: same opcode, optimization
/// information and IR, and identical neighbor sets once their mutual edge is
/// ignored.
pub fn mergeable(a: &IRNode, b: &IRNode) -> bool {
    if a.node_id == b.node_id || a.is_dummy || b.is_dummy || signature(a) != signature(b) {
        return false;
    }
    let na = a.neighbors.iter().filter(|&&x| x != b.node_id);
    let nb = b.neighbors.iter().filter(|&&x| x != a.node_id);
    na.eq(nb)
}

/// Merges equivalent nodes into the lowest id of each class, summing
/// `merged_count`.
pub fn merge_equivalent_nodes(g: &IRGraph) -> IRGraph {
    merge_equivalent_nodes_with(g, MergeMode::Fixpoint)
}

pub fn merge_equivalent_nodes_with(g: &IRGraph, mode: MergeMode) -> IRGraph {
    let mut out = g.clone();
    let mut rounds = 0;
    loop {
        let merged = merge_round(&mut out);
        rounds += 1;
        if merged == 0 || mode == MergeMode::SinglePass {
            break;
        }
    }
    log::debug!(
        "equivalent-node merge: {} -> {} nodes in {rounds} round(s)",
        g.nodes.len(),
        out.nodes.len()
    );
    out
}

/// One sweep. Nodes with a self-loop never qualify; among the rest, a
/// mergeable pair has either equal open neighborhoods (not adjacent) or equal
/// closed neighborhoods (adjacent), and both relations partition the nodes
/// into classes that a merge elsewhere does not split.
fn merge_round(g: &mut IRGraph) -> usize {
    let mut open: HashMap<(NodeSignature<'_>, Vec<NodeId>), Vec<NodeId>> = HashMap::new();
    let mut closed: HashMap<(NodeSignature<'_>, Vec<NodeId>), Vec<NodeId>> = HashMap::new();
    for n in g.nodes.values() {
        if n.is_dummy || n.neighbors.contains(&n.node_id) {
            continue;
        }
        let nbrs: Vec<NodeId> = n.neighbors.iter().copied().collect();
        let mut with_self = nbrs.clone();
        let at = with_self.partition_point(|&x| x < n.node_id);
        with_self.insert(at, n.node_id);
        open.entry((signature(n), nbrs))
            .or_default()
            .push(n.node_id);
        closed
            .entry((signature(n), with_self))
            .or_default()
            .push(n.node_id);
    }

    let mut absorb: Vec<(NodeId, Vec<NodeId>)> = open
        .into_values()
        .chain(closed.into_values())
        .filter(|c| c.len() > 1)
        .map(|mut c| {
            c.sort_unstable();
            let survivor = c.remove(0);
            (survivor, c)
        })
        .collect();
    absorb.sort();

    let mut removed = BTreeSet::new();
    for (survivor, others) in &absorb {
        let extra: u32 = others.iter().map(|id| g.nodes[id].merged_count).sum();
        g.nodes.get_mut(survivor).expect("survivor").merged_count += extra;
        removed.extend(others.iter().copied());
    }
    g.remove_nodes(&removed);
    removed.len()
}

/// Dead-node removal followed by equivalent-node merging.
pub fn simplify_graph(g: &IRGraph, mode: MergeMode) -> IRGraph {
    merge_equivalent_nodes_with(&remove_dead_nodes(g), mode)
}
