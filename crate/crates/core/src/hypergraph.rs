//! Lifting a simplified IR into the phase hypergraph and reducing it.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::ir::{Hyperedge, Hypergraph, IRGraph, IRNode, NodeId, NodeStatusFlags};

/// One hyperedge per phase execution; a node belongs to its generation phase
/// and to every phase that optimized it.
pub fn construct_hypergraph(g: &IRGraph) -> Hypergraph {
    let mut hyperedges: Vec<Hyperedge> = g
        .phases
        .iter()
        .map(|p| Hyperedge::new(p.hyperedge_id.clone(), p.phase.name.clone()))
        .collect();
    let index: HashMap<_, usize> = g
        .phases
        .iter()
        .enumerate()
        .map(|(i, p)| (&p.phase, i))
        .collect();

    let mut nodes = BTreeMap::new();
    for n in g.nodes.values() {
        let phases = n.gen_phase.iter().chain(n.opt_phases.iter());
        let mut placed = false;
        for phase in phases {
            if let Some(&i) = index.get(phase) {
                hyperedges[i].members.insert(n.node_id);
                placed = true;
            }
        }
        if placed {
            nodes.insert(n.node_id, n.clone());
        }
    }
    Hypergraph { nodes, hyperedges }
}

/// Merges hyperedges that share a name. The merged id joins the constituent
/// ids with `@` in execution order; hyperedges are ordered by their first
/// execution.
pub fn reduce_hyperedges(h: &Hypergraph) -> Hypergraph {
    let mut groups: BTreeMap<&str, Vec<&Hyperedge>> = BTreeMap::new();
    for e in &h.hyperedges {
        groups.entry(e.name.as_str()).or_default().push(e);
    }
    let mut reduced: Vec<Hyperedge> = groups
        .into_iter()
        .map(|(name, mut parts)| {
            parts.sort_by_key(|e| e.first_exec_order());
            let id = parts
                .iter()
                .map(|e| e.id.as_str())
                .collect::<Vec<_>>()
                .join("@");
            let mut merged = Hyperedge::new(id, name);
            for p in &parts {
                merged.members.extend(p.members.iter().copied());
            }
            merged.suspiciousness = parts.iter().find_map(|p| p.suspiciousness);
            merged
        })
        .collect();
    reduced.sort_by(|a, b| {
        a.first_exec_order()
            .cmp(&b.first_exec_order())
            .then_with(|| a.name.cmp(&b.name))
    });
    Hypergraph {
        nodes: h.nodes.clone(),
        hyperedges: reduced,
    }
}

/// The properties two nodes must share to be merged inside the hypergraph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeProperties<'a> {
    pub opcode: &'a str,
    pub status: NodeStatusFlags,
    pub ir_id: u32,
}

pub fn properties(n: &IRNode) -> NodeProperties<'_> {
    NodeProperties {
        opcode: &n.opcode.name,
        status: n.status,
        ir_id: n.ir_id,
    }
}

/// Merges nodes with equal properties and identical hyperedge membership
/// into the lowest id, summing `merged_count`. Merging never changes another
/// node's membership, so a single grouping pass reaches the fixpoint.
pub fn simplify_hyperedges(h: &Hypergraph) -> Hypergraph {
    let memberships = h.memberships();
    let mut classes: BTreeMap<(NodeProperties<'_>, &BTreeSet<usize>), Vec<NodeId>> =
        BTreeMap::new();
    for (id, sets) in &memberships {
        let Some(n) = h.nodes.get(id) else { continue };
        if n.is_dummy {
            continue;
        }
        classes.entry((properties(n), sets)).or_default().push(*id);
    }

    let mut out = h.clone();
    let mut removed = BTreeSet::new();
    for ids in classes.values() {
        let (&survivor, rest) = ids.split_first().expect("non-empty class");
        if rest.is_empty() {
            continue;
        }
        let extra: u32 = rest.iter().map(|id| h.nodes[id].merged_count).sum();
        out.nodes.get_mut(&survivor).expect("survivor").merged_count += extra;
        removed.extend(rest.iter().copied());
    }
    for id in &removed {
        out.nodes.remove(id);
    }
    for e in &mut out.hyperedges {
        e.members.retain(|m| !removed.contains(m));
    }
    log::debug!(
        "hyperedge simplification: {} -> {} nodes",
        h.nodes.len(),
        out.nodes.len()
    );
    out
}
