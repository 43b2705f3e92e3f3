//! Candidate-hyperedge selection and merging of variant IRs into the original.
//!
//! Runs have unrelated node ids and addresses, so correspondence is by
//! [`NodeKey`]; phase executions correspond by `(name, exec_order)`.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use thiserror::Error;

use crate::ir::{
    node_key, node_locator, IRGraph, IRNode, NodeId, NodeKey, NodeLocator, PhaseExecution, PhaseRef,
};

/// A variant phase execution that differs from the original, with the
/// variant nodes it touches.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePhase {
    pub phase: PhaseExecution,
    pub nodes: BTreeMap<NodeId, IRNode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubIR {
    pub source_ir_id: u32,
    pub candidate_phases: Vec<CandidatePhase>,
    /// Locators of every variant node adjacent to a candidate member, used to
    /// re-attach edges in the merged graph.
    pub endpoints: BTreeMap<NodeId, NodeLocator>,
}

impl SubIR {
    pub fn is_empty(&self) -> bool {
        self.candidate_phases.is_empty()
    }

    pub fn phase_names(&self) -> Vec<&str> {
        self.candidate_phases
            .iter()
            .map(|c| c.phase.phase.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MergeError {
    #[error("merge target must be the original IR (ir_id 0), got ir_id {0}")]
    NotOriginal(u32),
    #[error("key-collision: variant {ir_id} has nodes {first} and {second} with identical key {key} in phase {phase}")]
    KeyCollision {
        ir_id: u32,
        phase: PhaseRef,
        key: NodeKey,
        first: NodeId,
        second: NodeId,
    },
}

fn phase_keys(g: &IRGraph, p: &PhaseExecution) -> Vec<NodeKey> {
    g.key_multiset(p)
}

/// Variant phase executions absent from the original or whose member key
/// multiset differs from the original's execution with the same identity.
pub fn select_candidates(original: &IRGraph, variant: &IRGraph) -> SubIR {
    let reference: HashMap<&PhaseRef, Vec<NodeKey>> = original
        .phases
        .iter()
        .map(|p| (&p.phase, phase_keys(original, p)))
        .collect();

    let mut candidate_phases = Vec::new();
    let mut endpoints = BTreeMap::new();
    for p in &variant.phases {
        let differs = match reference.get(&p.phase) {
            None => true,
            Some(keys) => *keys != phase_keys(variant, p),
        };
        if !differs {
            continue;
        }
        let mut nodes = BTreeMap::new();
        for id in p.members() {
            if let Some(n) = variant.nodes.get(&id) {
                for nb in &n.neighbors {
                    if let Some(loc) = variant.nodes.get(nb).and_then(node_locator) {
                        endpoints.insert(*nb, loc);
                    }
                }
                nodes.insert(id, n.clone());
            }
        }
        candidate_phases.push(CandidatePhase {
            phase: p.clone(),
            nodes,
        });
    }
    SubIR {
        source_ir_id: variant.ir_id,
        candidate_phases,
        endpoints,
    }
}

/// [`select_candidates`] for every variant, in variant order.
pub fn select_all(original: &IRGraph, variants: &[IRGraph]) -> Vec<SubIR> {
    variants
        .par_iter()
        .map(|v| select_candidates(original, v))
        .collect()
}

fn check_collisions(sub: &SubIR) -> Result<(), MergeError> {
    let mut seen: HashMap<NodeLocator, NodeId> = HashMap::new();
    for cp in &sub.candidate_phases {
        for (id, n) in &cp.nodes {
            let Some(loc) = node_locator(n) else { continue };
            if let Some(&other) = seen.get(&loc) {
                if other != *id {
                    return Err(MergeError::KeyCollision {
                        ir_id: sub.source_ir_id,
                        phase: loc.gen_phase.clone(),
                        key: node_key(n).expect("non-dummy"),
                        first: other.min(*id),
                        second: other.max(*id),
                    });
                }
            } else {
                seen.insert(loc, *id);
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Role {
    Generated,
    Optimized,
}

/// Folds every SubIR into a copy of the original.
///
/// Within a candidate phase, variant members are matched against the merged
/// phase's member keys as a multiset; matched members are dropped, unmatched
/// ones are imported as fresh nodes carrying their source `ir_id`. An
/// imported node is also listed under its own generation phase. Edges of an
/// imported node are kept only when the other endpoint resolves in the merged
/// graph (another node imported from the same variant, else a node with the
/// same generation execution, ordinal and opcode, original nodes first).
pub fn merge_into_original(original: &IRGraph, subirs: &[SubIR]) -> Result<IRGraph, MergeError> {
    if original.ir_id != 0 {
        return Err(MergeError::NotOriginal(original.ir_id));
    }
    let mut merged = original.clone();
    for sub in subirs {
        check_collisions(sub)?;
        merge_one(&mut merged, sub);
    }
    merged.derive_node_phases(false);
    Ok(merged)
}

fn locator_index(g: &IRGraph) -> HashMap<NodeLocator, NodeId> {
    let mut index: HashMap<NodeLocator, NodeId> = HashMap::new();
    // original nodes take precedence, then the lowest id
    let mut ordered: Vec<&IRNode> = g.nodes.values().collect();
    ordered.sort_by_key(|n| (n.ir_id != 0, n.node_id));
    for n in ordered {
        if let Some(loc) = node_locator(n) {
            index.entry(loc).or_insert(n.node_id);
        }
    }
    index
}

fn merge_one(merged: &mut IRGraph, sub: &SubIR) {
    let mut imported: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut next_id = merged.next_node_id();

    for cp in &sub.candidate_phases {
        let idx = merged.ensure_phase(&cp.phase.phase);
        let mut available: HashMap<NodeKey, usize> = HashMap::new();
        for k in merged.key_multiset(&merged.phases[idx]) {
            *available.entry(k).or_default() += 1;
        }
        let members = cp
            .phase
            .generated
            .iter()
            .map(|&id| (id, Role::Generated))
            .chain(cp.phase.optimized.iter().map(|&id| (id, Role::Optimized)));
        for (vid, role) in members {
            let Some(vnode) = cp.nodes.get(&vid) else {
                continue;
            };
            let Ok(key) = node_key(vnode) else { continue };
            if let Some(c) = available.get_mut(&key) {
                if *c > 0 {
                    *c -= 1;
                    continue;
                }
            }
            let mid = match imported.get(&vid) {
                Some(&mid) => mid,
                None => {
                    let mid = next_id;
                    next_id += 1;
                    import_node(merged, vnode, mid);
                    imported.insert(vid, mid);
                    mid
                }
            };
            // re-resolve: importing may have inserted the generation phase
            let idx = merged.phase_index(&cp.phase.phase).expect("ensured");
            let phase = &mut merged.phases[idx];
            if phase.contains(mid) {
                continue;
            }
            match role {
                Role::Generated => phase.generated.push(mid),
                Role::Optimized => phase.optimized.push(mid),
            }
        }
    }

    let index = locator_index(merged);
    let mut edges = Vec::new();
    for (vid, mid) in &imported {
        let vnode = sub
            .candidate_phases
            .iter()
            .find_map(|cp| cp.nodes.get(vid))
            .expect("imported from a candidate phase");
        for nb in &vnode.neighbors {
            let target = imported.get(nb).copied().or_else(|| {
                sub.endpoints
                    .get(nb)
                    .and_then(|loc| index.get(loc).copied())
            });
            match target {
                Some(t) if t != *mid => edges.push((*mid, t)),
                _ => {}
            }
        }
    }
    for (a, b) in edges {
        merged.add_edge(a, b);
    }
    log::debug!(
        "merged {} candidate phases from ir {} ({} nodes imported)",
        sub.candidate_phases.len(),
        sub.source_ir_id,
        imported.len()
    );
}

fn import_node(merged: &mut IRGraph, vnode: &IRNode, mid: NodeId) {
    let mut node = vnode.clone();
    node.node_id = mid;
    node.neighbors.clear();
    node.opt_phases.clear();
    if let Some(gp) = &vnode.gen_phase {
        let gi = merged.ensure_phase(gp);
        merged.phases[gi].generated.push(mid);
    }
    merged.nodes.insert(mid, node);
}
