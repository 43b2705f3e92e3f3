//! Sea-of-nodes IR graph, optimization-phase and hypergraph data model.
//!
//! An [`IRGraph`] is a simple undirected graph for one program run. Phase
//! membership is stored twice: each [`PhaseExecution`] lists the nodes it
//! generated and optimized, and each [`IRNode`] carries its generation phase
//! and the phases that optimized it. [`validate_graph`] checks that both views
//! agree.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// Rewrite flags recorded by optimization phases.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct NodeStatusFlags {
    pub replaced: bool,
    pub killed: bool,
    pub removed: bool,
    pub appended: bool,
}

impl NodeStatusFlags {
    pub fn is_pristine(&self) -> bool {
        !(self.replaced || self.killed || self.removed || self.appended)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Opcode {
    pub name: String,
    pub code: u32,
}

impl Opcode {
    pub fn new(name: impl Into<String>, code: u32) -> Self {
        Self {
            name: name.into(),
            code,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (0x{:04x})", self.name, self.code)
    }
}

/// One execution of a named phase; `exec_order` is its position in the run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PhaseRef {
    pub name: String,
    pub exec_order: u32,
}

impl PhaseRef {
    pub fn new(name: impl Into<String>, exec_order: u32) -> Self {
        Self {
            name: name.into(),
            exec_order,
        }
    }
}

impl fmt::Display for PhaseRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.name, self.exec_order)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IRNode {
    pub node_id: NodeId,
    /// Run-specific token; never used for correspondence.
    pub address: String,
    pub opcode: Opcode,
    pub ir_id: u32,
    pub gen_phase: Option<PhaseRef>,
    /// Position of the node in its generation phase's `generated` list in the
    /// run it came from. Preserved when the node is imported into a merged
    /// graph so its [`NodeKey`] stays stable.
    pub gen_ordinal: u32,
    pub opt_phases: Vec<PhaseRef>,
    pub neighbors: BTreeSet<NodeId>,
    pub status: NodeStatusFlags,
    pub merged_count: u32,
    pub is_dummy: bool,
}

impl IRNode {
    pub fn new(node_id: NodeId, opcode: Opcode, ir_id: u32) -> Self {
        Self {
            node_id,
            address: format!("0x{node_id:06x}"),
            opcode,
            ir_id,
            gen_phase: None,
            gen_ordinal: 0,
            opt_phases: Vec::new(),
            neighbors: BTreeSet::new(),
            status: NodeStatusFlags::default(),
            merged_count: 1,
            is_dummy: false,
        }
    }

    pub fn is_foreign(&self) -> bool {
        self.ir_id != 0
    }

    /// Degree ignoring self-loops.
    pub fn proper_degree(&self) -> usize {
        self.neighbors
            .iter()
            .filter(|&&n| n != self.node_id)
            .count()
    }
}

/// Canonical cross-run identity of a node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub phase: String,
    pub ordinal: u32,
    pub opcode: String,
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.phase, self.ordinal, self.opcode)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("node {0} is a dummy node and has no key")]
    Dummy(NodeId),
    #[error("node {0} has no generation phase")]
    NoGenPhase(NodeId),
}

/// Returns (generation phase name, ordinal within that phase execution, opcode).
pub fn node_key(n: &IRNode) -> Result<NodeKey, KeyError> {
    if n.is_dummy {
        return Err(KeyError::Dummy(n.node_id));
    }
    let phase = n
        .gen_phase
        .as_ref()
        .ok_or(KeyError::NoGenPhase(n.node_id))?;
    Ok(NodeKey {
        phase: phase.name.clone(),
        ordinal: n.gen_ordinal,
        opcode: n.opcode.name.clone(),
    })
}

/// Key plus the generation execution; unique among the nodes of one run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeLocator {
    pub gen_phase: PhaseRef,
    pub ordinal: u32,
    pub opcode: String,
}

pub fn node_locator(n: &IRNode) -> Option<NodeLocator> {
    if n.is_dummy {
        return None;
    }
    n.gen_phase.as_ref().map(|p| NodeLocator {
        gen_phase: p.clone(),
        ordinal: n.gen_ordinal,
        opcode: n.opcode.name.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseExecution {
    pub phase: PhaseRef,
    pub generated: Vec<NodeId>,
    pub optimized: Vec<NodeId>,
    pub hyperedge_id: String,
}

impl PhaseExecution {
    pub fn new(phase: PhaseRef) -> Self {
        let hyperedge_id = phase.exec_order.to_string();
        Self {
            phase,
            generated: Vec::new(),
            optimized: Vec::new(),
            hyperedge_id,
        }
    }

    pub fn members(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.generated.iter().chain(self.optimized.iter()).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.generated.contains(&id) || self.optimized.contains(&id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphLabel {
    Original,
    Variant,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IRGraph {
    pub ir_id: u32,
    pub label: GraphLabel,
    pub buggy: Option<bool>,
    pub nodes: BTreeMap<NodeId, IRNode>,
    pub phases: Vec<PhaseExecution>,
}

impl IRGraph {
    pub fn new(ir_id: u32, label: GraphLabel) -> Self {
        Self {
            ir_id,
            label,
            buggy: None,
            nodes: BTreeMap::new(),
            phases: Vec::new(),
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&IRNode> {
        self.nodes.get(&id)
    }

    pub fn next_node_id(&self) -> NodeId {
        self.nodes.keys().next_back().map_or(0, |&m| m + 1)
    }

    pub fn phase_index(&self, phase: &PhaseRef) -> Option<usize> {
        self.phases.iter().position(|p| &p.phase == phase)
    }

    /// Index of `phase`, inserting an empty execution in (exec_order, name)
    /// order when it does not exist yet.
    pub fn ensure_phase(&mut self, phase: &PhaseRef) -> usize {
        if let Some(i) = self.phase_index(phase) {
            return i;
        }
        let at = self
            .phases
            .iter()
            .position(|p| (p.phase.exec_order, &p.phase.name) > (phase.exec_order, &phase.name))
            .unwrap_or(self.phases.len());
        self.phases.insert(at, PhaseExecution::new(phase.clone()));
        at
    }

    pub fn add_edge(&mut self, a: NodeId, b: NodeId) {
        if let Some(n) = self.nodes.get_mut(&a) {
            n.neighbors.insert(b);
        }
        if let Some(n) = self.nodes.get_mut(&b) {
            n.neighbors.insert(a);
        }
    }

    pub fn edge_count(&self) -> usize {
        let mut twice = 0;
        let mut loops = 0;
        for n in self.nodes.values() {
            for &m in &n.neighbors {
                if m == n.node_id {
                    loops += 1;
                } else {
                    twice += 1;
                }
            }
        }
        twice / 2 + loops
    }

    /// Deletes a node together with its incident edges and phase memberships.
    pub fn remove_node(&mut self, id: NodeId) -> Option<IRNode> {
        let node = self.nodes.remove(&id)?;
        for nb in &node.neighbors {
            if let Some(n) = self.nodes.get_mut(nb) {
                n.neighbors.remove(&id);
            }
        }
        for p in &mut self.phases {
            p.generated.retain(|&x| x != id);
            p.optimized.retain(|&x| x != id);
        }
        Some(node)
    }

    /// Deletes a batch of nodes; cheaper than repeated [`remove_node`](Self::remove_node).
    pub fn remove_nodes(&mut self, ids: &BTreeSet<NodeId>) {
        if ids.is_empty() {
            return;
        }
        for id in ids {
            self.nodes.remove(id);
        }
        for n in self.nodes.values_mut() {
            n.neighbors.retain(|m| !ids.contains(m));
        }
        for p in &mut self.phases {
            p.generated.retain(|x| !ids.contains(x));
            p.optimized.retain(|x| !ids.contains(x));
        }
    }

    /// Rebuilds every node's `gen_phase` and `opt_phases` from the phase
    /// lists. `gen_ordinal` is reset to the list position only when
    /// `reset_ordinals` is set.
    pub fn derive_node_phases(&mut self, reset_ordinals: bool) {
        for n in self.nodes.values_mut() {
            n.gen_phase = None;
            n.opt_phases.clear();
        }
        for p in &self.phases {
            for (ordinal, id) in p.generated.iter().enumerate() {
                if let Some(n) = self.nodes.get_mut(id) {
                    if n.gen_phase.is_none() {
                        n.gen_phase = Some(p.phase.clone());
                        if reset_ordinals {
                            n.gen_ordinal = ordinal as u32;
                        }
                    }
                }
            }
            for id in &p.optimized {
                if let Some(n) = self.nodes.get_mut(id) {
                    n.opt_phases.push(p.phase.clone());
                }
            }
        }
    }

    pub fn key_multiset(&self, phase: &PhaseExecution) -> Vec<NodeKey> {
        let mut keys: Vec<NodeKey> = phase
            .members()
            .filter_map(|id| self.nodes.get(&id))
            .filter_map(|n| node_key(n).ok())
            .collect();
        keys.sort();
        keys
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperedge {
    pub id: String,
    pub name: String,
    pub members: BTreeSet<NodeId>,
    pub suspiciousness: Option<f64>,
    pub is_isolated: bool,
}

impl Hyperedge {
    pub fn new(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            members: BTreeSet::new(),
            suspiciousness: None,
            is_isolated: false,
        }
    }

    /// Execution orders encoded in the `@`-joined id.
    pub fn exec_orders(&self) -> Vec<u32> {
        self.id.split('@').filter_map(|s| s.parse().ok()).collect()
    }

    pub fn first_exec_order(&self) -> u32 {
        self.exec_orders().into_iter().min().unwrap_or(u32::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hypergraph {
    pub nodes: BTreeMap<NodeId, IRNode>,
    pub hyperedges: Vec<Hyperedge>,
}

impl Hypergraph {
    /// Hyperedge indices each node belongs to.
    pub fn memberships(&self) -> BTreeMap<NodeId, BTreeSet<usize>> {
        let mut out: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
        for (i, e) in self.hyperedges.iter().enumerate() {
            for &m in &e.members {
                out.entry(m).or_default().insert(i);
            }
        }
        out
    }

    pub fn real_node_count(&self) -> usize {
        self.nodes.values().filter(|n| !n.is_dummy).count()
    }

    pub fn total_merged_count(&self) -> u64 {
        self.nodes
            .values()
            .filter(|n| !n.is_dummy)
            .map(|n| n.merged_count as u64)
            .sum()
    }

    pub fn hyperedge(&self, name: &str) -> Option<&Hyperedge> {
        self.hyperedges.iter().find(|e| e.name == name)
    }

    /// Checks the structural invariants: members exist, every node belongs
    /// to some hyperedge.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for e in &self.hyperedges {
            for m in &e.members {
                if !self.nodes.contains_key(m) {
                    problems.push(format!("hyperedge {} lists missing node {m}", e.id));
                }
            }
        }
        let members = self.memberships();
        for id in self.nodes.keys() {
            if !members.contains_key(id) {
                problems.push(format!("node {id} belongs to no hyperedge"));
            }
        }
        problems
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationKind {
    AsymmetricEdge,
    DanglingNeighbor,
    MissingGenPhase,
    MultipleGenPhases,
    GenOptOverlap,
    UnknownPhaseMember,
    DuplicatePhase,
    DuplicateMember,
    PhaseAttributeMismatch,
    DuplicateGenOrdinal,
    BadMergedCount,
    DummyInvariant,
    ForeignIrId,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::AsymmetricEdge => "asymmetric-edge",
            ViolationKind::DanglingNeighbor => "dangling-neighbor",
            ViolationKind::MissingGenPhase => "missing-gen-phase",
            ViolationKind::MultipleGenPhases => "multiple-gen-phases",
            ViolationKind::GenOptOverlap => "gen-opt-overlap",
            ViolationKind::UnknownPhaseMember => "unknown-phase-member",
            ViolationKind::DuplicatePhase => "duplicate-phase",
            ViolationKind::DuplicateMember => "duplicate-member",
            ViolationKind::PhaseAttributeMismatch => "phase-attribute-mismatch",
            ViolationKind::DuplicateGenOrdinal => "duplicate-gen-ordinal",
            ViolationKind::BadMergedCount => "bad-merged-count",
            ViolationKind::DummyInvariant => "dummy-invariant",
            ViolationKind::ForeignIrId => "foreign-ir-id",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub subject: String,
    pub detail: String,
}

impl Violation {
    pub fn new(kind: ViolationKind, subject: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            kind,
            subject: subject.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.kind, self.subject, self.detail)
    }
}

/// Checks every IRGraph invariant. An empty result means the graph is valid.
pub fn validate_graph(g: &IRGraph) -> Vec<Violation> {
    use ViolationKind::*;
    let mut out = Vec::new();

    for n in g.nodes.values() {
        let subject = format!("node {}", n.node_id);
        for &m in &n.neighbors {
            match g.nodes.get(&m) {
                None => out.push(Violation::new(
                    DanglingNeighbor,
                    &subject,
                    format!("neighbor {m} does not exist"),
                )),
                Some(other) if !other.neighbors.contains(&n.node_id) => out.push(Violation::new(
                    AsymmetricEdge,
                    &subject,
                    format!("lists neighbor {m} but node {m} omits {}", n.node_id),
                )),
                _ => {}
            }
        }
        if n.merged_count == 0 {
            out.push(Violation::new(
                BadMergedCount,
                &subject,
                "merged_count must be >= 1",
            ));
        }
        if n.is_dummy && (!n.neighbors.is_empty() || n.merged_count != 1) {
            out.push(Violation::new(
                DummyInvariant,
                &subject,
                "dummy nodes have no neighbors and merged_count 1",
            ));
        }
        if g.ir_id != 0 && n.ir_id != g.ir_id {
            out.push(Violation::new(
                ForeignIrId,
                &subject,
                format!("ir_id {} inside graph {}", n.ir_id, g.ir_id),
            ));
        }
        if let Some(gp) = &n.gen_phase {
            if n.opt_phases.contains(gp) {
                out.push(Violation::new(
                    GenOptOverlap,
                    &subject,
                    format!("optimized in its own generation phase {gp}"),
                ));
            }
        }
    }

    let mut seen_phases = BTreeSet::new();
    let mut gen_count: HashMap<NodeId, Vec<&PhaseRef>> = HashMap::new();
    let mut opt_of: HashMap<NodeId, Vec<&PhaseRef>> = HashMap::new();
    for p in &g.phases {
        let subject = format!("phase {}", p.phase);
        if !seen_phases.insert(&p.phase) {
            out.push(Violation::new(
                DuplicatePhase,
                &subject,
                "phase execution listed twice",
            ));
        }
        let mut members = BTreeSet::new();
        for id in p.members() {
            if !members.insert(id) {
                let detail = if p.generated.contains(&id) && p.optimized.contains(&id) {
                    (
                        GenOptOverlap,
                        format!("node {id} both generated and optimized"),
                    )
                } else {
                    (DuplicateMember, format!("node {id} listed twice"))
                };
                out.push(Violation::new(detail.0, &subject, detail.1));
            }
            if !g.nodes.contains_key(&id) {
                out.push(Violation::new(
                    UnknownPhaseMember,
                    &subject,
                    format!("node {id} does not exist"),
                ));
            }
        }
        let mut ordinals = BTreeSet::new();
        for id in &p.generated {
            gen_count.entry(*id).or_default().push(&p.phase);
            if let Some(n) = g.nodes.get(id) {
                if n.gen_phase.as_ref() != Some(&p.phase) {
                    out.push(Violation::new(
                        PhaseAttributeMismatch,
                        &subject,
                        format!("generates node {id} whose gen_phase disagrees"),
                    ));
                }
                if !ordinals.insert((n.ir_id, n.gen_ordinal)) {
                    out.push(Violation::new(
                        DuplicateGenOrdinal,
                        &subject,
                        format!("ordinal {} used twice (node {id})", n.gen_ordinal),
                    ));
                }
            }
        }
        for id in &p.optimized {
            opt_of.entry(*id).or_default().push(&p.phase);
        }
    }

    for n in g.nodes.values() {
        let subject = format!("node {}", n.node_id);
        let gens = gen_count.get(&n.node_id).map_or(0, Vec::len);
        if gens == 0 {
            out.push(Violation::new(
                MissingGenPhase,
                &subject,
                "not generated by any phase",
            ));
        } else if gens > 1 {
            out.push(Violation::new(
                MultipleGenPhases,
                &subject,
                format!("generated by {gens} phases"),
            ));
        }
        if let Some(gp) = &n.gen_phase {
            if !seen_phases.contains(gp) {
                out.push(Violation::new(
                    PhaseAttributeMismatch,
                    &subject,
                    format!("gen_phase {gp} is not a phase of the graph"),
                ));
            }
        }
        let listed: Vec<&PhaseRef> = opt_of.get(&n.node_id).cloned().unwrap_or_default();
        let attr: Vec<&PhaseRef> = n.opt_phases.iter().collect();
        let mut a = listed.clone();
        let mut b = attr.clone();
        a.sort();
        b.sort();
        if a != b {
            out.push(Violation::new(
                PhaseAttributeMismatch,
                &subject,
                "opt_phases disagree with the phases' optimized lists",
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node_graph() -> IRGraph {
        let mut g = IRGraph::new(0, GraphLabel::Original);
        let mut p = PhaseExecution::new(PhaseRef::new("GraphBuilder", 0));
        for (id, op) in [(0, "Start"), (1, "Return")] {
            g.nodes.insert(id, IRNode::new(id, Opcode::new(op, id), 0));
            p.generated.push(id);
        }
        g.phases.push(p);
        g.add_edge(0, 1);
        g.derive_node_phases(true);
        g
    }

    #[test]
    fn empty_graph_is_valid() {
        assert!(validate_graph(&IRGraph::new(0, GraphLabel::Original)).is_empty());
    }

    #[test]
    fn asymmetric_edge_is_reported_once() {
        let mut g = IRGraph::new(0, GraphLabel::Original);
        let mut p = PhaseExecution::new(PhaseRef::new("GraphBuilder", 0));
        for id in [3, 5] {
            g.nodes
                .insert(id, IRNode::new(id, Opcode::new("Add", 1), 0));
            p.generated.push(id);
        }
        g.phases.push(p);
        g.derive_node_phases(true);
        g.nodes.get_mut(&3).unwrap().neighbors.insert(5);
        let v = validate_graph(&g);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].kind, ViolationKind::AsymmetricEdge);
        assert_eq!(v[0].subject, "node 3");
    }

    #[test]
    fn node_key_uses_ordinal_within_execution() {
        let g = two_node_graph();
        let k = node_key(&g.nodes[&0]).unwrap();
        assert_eq!(
            k,
            NodeKey {
                phase: "GraphBuilder".into(),
                ordinal: 0,
                opcode: "Start".into()
            }
        );
        let mut g = g;
        let mut p = PhaseExecution::new(PhaseRef::new("TypedLowering", 1));
        for id in 10..13 {
            g.nodes
                .insert(id, IRNode::new(id, Opcode::new("Sub", 7), 0));
            g.add_edge(id, 0);
            p.generated.push(id);
        }
        g.phases.push(p);
        g.derive_node_phases(true);
        let k = node_key(&g.nodes[&12]).unwrap();
        assert_eq!(
            (k.phase.as_str(), k.ordinal, k.opcode.as_str()),
            ("TypedLowering", 2, "Sub")
        );
        assert!(validate_graph(&g).is_empty());
    }

    #[test]
    fn dummy_has_no_key() {
        let mut n = IRNode::new(9, Opcode::new("Dummy", 0), 0);
        n.is_dummy = true;
        n.gen_phase = Some(PhaseRef::new("Typer", 3));
        assert_eq!(node_key(&n), Err(KeyError::Dummy(9)));
    }

    #[test]
    fn attribute_list_disagreement_is_caught() {
        let mut g = two_node_graph();
        g.nodes
            .get_mut(&1)
            .unwrap()
            .opt_phases
            .push(PhaseRef::new("Typer", 4));
        let kinds: Vec<_> = validate_graph(&g).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::PhaseAttributeMismatch));
    }

    #[test]
    fn generated_and_optimized_in_one_phase_is_rejected() {
        let mut g = two_node_graph();
        g.phases[0].optimized.push(1);
        g.derive_node_phases(true);
        let kinds: Vec<_> = validate_graph(&g).into_iter().map(|v| v.kind).collect();
        assert!(kinds.contains(&ViolationKind::GenOptOverlap), "{kinds:?}");
    }

    #[test]
    fn ensure_phase_keeps_execution_order() {
        let mut g = two_node_graph();
        g.ensure_phase(&PhaseRef::new("EarlyOptimization", 9));
        g.ensure_phase(&PhaseRef::new("Typer", 4));
        let order: Vec<u32> = g.phases.iter().map(|p| p.phase.exec_order).collect();
        assert_eq!(order, vec![0, 4, 9]);
    }

    #[test]
    fn hyperedge_id_round_trips_exec_orders() {
        let e = Hyperedge::new("3@17@20", "Typer");
        assert_eq!(e.exec_orders(), vec![3, 17, 20]);
        assert_eq!(e.first_exec_order(), 3);
    }
}
