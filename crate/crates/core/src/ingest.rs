//! IR dump files and corpus manifests.
//!
//! One JSON document per graph. Node phase attributes are not stored on the
//! nodes; they are derived from the phases' `generated`/`optimized` lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{
    validate_graph, GraphLabel, IRGraph, IRNode, NodeId, NodeStatusFlags, Opcode, PhaseExecution,
    PhaseRef, Violation, ViolationKind,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("parse-error: {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("parse-error: {path}:{line}:{column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invariant-error: {path}: {} violation(s), first: {}", violations.len(), violations[0])]
    Invariant {
        path: PathBuf,
        violations: Vec<Violation>,
    },
    #[error("ir-id-conflict: {path}: declares ir_id {found} ({found_label:?}) but its manifest slot is {expected}")]
    IrIdConflict {
        path: PathBuf,
        expected: u32,
        found: u32,
        found_label: GraphLabel,
    },
    #[error("manifest-error: {path}: {message}")]
    Manifest { path: PathBuf, message: String },
}

impl IngestError {
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::Parse { .. } | IngestError::Syntax { .. } => "parse-error",
            IngestError::Invariant { .. } => "invariant-error",
            IngestError::IrIdConflict { .. } => "ir-id-conflict",
            IngestError::Manifest { .. } => "manifest-error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseDump {
    pub name: String,
    pub exec_order: u32,
    pub generated: Vec<NodeId>,
    pub optimized: Vec<NodeId>,
}

fn is_one(v: &u32) -> bool {
    *v == 1
}

fn is_false(v: &bool) -> bool {
    !*v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub address: String,
    pub opcode: String,
    pub opcode_num: u32,
    pub neighbors: Vec<NodeId>,
    pub status: NodeStatusFlags,
    /// Only present when it differs from the node's position in its
    /// generation phase (nodes imported from another run).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gen_ordinal: Option<u32>,
    /// Only present for nodes of a graph imported from another run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ir_id: Option<u32>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub merged_count: u32,
    #[serde(default, skip_serializing_if = "is_false")]
    pub is_dummy: bool,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub ir_id: u32,
    pub label: GraphLabel,
    pub buggy: Option<bool>,
    pub phases: Vec<PhaseDump>,
    pub nodes: Vec<NodeDump>,
}

pub fn graph_to_dump(g: &IRGraph) -> GraphDump {
    let mut position: BTreeMap<NodeId, u32> = BTreeMap::new();
    let phases = g
        .phases
        .iter()
        .map(|p| {
            for (i, id) in p.generated.iter().enumerate() {
                position.entry(*id).or_insert(i as u32);
            }
            PhaseDump {
                name: p.phase.name.clone(),
                exec_order: p.phase.exec_order,
                generated: p.generated.clone(),
                optimized: p.optimized.clone(),
            }
        })
        .collect();
    let nodes = g
        .nodes
        .values()
        .map(|n| NodeDump {
            id: n.node_id,
            address: n.address.clone(),
            opcode: n.opcode.name.clone(),
            opcode_num: n.opcode.code,
            neighbors: n.neighbors.iter().copied().collect(),
            status: n.status,
            gen_ordinal: match position.get(&n.node_id) {
                Some(&p) if p == n.gen_ordinal => None,
                _ => Some(n.gen_ordinal),
            },
            ir_id: (n.ir_id != g.ir_id).then_some(n.ir_id),
            merged_count: n.merged_count,
            is_dummy: n.is_dummy,
        })
        .collect();
    GraphDump {
        ir_id: g.ir_id,
        label: g.label,
        buggy: g.buggy,
        phases,
        nodes,
    }
}

/// Builds a graph from a dump. Problems the in-memory model cannot represent
/// (duplicate ids, repeated neighbors) are reported alongside the regular
/// [`validate_graph`] violations.
pub fn graph_from_dump(d: &GraphDump) -> Result<IRGraph, Vec<Violation>> {
    let mut problems = Vec::new();
    let mut g = IRGraph::new(d.ir_id, d.label);
    g.buggy = d.buggy;
    for nd in &d.nodes {
        let subject = format!("node {}", nd.id);
        if g.nodes.contains_key(&nd.id) {
            problems.push(Violation::new(
                ViolationKind::DuplicateMember,
                subject,
                "duplicate node id",
            ));
            continue;
        }
        let neighbors: BTreeSet<NodeId> = nd.neighbors.iter().copied().collect();
        if neighbors.len() != nd.neighbors.len() {
            problems.push(Violation::new(
                ViolationKind::DuplicateMember,
                &subject,
                "neighbor listed twice",
            ));
        }
        let mut node = IRNode::new(
            nd.id,
            Opcode::new(nd.opcode.clone(), nd.opcode_num),
            nd.ir_id.unwrap_or(d.ir_id),
        );
        node.address = nd.address.clone();
        node.neighbors = neighbors;
        node.status = nd.status;
        node.merged_count = nd.merged_count;
        node.is_dummy = nd.is_dummy;
        g.nodes.insert(nd.id, node);
    }
    g.phases = d
        .phases
        .iter()
        .map(|p| {
            let mut pe = PhaseExecution::new(PhaseRef::new(p.name.clone(), p.exec_order));
            pe.generated = p.generated.clone();
            pe.optimized = p.optimized.clone();
            pe
        })
        .collect();
    g.derive_node_phases(true);
    for nd in &d.nodes {
        if let (Some(ord), Some(n)) = (nd.gen_ordinal, g.nodes.get_mut(&nd.id)) {
            n.gen_ordinal = ord;
        }
    }
    problems.extend(validate_graph(&g));
    if problems.is_empty() {
        Ok(g)
    } else {
        Err(problems)
    }
}

pub fn to_json(g: &IRGraph) -> String {
    let mut s = serde_json::to_string_pretty(&graph_to_dump(g)).expect("dump serializes");
    s.push('\n');
    s
}

fn syntax_error(path: &Path, e: serde_json::Error) -> IngestError {
    let full = e.to_string();
    let message = full
        .rsplit_once(" at line ")
        .map_or(full.as_str(), |(m, _)| m)
        .to_string();
    IngestError::Syntax {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message,
    }
}

fn parse_text(path: &Path, text: &str) -> Result<GraphDump, IngestError> {
    serde_json::from_str(text).map_err(|e| syntax_error(path, e))
}

/// Parses and validates one dump document.
pub fn parse_graph(path: &Path, text: &str) -> Result<IRGraph, IngestError> {
    let dump = parse_text(path, text)?;
    graph_from_dump(&dump).map_err(|violations| IngestError::Invariant {
        path: path.to_path_buf(),
        violations,
    })
}

pub fn read_graph(path: &Path) -> Result<IRGraph, IngestError> {
    let text = fs::read_to_string(path).map_err(|e| IngestError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_graph(path, &text)
}

pub fn write_graph(path: &Path, g: &IRGraph) -> std::io::Result<()> {
    fs::write(path, to_json(g))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub original: PathBuf,
    pub variants: Vec<PathBuf>,
}

impl CorpusManifest {
    pub fn n_variants(&self) -> usize {
        self.variants.len()
    }

    /// Reads a manifest file; relative paths are resolved against its directory.
    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| IngestError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut m: CorpusManifest =
            serde_json::from_str(&text).map_err(|e| syntax_error(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        m.original = base.join(&m.original);
        m.variants = m.variants.iter().map(|v| base.join(v)).collect();
        Ok(m)
    }

    fn check(&self) -> Result<(), IngestError> {
        let mut seen = BTreeSet::new();
        for p in std::iter::once(&self.original).chain(&self.variants) {
            if !seen.insert(p) {
                return Err(IngestError::Manifest {
                    path: p.clone(),
                    message: "path listed more than once".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub original: IRGraph,
    pub variants: Vec<IRGraph>,
}

/// Loads the original (ir_id 0) and the variants (ir_id 1..N, manifest order).
pub fn load_corpus(manifest: &CorpusManifest) -> Result<Corpus, IngestError> {
    manifest.check()?;
    let slots: Vec<(u32, GraphLabel, &PathBuf)> =
        std::iter::once((0, GraphLabel::Original, &manifest.original))
            .chain(
                manifest
                    .variants
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i as u32 + 1, GraphLabel::Variant, p)),
            )
            .collect();
    let mut graphs = slots
        .par_iter()
        .map(|(ir_id, label, path)| {
            let g = read_graph(path)?;
            if g.ir_id != *ir_id || g.label != *label {
                return Err(IngestError::IrIdConflict {
                    path: path.to_path_buf(),
                    expected: *ir_id,
                    found: g.ir_id,
                    found_label: g.label,
                });
            }
            Ok(g)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let variants = graphs.split_off(1);
    let original = graphs.pop().expect("original slot");
    log::info!(
        "loaded corpus: original with {} nodes, {} variants",
        original.nodes.len(),
        variants.len()
    );
    Ok(Corpus { original, variants })
}
