//! Merge the IR graphs of a JIT-compiled program and its mutated variants,
//! reduce them to a phase hypergraph, score phases for bug suspiciousness and
//! export a metro-map dataset.
//!
//! Stages, in pipeline order:
//!
//! - [`ingest`]: dump files and corpus manifests
//! - [`diffmerge`]: candidate phase selection and merging into the original
//! - [`simplify`]: dead-node removal and equivalent-node merging
//! - [`hypergraph`]: hypergraph construction, same-name reduction, node merging
//! - [`localize`]: suspiciousness ranking and metro-map constraints
//! - [`export`]: reduction stats and the viewer dataset
//!
//! [`synthgen`] produces seeded corpora with injected bugs, and [`pipeline`]
//! chains the stages.

pub mod diffmerge;
pub mod export;
pub mod hypergraph;
pub mod ingest;
pub mod ir;
pub mod localize;
pub mod pipeline;
pub mod simplify;
pub mod synthgen;

pub use ir::{
    node_key, validate_graph, GraphLabel, Hyperedge, Hypergraph, IRGraph, IRNode, NodeId, NodeKey,
    NodeStatusFlags, Opcode, PhaseExecution, PhaseRef, Violation, ViolationKind,
};
pub use pipeline::{run_pipeline, PipelineError, PipelineOptions, PipelineOutput};
