//! End-to-end orchestration: select, merge, simplify, lift, reduce, score,
//! prepare and export.

use thiserror::Error;

use crate::diffmerge::{merge_into_original, select_all, MergeError, SubIR};
use crate::export::{build_export, MetroMapExport, ReductionStats};
use crate::hypergraph::{construct_hypergraph, reduce_hyperedges, simplify_hyperedges};
use crate::ir::{validate_graph, Hypergraph, IRGraph, Violation};
use crate::localize::{
    prepare_for_metromap, score_hyperedges, LocalizeError, MetroPrep, SuspicionReport,
    DEFAULT_EXCLUDED_PHASES, DEFAULT_TOP_K,
};
use crate::simplify::{simplify_graph, MergeMode};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub exclude: Vec<String>,
    pub merge_mode: MergeMode,
    pub top_k: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            exclude: DEFAULT_EXCLUDED_PHASES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            merge_mode: MergeMode::Fixpoint,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Localize(#[from] LocalizeError),
    #[error("invariant-error: {stage} produced an invalid graph: {}", violations[0])]
    Invariant {
        stage: &'static str,
        violations: Vec<Violation>,
    },
}

/// Every intermediate product, for inspection and testing.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub subirs: Vec<SubIR>,
    pub merged: IRGraph,
    pub simplified: IRGraph,
    pub hypergraph: Hypergraph,
    pub reduced: Hypergraph,
    pub simplified_hypergraph: Hypergraph,
    pub report: SuspicionReport,
    pub prep: MetroPrep,
    pub stats: ReductionStats,
    pub export: MetroMapExport,
}

fn checked(stage: &'static str, g: IRGraph) -> Result<IRGraph, PipelineError> {
    let violations = validate_graph(&g);
    if violations.is_empty() {
        Ok(g)
    } else {
        Err(PipelineError::Invariant { stage, violations })
    }
}

pub fn run_pipeline(
    original: &IRGraph,
    variants: &[IRGraph],
    opts: &PipelineOptions,
) -> Result<PipelineOutput, PipelineError> {
    let subirs = select_all(original, variants);
    log::info!(
        "{} of {} variants differ from the original ({} candidate phases)",
        subirs.iter().filter(|s| !s.is_empty()).count(),
        variants.len(),
        subirs
            .iter()
            .map(|s| s.candidate_phases.len())
            .sum::<usize>()
    );
    let merged = checked("merge", merge_into_original(original, &subirs)?)?;
    let simplified = checked("simplify", simplify_graph(&merged, opts.merge_mode))?;
    let hypergraph = construct_hypergraph(&simplified);
    let reduced = reduce_hyperedges(&hypergraph);
    let mut simplified_hypergraph = simplify_hyperedges(&reduced);
    let report = score_hyperedges(&simplified_hypergraph, &opts.exclude)?;
    report.annotate(&mut simplified_hypergraph);
    let prep = prepare_for_metromap(&simplified_hypergraph);
    for w in &prep.warnings {
        log::warn!("{w}");
    }
    let stats = ReductionStats::new(
        merged.phases.len(),
        simplified_hypergraph.hyperedges.len(),
        merged.nodes.len(),
        simplified_hypergraph.real_node_count(),
    );
    let export = build_export(&prep, &report, &stats, opts.top_k);
    Ok(PipelineOutput {
        subirs,
        merged,
        simplified,
        hypergraph,
        reduced,
        simplified_hypergraph,
        report,
        prep,
        stats,
        export,
    })
}
