//! Reduction statistics and the metro-map dataset consumed by the viewer.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ir::{Hyperedge, IRNode, NodeId};
use crate::localize::{MetroPrep, MetroWarning, SuspicionReport};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionStats {
    pub original_set_count: usize,
    pub reduced_set_count: usize,
    pub original_element_count: usize,
    pub reduced_element_count: usize,
    pub set_reduction_pct: f64,
    pub element_reduction_pct: f64,
}

/// `(1 - reduced/original) * 100`, rounded to two decimals.
pub fn reduction_pct(original: usize, reduced: usize) -> f64 {
    if original == 0 {
        return 0.0;
    }
    let pct = (1.0 - reduced as f64 / original as f64) * 100.0;
    (pct * 100.0).round() / 100.0
}

impl ReductionStats {
    pub fn new(
        original_sets: usize,
        reduced_sets: usize,
        original_elements: usize,
        reduced_elements: usize,
    ) -> Self {
        Self {
            original_set_count: original_sets,
            reduced_set_count: reduced_sets,
            original_element_count: original_elements,
            reduced_element_count: reduced_elements,
            set_reduction_pct: reduction_pct(original_sets, reduced_sets),
            element_reduction_pct: reduction_pct(original_elements, reduced_elements),
        }
    }

    /// True when the stored percentages match the raw counts.
    pub fn is_consistent(&self) -> bool {
        self.reduced_set_count <= self.original_set_count
            && self.reduced_element_count <= self.original_element_count
            && self.set_reduction_pct
                == reduction_pct(self.original_set_count, self.reduced_set_count)
            && self.element_reduction_pct
                == reduction_pct(self.original_element_count, self.reduced_element_count)
    }
}

impl fmt::Display for ReductionStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>11}",
            "", "original", "reduced", "reduction"
        )?;
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10.2}%",
            "sets", self.original_set_count, self.reduced_set_count, self.set_reduction_pct
        )?;
        writeln!(
            f,
            "{:<10} {:>10} {:>10} {:>10.2}%",
            "elements",
            self.original_element_count,
            self.reduced_element_count,
            self.element_reduction_pct
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub node_id: NodeId,
    pub label: String,
    /// Generation phase name.
    pub phase: String,
    /// Generation phase execution order.
    pub phase_id: u32,
    pub opcode: String,
    pub opcode_num: u32,
    pub address: String,
    /// Run the node came from; 0 is the original program.
    pub graph_id: u32,
    pub optimized_in: Vec<String>,
    pub merged_count: u32,
    pub is_dummy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub name: String,
    pub id: String,
    pub members: Vec<NodeId>,
    pub member_count: usize,
    pub suspiciousness: f64,
    pub is_isolated: bool,
    pub rank: Option<usize>,
    pub highlight: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetroMapExport {
    pub schema_version: String,
    pub top_k: usize,
    pub stations: Vec<Station>,
    pub lines: Vec<Line>,
    pub report: SuspicionReport,
    pub stats: ReductionStats,
    pub warnings: Vec<MetroWarning>,
}

impl MetroMapExport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("export serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn line(&self, name: &str) -> Option<&Line> {
        self.lines.iter().find(|l| l.name == name)
    }
}

/// Orders nodes along the generation timeline; dummies go last.
fn generation_order(n: &IRNode) -> (bool, u32, u32, u32, NodeId) {
    let exec = n.gen_phase.as_ref().map_or(u32::MAX, |p| p.exec_order);
    (n.is_dummy, exec, n.gen_ordinal, n.ir_id, n.node_id)
}

fn station(n: &IRNode) -> Station {
    let (phase, phase_id) = n
        .gen_phase
        .as_ref()
        .map_or((String::new(), 0), |p| (p.name.clone(), p.exec_order));
    let mut optimized_in: Vec<String> = Vec::new();
    for p in &n.opt_phases {
        if !optimized_in.contains(&p.name) {
            optimized_in.push(p.name.clone());
        }
    }
    Station {
        node_id: n.node_id,
        label: n.node_id.to_string(),
        phase,
        phase_id,
        opcode: n.opcode.name.clone(),
        opcode_num: n.opcode.code,
        address: n.address.clone(),
        graph_id: n.ir_id,
        optimized_in,
        merged_count: n.merged_count,
        is_dummy: n.is_dummy,
    }
}

pub fn build_export(
    prep: &MetroPrep,
    report: &SuspicionReport,
    stats: &ReductionStats,
    top_k: usize,
) -> MetroMapExport {
    let mut all: BTreeMap<NodeId, &IRNode> = prep.main.nodes.iter().map(|(k, v)| (*k, v)).collect();
    all.extend(prep.isolated_nodes.iter().map(|(k, v)| (*k, v)));

    let mut nodes: Vec<&IRNode> = all.values().copied().collect();
    nodes.sort_by_key(|n| generation_order(n));
    let stations = nodes.iter().map(|n| station(n)).collect();

    let mut edges: Vec<&Hyperedge> = prep
        .main
        .hyperedges
        .iter()
        .chain(prep.isolated.iter())
        .collect();
    edges.sort_by(|a, b| {
        a.first_exec_order()
            .cmp(&b.first_exec_order())
            .then_with(|| a.name.cmp(&b.name))
    });
    let lines = edges
        .into_iter()
        .map(|e| {
            let mut members: Vec<&IRNode> = e.members.iter().map(|m| all[m]).collect();
            members.sort_by_key(|n| generation_order(n));
            let row = report.row(&e.name);
            let rank = row.and_then(|r| r.rank);
            Line {
                name: e.name.clone(),
                id: e.id.clone(),
                member_count: members.iter().filter(|n| !n.is_dummy).count(),
                members: members.iter().map(|n| n.node_id).collect(),
                suspiciousness: row.map_or(0.0, |r| r.score),
                is_isolated: e.is_isolated,
                rank,
                highlight: rank.is_some_and(|k| k <= top_k),
            }
        })
        .collect();

    MetroMapExport {
        schema_version: SCHEMA_VERSION.to_string(),
        top_k,
        stations,
        lines,
        report: report.clone(),
        stats: stats.clone(),
        warnings: prep.warnings.clone(),
    }
}

/// Text report: stats table, warnings and the ranked line table.
pub fn render_report(export: &MetroMapExport) -> String {
    let mut out = String::new();
    out.push_str("Reduction\n");
    out.push_str(&export.stats.to_string());
    out.push('\n');
    if !export.warnings.is_empty() {
        out.push_str("Warnings\n");
        for w in &export.warnings {
            out.push_str(&format!("  {w}\n"));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "Suspicious lines (top {} flagged; excluded: {})\n",
        export.top_k,
        if export.report.excluded.is_empty() {
            "none".to_string()
        } else {
            export.report.excluded.join(", ")
        }
    ));
    out.push_str(&export.report.render_table(export.top_k));
    out
}
