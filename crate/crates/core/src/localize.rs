//! Bug-suspiciousness scoring of phase lines and metro-map preparation.
//!
//! A line whose members mostly come from variant runs (foreign nodes) marks a
//! phase where the original program's compilation diverged from the others.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ir::{Hyperedge, Hypergraph, IRNode, NodeId, Opcode, PhaseRef};

pub const DEFAULT_EXCLUDED_PHASES: &[&str] = &["GraphBuilder"];
pub const DEFAULT_TOP_K: usize = 3;
pub const NODE_BUDGET: usize = 500;
pub const HYPEREDGE_BUDGET: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LocalizeError {
    #[error("empty-hypergraph: no non-dummy nodes to score")]
    EmptyHypergraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspicionRow {
    pub name: String,
    pub id: String,
    pub total_members: u64,
    pub foreign_members: u64,
    pub score: f64,
    pub generation_anomaly: bool,
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuspicionReport {
    pub rows: Vec<SuspicionRow>,
    pub ranking: Vec<String>,
    pub excluded: Vec<String>,
}

impl SuspicionReport {
    pub fn row(&self, name: &str) -> Option<&SuspicionRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn rank_of(&self, name: &str) -> Option<usize> {
        self.row(name).and_then(|r| r.rank)
    }

    pub fn top(&self) -> Option<&str> {
        self.ranking.first().map(String::as_str)
    }

    /// Writes the scores back onto the hypergraph's hyperedges.
    pub fn annotate(&self, h: &mut Hypergraph) {
        for e in &mut h.hyperedges {
            e.suspiciousness = self.row(&e.name).map(|r| r.score);
        }
    }

    /// Aligned text table; the top `top_k` ranked lines are flagged.
    pub fn render_table(&self, top_k: usize) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.name.len())
            .max()
            .unwrap_or(4)
            .max(4)
            + 4;
        let mut out = format!(
            "{:<4}  {:<width$}  {:>10}  {:>8}  {:>6}  {}\n",
            "rank", "line", "foreign", "score", "gen", "id"
        );
        let mut rows: Vec<&SuspicionRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.rank.unwrap_or(usize::MAX));
        for r in rows {
            let flagged = r.rank.is_some_and(|k| k <= top_k);
            let name = if flagged {
                format!("**{}**", r.name)
            } else {
                r.name.clone()
            };
            let rank = match r.rank {
                Some(k) => k.to_string(),
                None => "-".into(),
            };
            out.push_str(&format!(
                "{:<4}  {:<width$}  {:>10}  {:>8.4}  {:>6}  {}{}\n",
                rank,
                name,
                format!("{}/{}", r.foreign_members, r.total_members),
                r.score,
                if r.generation_anomaly { "yes" } else { "no" },
                r.id,
                if flagged { "  <== suspicious" } else { "" },
            ));
        }
        out
    }
}

fn compare_rows(a: &SuspicionRow, b: &SuspicionRow) -> Ordering {
    // exact rational comparison of foreign/total, descending
    let lhs = a.foreign_members as u128 * b.total_members.max(1) as u128;
    let rhs = b.foreign_members as u128 * a.total_members.max(1) as u128;
    rhs.cmp(&lhs)
        .then_with(|| b.foreign_members.cmp(&a.foreign_members))
        .then_with(|| a.name.cmp(&b.name))
}

/// Scores every hyperedge by the share of foreign members, counting merged
/// multiplicities, and ranks all hyperedges not named in `exclude`.
pub fn score_hyperedges(
    h: &Hypergraph,
    exclude: &[String],
) -> Result<SuspicionReport, LocalizeError> {
    if h.nodes.values().all(|n| n.is_dummy) {
        return Err(LocalizeError::EmptyHypergraph);
    }
    let mut rows: Vec<SuspicionRow> = h
        .hyperedges
        .iter()
        .map(|e| {
            let members: Vec<&IRNode> = e
                .members
                .iter()
                .filter_map(|id| h.nodes.get(id))
                .filter(|n| !n.is_dummy)
                .collect();
            let total: u64 = members.iter().map(|n| n.merged_count as u64).sum();
            let foreign: u64 = members
                .iter()
                .filter(|n| n.is_foreign())
                .map(|n| n.merged_count as u64)
                .sum();
            let generated_here =
                |n: &&&IRNode| n.gen_phase.as_ref().is_some_and(|p| p.name == e.name);
            let native_generated = members
                .iter()
                .filter(generated_here)
                .any(|n| !n.is_foreign());
            let foreign_generated = members
                .iter()
                .filter(generated_here)
                .any(|n| n.is_foreign());
            SuspicionRow {
                name: e.name.clone(),
                id: e.id.clone(),
                total_members: total,
                foreign_members: foreign,
                score: if total == 0 {
                    0.0
                } else {
                    foreign as f64 / total as f64
                },
                generation_anomaly: foreign_generated && !native_generated,
                rank: None,
            }
        })
        .collect();

    let mut ranked: Vec<usize> = (0..rows.len())
        .filter(|&i| !exclude.contains(&rows[i].name))
        .collect();
    ranked.sort_by(|&a, &b| compare_rows(&rows[a], &rows[b]));
    let mut ranking = Vec::with_capacity(ranked.len());
    for (pos, &i) in ranked.iter().enumerate() {
        rows[i].rank = Some(pos + 1);
        ranking.push(rows[i].name.clone());
    }
    let excluded = rows
        .iter()
        .filter(|r| exclude.contains(&r.name))
        .map(|r| r.name.clone())
        .collect();
    Ok(SuspicionReport {
        rows,
        ranking,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MetroWarning {
    NodeBudgetExceeded { count: usize, limit: usize },
    HyperedgeBudgetExceeded { count: usize, limit: usize },
    EmptyHyperedgeDropped { name: String, id: String },
}

impl fmt::Display for MetroWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetroWarning::NodeBudgetExceeded { count, limit } => {
                write!(f, "node-budget-exceeded: {count} nodes (limit {limit})")
            }
            MetroWarning::HyperedgeBudgetExceeded { count, limit } => {
                write!(
                    f,
                    "hyperedge-budget-exceeded: {count} hyperedges (limit {limit})"
                )
            }
            MetroWarning::EmptyHyperedgeDropped { name, id } => {
                write!(f, "empty-hyperedge-dropped: {name} ({id})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetroPrep {
    pub main: Hypergraph,
    pub isolated: Vec<Hyperedge>,
    /// Nodes that only appear on isolated lines.
    pub isolated_nodes: BTreeMap<NodeId, IRNode>,
    pub warnings: Vec<MetroWarning>,
}

impl MetroPrep {
    pub fn dummy_count(&self) -> usize {
        self.main.nodes.values().filter(|n| n.is_dummy).count()
            + self.isolated_nodes.values().filter(|n| n.is_dummy).count()
    }
}

fn dummy_for(id: NodeId, e: &Hyperedge) -> IRNode {
    let mut n = IRNode::new(id, Opcode::new("Dummy", 0), 0);
    n.address = "0x0".into();
    n.is_dummy = true;
    n.gen_phase = Some(PhaseRef::new(e.name.clone(), e.first_exec_order()));
    n
}

/// Shapes a reduced hypergraph for metro-map drawing: singleton lines get a
/// dummy station, lines sharing no station with any other are split off, and
/// size budgets are checked on what remains.
pub fn prepare_for_metromap(h: &Hypergraph) -> MetroPrep {
    let mut warnings = Vec::new();
    let mut h = h.clone();
    h.hyperedges.retain(|e| {
        let real = e.members.iter().any(|m| !h.nodes[m].is_dummy);
        if !real {
            warnings.push(MetroWarning::EmptyHyperedgeDropped {
                name: e.name.clone(),
                id: e.id.clone(),
            });
        }
        real
    });

    let mut next_id = h.nodes.keys().next_back().map_or(0, |m| m + 1);
    for e in &mut h.hyperedges {
        if e.members.len() == 1 {
            let dummy = dummy_for(next_id, e);
            e.members.insert(next_id);
            h.nodes.insert(next_id, dummy);
            next_id += 1;
        }
    }

    let memberships = h.memberships();
    let shared = |i: usize| {
        h.hyperedges[i]
            .members
            .iter()
            .any(|m| !h.nodes[m].is_dummy && memberships.get(m).is_some_and(|s| s.len() > 1))
    };
    let isolated_idx: BTreeSet<usize> = (0..h.hyperedges.len()).filter(|&i| !shared(i)).collect();

    let mut main = Hypergraph::default();
    let mut isolated = Vec::new();
    let mut isolated_nodes = BTreeMap::new();
    for (i, mut e) in h.hyperedges.into_iter().enumerate() {
        if isolated_idx.contains(&i) {
            e.is_isolated = true;
            for m in &e.members {
                isolated_nodes.insert(*m, h.nodes[m].clone());
            }
            isolated.push(e);
        } else {
            for m in &e.members {
                main.nodes.insert(*m, h.nodes[m].clone());
            }
            main.hyperedges.push(e);
        }
    }

    let real = main.real_node_count();
    if real > NODE_BUDGET {
        warnings.push(MetroWarning::NodeBudgetExceeded {
            count: real,
            limit: NODE_BUDGET,
        });
    }
    if main.hyperedges.len() > HYPEREDGE_BUDGET {
        warnings.push(MetroWarning::HyperedgeBudgetExceeded {
            count: main.hyperedges.len(),
            limit: HYPEREDGE_BUDGET,
        });
    }
    MetroPrep {
        main,
        isolated,
        isolated_nodes,
        warnings,
    }
}
