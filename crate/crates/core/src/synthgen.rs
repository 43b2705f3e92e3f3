//! Seedable synthetic IR corpora with optional bug injection.
//!
//! A corpus is one "program" compiled N+1 times: a shared base graph is
//! realized once as the original run (ir_id 0) and N times as variant runs.
//! Variants carry small random divergences; an injected bug changes only the
//! original, the way a miscompiled program differs from its non-buggy
//! siblings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{to_json, CorpusManifest};
use crate::ir::{GraphLabel, IRGraph, IRNode, NodeId, Opcode, PhaseExecution, PhaseRef};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("config-error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BugMode {
    MissingOptimization,
    ExtraNode,
}

impl fmt::Display for BugMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BugMode::MissingOptimization => "missing-optimization",
            BugMode::ExtraNode => "extra-node",
        })
    }
}

impl FromStr for BugMode {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "missing-optimization" => Ok(BugMode::MissingOptimization),
            "extra-node" => Ok(BugMode::ExtraNode),
            other => Err(GenError::Config(format!("unknown bug mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugSpec {
    pub phase_name: String,
    pub mode: BugMode,
}

impl FromStr for BugSpec {
    type Err = GenError;

    /// Parses `Phase:mode`, e.g. `EarlyOptimization:missing-optimization`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (phase, mode) = s
            .split_once(':')
            .ok_or_else(|| GenError::Config(format!("bug `{s}` is not PHASE:MODE")))?;
        Ok(BugSpec {
            phase_name: phase.to_string(),
            mode: mode.parse()?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRange {
    pub min: usize,
    pub max: usize,
}

pub const CORE_PHASES: &[&str] = &[
    "GraphBuilder",
    "Typer",
    "TypedLowering",
    "SimplifiedLowering",
    "EarlyOptimization",
];

pub const GENERIC_PHASES: &[&str] = &[
    "Inlining",
    "LoadElimination",
    "EscapeAnalysis",
    "GenericLowering",
    "EffectLinearization",
    "DeadCodeElimination",
    "BranchElimination",
    "StoreStoreElimination",
    "ControlFlowOptimization",
    "MemoryOptimization",
];

/// 35 executions over 15 phase names: the five named phases once each and
/// three rounds of the generic phases.
pub fn default_schedule() -> Vec<String> {
    let g = GENERIC_PHASES;
    let first_round = [
        "GraphBuilder",
        g[0],
        "Typer",
        "TypedLowering",
        g[1],
        g[2],
        "SimplifiedLowering",
        g[3],
        "EarlyOptimization",
        g[4],
        g[5],
        g[6],
        g[7],
        g[8],
        g[9],
    ];
    first_round
        .iter()
        .chain(g.iter())
        .chain(g.iter())
        .map(|s| s.to_string())
        .collect()
}

fn default_seed() -> u64 {
    0
}
fn default_variants() -> usize {
    20
}
fn default_nodes() -> NodeRange {
    NodeRange { min: 300, max: 500 }
}
fn default_opt_probability() -> f64 {
    0.2
}
fn default_mutation_rate() -> f64 {
    0.1
}
fn default_dead_fraction() -> f64 {
    0.03
}
fn default_twin_fraction() -> f64 {
    0.05
}
fn default_affinity() -> f64 {
    0.3
}
fn default_status_probability() -> f64 {
    0.05
}

/// Generator settings. `phase_names` is the execution schedule; a name may
/// repeat, each occurrence being one execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_variants")]
    pub n_variants: usize,
    #[serde(default = "default_schedule")]
    pub phase_names: Vec<String>,
    #[serde(default = "default_nodes")]
    pub nodes_per_graph: NodeRange,
    /// Chance that a later phase optimizes a node whose opcode it handles.
    #[serde(default = "default_opt_probability")]
    pub opt_probability: f64,
    #[serde(default = "default_mutation_rate")]
    pub variant_mutation_rate: f64,
    #[serde(default = "default_dead_fraction")]
    pub dead_fraction: f64,
    #[serde(default = "default_twin_fraction")]
    pub twin_fraction: f64,
    /// Share of opcodes each phase name handles.
    #[serde(default = "default_affinity")]
    pub opcode_affinity: f64,
    /// Chance that an optimization also sets a status flag.
    #[serde(default = "default_status_probability")]
    pub status_probability: f64,
    #[serde(default)]
    pub bug: Option<BugSpec>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            n_variants: default_variants(),
            phase_names: default_schedule(),
            nodes_per_graph: default_nodes(),
            opt_probability: default_opt_probability(),
            variant_mutation_rate: default_mutation_rate(),
            dead_fraction: default_dead_fraction(),
            twin_fraction: default_twin_fraction(),
            opcode_affinity: default_affinity(),
            status_probability: default_status_probability(),
            bug: None,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let err = |m: String| Err(GenError::Config(m));
        for (name, p) in [
            ("opt_probability", self.opt_probability),
            ("variant_mutation_rate", self.variant_mutation_rate),
            ("dead_fraction", self.dead_fraction),
            ("twin_fraction", self.twin_fraction),
            ("opcode_affinity", self.opcode_affinity),
            ("status_probability", self.status_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if self.dead_fraction + self.twin_fraction > 0.5 {
            return err("dead_fraction + twin_fraction must not exceed 0.5".into());
        }
        if self.phase_names.is_empty() {
            return err("phase_names is empty".into());
        }
        let NodeRange { min, max } = self.nodes_per_graph;
        if min > max {
            return err(format!("nodes_per_graph min {min} > max {max}"));
        }
        if min < 2 * self.phase_names.len() {
            return err(format!(
                "nodes_per_graph min {min} is below twice the phase count ({})",
                self.phase_names.len()
            ));
        }
        if let Some(bug) = &self.bug {
            if !self.phase_names.contains(&bug.phase_name) {
                return err(format!(
                    "bug phase `{}` is not in phase_names",
                    bug.phase_name
                ));
            }
        }
        Ok(())
    }

    /// Distinct phase names in schedule order.
    pub fn distinct_phases(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.phase_names
            .iter()
            .filter(|n| seen.insert(n.as_str()))
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bug_phase: Option<String>,
    pub mode: Option<BugMode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub original: IRGraph,
    pub variants: Vec<IRGraph>,
    pub truth: GroundTruth,
}

/// (name, numeric opcode, sampling weight)
const OPCODES: &[(&str, u32, u32)] = &[
    ("Start", 0x0000, 0),
    ("Parameter", 0x0001, 8),
    ("HeapConstant", 0x0002, 14),
    ("NumberConstant", 0x0003, 14),
    ("Int32Constant", 0x0004, 8),
    ("Checkpoint", 0x0010, 12),
    ("FrameState", 0x0011, 12),
    ("StateValues", 0x0012, 10),
    ("Phi", 0x0020, 6),
    ("EffectPhi", 0x0021, 5),
    ("Merge", 0x0022, 4),
    ("Branch", 0x0023, 4),
    ("IfTrue", 0x0024, 3),
    ("IfFalse", 0x0025, 3),
    ("LoadField", 0x0030, 6),
    ("StoreField", 0x0031, 4),
    ("JSCall", 0x0040, 5),
    ("JSAdd", 0x0041, 4),
    ("JSLessThan", 0x0042, 3),
    ("NumberAdd", 0x0050, 4),
    ("SpeculativeNumberAdd", 0x0051, 3),
    ("CheckMaps", 0x0060, 4),
    ("CheckBounds", 0x0061, 3),
    ("CheckedInt32Add", 0x007c, 3),
    ("Int32Add", 0x0080, 3),
    ("Word32And", 0x0081, 2),
    ("Call", 0x0090, 3),
    ("Return", 0x00ff, 2),
];

fn sample_opcode(rng: &mut ChaCha8Rng) -> usize {
    sample_opcode_in(rng, None)
}

/// Weighted pick restricted to `mask`; an empty mask falls back to the full table.
fn sample_opcode_in(rng: &mut ChaCha8Rng, mask: Option<&[bool]>) -> usize {
    let allowed = |i: usize| mask.is_none_or(|m| m[i]) && OPCODES[i].2 > 0;
    let mask = if (0..OPCODES.len()).any(allowed) {
        mask
    } else {
        None
    };
    let allowed = |i: usize| mask.is_none_or(|m| m[i]);
    let total: u32 = OPCODES
        .iter()
        .enumerate()
        .filter(|(i, _)| allowed(*i))
        .map(|(_, o)| o.2)
        .sum();
    let mut pick = rng.gen_range(0..total);
    for (i, o) in OPCODES.iter().enumerate().filter(|(i, _)| allowed(*i)) {
        if pick < o.2 {
            return i;
        }
        pick -= o.2;
    }
    unreachable!("weights cover the range")
}

fn opcode(i: usize) -> Opcode {
    Opcode::new(OPCODES[i].0, OPCODES[i].1)
}

fn opcode_index(op: &Opcode) -> usize {
    OPCODES.iter().position(|o| o.0 == op.name).unwrap_or(0)
}

fn base_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn run_rng(seed: u64, ir_id: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ir_id as u64);
    rng.set_stream(1);
    rng
}

fn pick_distinct(rng: &mut ChaCha8Rng, pool: &[NodeId], k: usize) -> Vec<NodeId> {
    pool.choose_multiple(rng, k.min(pool.len()))
        .copied()
        .collect()
}

/// Ids of nodes that are generated with edges (never the planted dead ones).
fn live_nodes(g: &IRGraph) -> Vec<NodeId> {
    g.nodes
        .values()
        .filter(|n| n.proper_degree() > 0)
        .map(|n| n.node_id)
        .collect()
}

fn build_base(cfg: &GenConfig) -> IRGraph {
    let mut rng = base_rng(cfg.seed);
    let execs = cfg.phase_names.len();
    let total = rng.gen_range(cfg.nodes_per_graph.min..=cfg.nodes_per_graph.max);
    let n_dead = (total as f64 * cfg.dead_fraction).round() as usize;
    let n_twins = (total as f64 * cfg.twin_fraction).round() as usize;
    let n_core = total - n_dead - n_twins;

    let mut core_per_exec = vec![0usize; execs];
    if execs == 1 {
        core_per_exec[0] = n_core;
    } else {
        core_per_exec[0] = n_core.div_ceil(2);
        for slot in core_per_exec.iter_mut().skip(1) {
            *slot = 1;
        }
        let spread = n_core - core_per_exec[0] - (execs - 1);
        for _ in 0..spread {
            core_per_exec[rng.gen_range(1..execs)] += 1;
        }
    }
    let mut dead_per_exec = vec![0usize; execs];
    for _ in 0..n_dead {
        dead_per_exec[rng.gen_range(0..execs)] += 1;
    }

    let mut affinity: BTreeMap<&str, Vec<bool>> = BTreeMap::new();
    for name in &cfg.phase_names {
        affinity.entry(name.as_str()).or_insert_with(|| {
            (0..OPCODES.len())
                .map(|_| rng.gen_bool(cfg.opcode_affinity))
                .collect()
        });
    }

    let mut g = IRGraph::new(0, GraphLabel::Original);
    let mut core: Vec<NodeId> = Vec::new();
    let mut born: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut next: NodeId = 0;
    for (k, name) in cfg.phase_names.iter().enumerate() {
        let mut phase = PhaseExecution::new(PhaseRef::new(name.clone(), k as u32));
        if k > 0 {
            let handles = &affinity[name.as_str()];
            // a phase rewrites whole groups: same origin execution, same opcode
            let mut decided: BTreeMap<(usize, usize), bool> = BTreeMap::new();
            for &id in &core {
                let op = opcode_index(&g.nodes[&id].opcode);
                decided
                    .entry((born[&id], op))
                    .or_insert_with(|| handles[op] && rng.gen_bool(cfg.opt_probability));
            }
            // every phase does some work
            if !decided.is_empty() && !decided.values().any(|&hit| hit) {
                let eligible: Vec<(usize, usize)> = decided
                    .keys()
                    .copied()
                    .filter(|&(_, op)| handles[op])
                    .collect();
                let pool = if eligible.is_empty() {
                    decided.keys().copied().collect()
                } else {
                    eligible
                };
                let pick = pool[rng.gen_range(0..pool.len())];
                decided.insert(pick, true);
            }
            for &id in &core {
                let n = g.nodes.get_mut(&id).expect("core node");
                let hit = decided[&(born[&id], opcode_index(&n.opcode))];
                if hit {
                    phase.optimized.push(id);
                    if rng.gen_bool(cfg.status_probability) {
                        match rng.gen_range(0..4) {
                            0 => n.status.replaced = true,
                            1 => n.status.killed = true,
                            2 => n.status.removed = true,
                            _ => n.status.appended = true,
                        }
                    }
                }
            }
        }
        for _ in 0..core_per_exec[k] {
            let op = match (next, k) {
                (0, _) => 0,
                (_, 0) => sample_opcode(&mut rng),
                _ => sample_opcode_in(&mut rng, Some(&affinity[name.as_str()])),
            };
            let id = next;
            next += 1;
            g.nodes.insert(id, IRNode::new(id, opcode(op), 0));
            let fan = rng.gen_range(1..=3);
            for t in pick_distinct(&mut rng, &core, fan) {
                g.add_edge(id, t);
            }
            phase.generated.push(id);
            core.push(id);
            born.insert(id, k);
        }
        for _ in 0..dead_per_exec[k] {
            let id = next;
            next += 1;
            g.nodes
                .insert(id, IRNode::new(id, opcode(sample_opcode(&mut rng)), 0));
            phase.generated.push(id);
        }
        g.phases.push(phase);
    }

    // twins: sources pairwise non-adjacent so every copy stays a true twin
    let mut candidates: Vec<NodeId> = core.iter().copied().filter(|&id| id != 0).collect();
    candidates.shuffle(&mut rng);
    let mut sources: Vec<NodeId> = Vec::new();
    let mut blocked: BTreeSet<NodeId> = BTreeSet::new();
    for id in candidates {
        if sources.len() == n_twins {
            break;
        }
        if blocked.contains(&id) {
            continue;
        }
        blocked.insert(id);
        blocked.extend(g.nodes[&id].neighbors.iter().copied());
        sources.push(id);
    }
    g.derive_node_phases(true);
    for src in sources {
        let id = next;
        next += 1;
        let s = g.nodes[&src].clone();
        let mut twin = IRNode::new(id, s.opcode.clone(), 0);
        twin.status = s.status;
        g.nodes.insert(id, twin);
        for nb in &s.neighbors {
            g.add_edge(id, *nb);
        }
        let gen = s.gen_phase.as_ref().expect("generated");
        for p in &mut g.phases {
            if &p.phase == gen {
                p.generated.push(id);
            }
            if p.optimized.contains(&src) {
                p.optimized.push(id);
            }
        }
    }
    g.derive_node_phases(true);
    g
}

fn add_generated_node(g: &mut IRGraph, rng: &mut ChaCha8Rng, phase_idx: usize, fan: usize) {
    let limit = g.phases[phase_idx].phase.exec_order;
    let pool: Vec<NodeId> = live_nodes(g)
        .into_iter()
        .filter(|id| {
            g.nodes[id]
                .gen_phase
                .as_ref()
                .is_some_and(|p| p.exec_order <= limit)
        })
        .collect();
    let id = g.next_node_id();
    let mut n = IRNode::new(id, opcode(sample_opcode(rng)), g.ir_id);
    n.gen_phase = Some(g.phases[phase_idx].phase.clone());
    n.gen_ordinal = g.phases[phase_idx].generated.len() as u32;
    g.nodes.insert(id, n);
    for t in pick_distinct(rng, &pool, fan) {
        g.add_edge(id, t);
    }
    g.phases[phase_idx].generated.push(id);
}

fn add_optimization(g: &mut IRGraph, rng: &mut ChaCha8Rng, phase_idx: usize) {
    let phase = &g.phases[phase_idx];
    let limit = phase.phase.exec_order;
    let pool: Vec<NodeId> = live_nodes(g)
        .into_iter()
        .filter(|id| {
            !phase.optimized.contains(id)
                && g.nodes[id]
                    .gen_phase
                    .as_ref()
                    .is_some_and(|p| p.exec_order < limit)
        })
        .collect();
    if let Some(&id) = pool.choose(rng) {
        g.phases[phase_idx].optimized.push(id);
    }
}

fn mutate(g: &mut IRGraph, rng: &mut ChaCha8Rng, rate: f64) {
    for k in 1..g.phases.len() {
        if !rng.gen_bool(rate) {
            continue;
        }
        match rng.gen_range(0..3) {
            0 => {
                let fan = rng.gen_range(1..=2);
                add_generated_node(g, rng, k, fan);
            }
            1 => add_optimization(g, rng, k),
            _ => {
                let opt = &mut g.phases[k].optimized;
                if opt.is_empty() {
                    add_optimization(g, rng, k);
                } else {
                    let at = rng.gen_range(0..opt.len());
                    opt.remove(at);
                }
            }
        }
    }
}

fn inject_bug(g: &mut IRGraph, rng: &mut ChaCha8Rng, bug: &BugSpec) {
    let targets: Vec<usize> = (0..g.phases.len())
        .filter(|&i| g.phases[i].phase.name == bug.phase_name)
        .collect();
    for i in targets {
        match bug.mode {
            BugMode::MissingOptimization => g.phases[i].optimized.clear(),
            BugMode::ExtraNode => {
                for _ in 0..3 {
                    let fan = rng.gen_range(1..=2);
                    add_generated_node(g, rng, i, fan);
                }
            }
        }
    }
}

fn relabel(g: &IRGraph, rng: &mut ChaCha8Rng) -> IRGraph {
    let mut ids: Vec<NodeId> = g.nodes.keys().copied().collect();
    let old = ids.clone();
    ids.shuffle(rng);
    let map: BTreeMap<NodeId, NodeId> = old.into_iter().zip(ids).collect();
    let mut out = g.clone();
    out.nodes = g
        .nodes
        .values()
        .map(|n| {
            let mut m = n.clone();
            m.node_id = map[&n.node_id];
            m.neighbors = n.neighbors.iter().map(|x| map[x]).collect();
            (m.node_id, m)
        })
        .collect();
    for p in &mut out.phases {
        p.generated = p.generated.iter().map(|x| map[x]).collect();
        p.optimized = p.optimized.iter().map(|x| map[x]).collect();
    }
    out
}

fn realize(base: &IRGraph, cfg: &GenConfig, ir_id: u32) -> IRGraph {
    let mut rng = run_rng(cfg.seed, ir_id);
    let mut g = base.clone();
    g.ir_id = ir_id;
    if ir_id == 0 {
        g.label = GraphLabel::Original;
        g.buggy = Some(cfg.bug.is_some());
        if let Some(bug) = &cfg.bug {
            inject_bug(&mut g, &mut rng, bug);
        }
    } else {
        g.label = GraphLabel::Variant;
        g.buggy = Some(false);
        mutate(&mut g, &mut rng, cfg.variant_mutation_rate);
        g = relabel(&g, &mut rng);
    }
    let region: u64 = rng.gen_range(0x1000..0xffff) << 12;
    for n in g.nodes.values_mut() {
        n.ir_id = ir_id;
        n.address = format!(
            "0x{:x}",
            region + 0x28 * n.node_id as u64 + rng.gen_range(0..4) * 8
        );
    }
    g.derive_node_phases(true);
    g
}

/// Builds the original and `n_variants` variant runs. Deterministic per seed.
pub fn generate_corpus(cfg: &GenConfig) -> Result<GeneratedCorpus, GenError> {
    cfg.validate()?;
    let base = build_base(cfg);
    let original = realize(&base, cfg, 0);
    let variants: Vec<IRGraph> = (1..=cfg.n_variants as u32)
        .into_par_iter()
        .map(|ir_id| realize(&base, cfg, ir_id))
        .collect();
    let truth = GroundTruth {
        bug_phase: cfg.bug.as_ref().map(|b| b.phase_name.clone()),
        mode: cfg.bug.as_ref().map(|b| b.mode),
    };
    Ok(GeneratedCorpus {
        original,
        variants,
        truth,
    })
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "truth.json";

/// Writes the dumps, `manifest.json` and `truth.json` into `dir`; returns
/// the manifest path.
pub fn write_corpus(dir: &Path, corpus: &GeneratedCorpus) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let original = PathBuf::from("original.json");
    fs::write(dir.join(&original), to_json(&corpus.original))?;
    let mut variants = Vec::with_capacity(corpus.variants.len());
    for v in &corpus.variants {
        let name = PathBuf::from(format!("variant_{:03}.json", v.ir_id));
        fs::write(dir.join(&name), to_json(v))?;
        variants.push(name);
    }
    let manifest = CorpusManifest { original, variants };
    let manifest_path = dir.join(MANIFEST_FILE);
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    fs::write(
        dir.join(TRUTH_FILE),
        serde_json::to_string_pretty(&corpus.truth)? + "\n",
    )?;
    Ok(manifest_path)
}

pub fn read_truth(dir: &Path) -> io::Result<GroundTruth> {
    let text = fs::read_to_string(dir.join(TRUTH_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
