//! Edit-graph synthesis of annotated training programs.
//!
//! A pipeline grows a persistent graph: a root node, idea nodes proposed
//! by an LLM, and program nodes produced by LLM editors that implement
//! ideas, add annotations, or vary existing programs. Every candidate
//! passes a verifier-backed keep rule before it may enter the graph, and
//! every keep/drop decision is recorded so a finished graph can be
//! re-validated from scratch. Program texts live in a content-addressed
//! blob directory; the graph itself is one JSON document written
//! atomically after every round, so an interrupted pipeline resumes from
//! its last checkpoint.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::extract::{build_manifest, extract_pairs, CorpusExtraction, TrainingExample};
use crate::proposer::{CompletionBackend, ProposerError};
use crate::text::{
    line_of_offset, normalize_whitespace, parse, remove_annotation, strip_all_annotations,
    AnnotationInstance, SourceText,
};
use crate::verifier::{
    annotation_is_accepted, content_hash, Harness, VerificationOutcome, VerificationStatus,
    VerifierError,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Root,
    Idea,
    Program,
}

/// One node of the edit graph. Program text is not stored inline: nodes
/// reference a content-addressed blob and are hydrated on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub kind: NodeKind,
    /// Logical creation counter — a position in the growth order, not a
    /// wall-clock time, so graphs are byte-identical across runs.
    pub created_at: u64,
    pub created_by: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idea: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationOutcome>,
    /// Hydrated program text; lives in the blob store on disk.
    #[serde(skip)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphEdge {
    pub parent: String,
    pub child: String,
    pub editor: String,
}

/// One keep/drop decision, replayable by `revalidate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub seq: u64,
    /// Schedule round (0-based) that produced the candidate.
    pub round: u64,
    pub editor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idea: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_hash: Option<String>,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    pub reason: String,
}

/// The persistent graph. Serialized as `graph.json` next to a `blobs/`
/// directory holding every candidate program text (kept and dropped).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditGraph {
    pub schema_version: u32,
    pub seed: u64,
    pub salvage: bool,
    counter: u64,
    pub rounds_completed: u64,
    pub llm_calls_used: u64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    pub decisions: Vec<DecisionRecord>,
    /// Blob contents not yet written to disk.
    #[serde(skip)]
    pending_blobs: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("could not access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("graph store at {path} is corrupt: {detail}")]
    Corrupt { path: String, detail: String },
    #[error("schedule mismatch: {0}")]
    Schedule(String),
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.display().to_string(), source }
}

impl EditGraph {
    pub fn new(seed: u64, salvage: bool) -> Self {
        let root = GraphNode {
            id: "n0000".into(),
            kind: NodeKind::Root,
            created_at: 0,
            created_by: "root".into(),
            idea: None,
            content_hash: None,
            verification: None,
            content: None,
        };
        EditGraph {
            schema_version: SCHEMA_VERSION,
            seed,
            salvage,
            counter: 1,
            rounds_completed: 0,
            llm_calls_used: 0,
            nodes: vec![root],
            edges: Vec::new(),
            decisions: Vec::new(),
            pending_blobs: BTreeMap::new(),
        }
    }

    pub fn root_id(&self) -> &str {
        &self.nodes[0].id
    }

    pub fn node(&self, id: &str) -> Option<&GraphNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn parents_of(&self, id: &str) -> Vec<&str> {
        self.edges.iter().filter(|e| e.child == id).map(|e| e.parent.as_str()).collect()
    }

    pub fn children_of(&self, id: &str) -> Vec<&str> {
        self.edges.iter().filter(|e| e.parent == id).map(|e| e.child.as_str()).collect()
    }

    fn next_id(&mut self) -> (String, u64) {
        let at = self.counter;
        self.counter += 1;
        (format!("n{at:04}"), at)
    }

    /// Register program text in the blob store (written at next save).
    fn record_blob(&mut self, content: &str) -> String {
        let hash = content_hash(content);
        self.pending_blobs.entry(hash.clone()).or_insert_with(|| content.to_string());
        hash
    }

    fn decide(&mut self, mut record: DecisionRecord) {
        record.seq = self.decisions.len() as u64;
        self.decisions.push(record);
    }

    /// Write blobs and `graph.json` under `dir`. The JSON file is written
    /// to a temporary name and renamed, so a crash can't leave a torn
    /// checkpoint.
    pub fn save(&self, dir: &Path) -> Result<(), SynthError> {
        let blob_dir = dir.join("blobs");
        std::fs::create_dir_all(&blob_dir).map_err(io_err(&blob_dir))?;
        for (hash, content) in &self.pending_blobs {
            let path = blob_dir.join(hash);
            if path.exists() {
                continue;
            }
            let tmp = blob_dir.join(format!("{hash}.tmp"));
            std::fs::write(&tmp, content).map_err(io_err(&tmp))?;
            std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
        }
        let graph_path = dir.join("graph.json");
        let tmp = dir.join("graph.json.tmp");
        let body = serde_json::to_string_pretty(self).expect("graph serializes");
        std::fs::write(&tmp, body).map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &graph_path).map_err(io_err(&graph_path))?;
        Ok(())
    }

    /// Load a graph and hydrate program texts from the blob store,
    /// checking schema version and content hashes.
    pub fn load(dir: &Path) -> Result<Self, SynthError> {
        let graph_path = dir.join("graph.json");
        let raw = std::fs::read_to_string(&graph_path).map_err(io_err(&graph_path))?;
        let mut graph: EditGraph = serde_json::from_str(&raw).map_err(|e| SynthError::Corrupt {
            path: graph_path.display().to_string(),
            detail: e.to_string(),
        })?;
        if graph.schema_version != SCHEMA_VERSION {
            return Err(SynthError::Corrupt {
                path: graph_path.display().to_string(),
                detail: format!(
                    "schema version {} (this build reads {})",
                    graph.schema_version, SCHEMA_VERSION
                ),
            });
        }
        for node in &mut graph.nodes {
            if let Some(hash) = &node.content_hash {
                let content = read_blob(dir, hash)?;
                node.content = Some(content);
            }
        }
        Ok(graph)
    }

    /// Program nodes in creation order.
    pub fn program_nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Program)
    }
}

/// Read one blob and verify its content hash.
pub fn read_blob(dir: &Path, hash: &str) -> Result<String, SynthError> {
    let path = dir.join("blobs").join(hash);
    let content = std::fs::read_to_string(&path).map_err(io_err(&path))?;
    if content_hash(&content) != hash {
        return Err(SynthError::Corrupt {
            path: path.display().to_string(),
            detail: "content does not match its hash".into(),
        });
    }
    Ok(content)
}

// ---------------------------------------------------------------------------
// Prompts and schedule
// ---------------------------------------------------------------------------

/// The four editor prompt templates. Shipped as text files under
/// `prompts/`; embedded copies serve as defaults.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditorPrompts {
    pub idea_proposer: String,
    pub idea_implementer: String,
    pub annotator: String,
    pub change_proposer: String,
}

impl Default for EditorPrompts {
    fn default() -> Self {
        EditorPrompts {
            idea_proposer: include_str!("../../../prompts/idea_proposer.txt").into(),
            idea_implementer: include_str!("../../../prompts/idea_implementer.txt").into(),
            annotator: include_str!("../../../prompts/annotator.txt").into(),
            change_proposer: include_str!("../../../prompts/change_proposer.txt").into(),
        }
    }
}

impl EditorPrompts {
    /// Load the four templates from a directory of `.txt` files.
    pub fn from_dir(dir: &Path) -> Result<Self, SynthError> {
        let read = |name: &str| -> Result<String, SynthError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(io_err(&path))
        };
        Ok(EditorPrompts {
            idea_proposer: read("idea_proposer.txt")?,
            idea_implementer: read("idea_implementer.txt")?,
            annotator: read("annotator.txt")?,
            change_proposer: read("change_proposer.txt")?,
        })
    }

    /// Fingerprint recorded in dataset manifests.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in [
            &self.idea_proposer,
            &self.idea_implementer,
            &self.annotator,
            &self.change_proposer,
        ] {
            h.update(t.as_bytes());
            h.update([0]);
        }
        format!("{:x}", h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditorKind {
    IdeaProposer,
    IdeaImplementer,
    Annotator,
    ChangeProposer,
}

impl EditorKind {
    pub fn name(self) -> &'static str {
        match self {
            EditorKind::IdeaProposer => "idea_proposer",
            EditorKind::IdeaImplementer => "idea_implementer",
            EditorKind::Annotator => "annotator",
            EditorKind::ChangeProposer => "change_proposer",
        }
    }
}

fn default_fanout() -> u32 {
    3
}

fn default_selection() -> usize {
    2
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleRound {
    pub editor: EditorKind,
    /// Completions requested per idea-proposer call.
    #[serde(default = "default_fanout")]
    pub fanout: u32,
    /// Nodes an editing round may select.
    #[serde(default = "default_selection")]
    pub selection_limit: usize,
}

/// A full pipeline description, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub seed: u64,
    pub rounds: Vec<ScheduleRound>,
    #[serde(default)]
    pub max_llm_calls: Option<u64>,
    #[serde(default)]
    pub max_nodes: Option<usize>,
    /// Keep the passing subset when an annotator rewrite is only partly
    /// acceptable.
    #[serde(default = "default_true")]
    pub salvage: bool,
}

impl Schedule {
    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let raw = std::fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&raw).map_err(|e| SynthError::Schedule(format!(
            "{}: {e}",
            path.display()
        )))
    }
}

/// Per-round RNG: a pure function of (seed, round index), so resumed and
/// fresh runs draw identical samples.
fn round_rng(seed: u64, round: u64) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(round.to_le_bytes());
    let digest = h.finalize();
    let mut eight = [0u8; 8];
    eight.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(eight))
}

// ---------------------------------------------------------------------------
// Keep rules
// ---------------------------------------------------------------------------

/// Fate of a candidate program from the implementer or change proposer.
#[derive(Debug, Clone, PartialEq)]
pub enum ProgramJudgement {
    Keep(VerificationOutcome),
    Drop(String),
}

/// Keep rule for whole-program candidates: the text must get past parsing
/// and the tool must answer; any error diagnostic *on an annotation line*
/// rejects the candidate (its annotations would be lies), while errors
/// elsewhere are allowed — unfinished programs are exactly what the
/// annotator editor needs.
pub fn judge_program(text: &str, harness: &Harness) -> Result<ProgramJudgement, SynthError> {
    let outcome = harness.verify(&SourceText::new(text))?;
    match outcome.status {
        VerificationStatus::ParseOrResolutionError => {
            return Ok(ProgramJudgement::Drop("rejected: parse or resolution error".into()))
        }
        VerificationStatus::ToolFailure => {
            return Ok(ProgramJudgement::Drop("rejected: tool failure".into()))
        }
        _ => {}
    }
    let unit = parse(&SourceText::new(text));
    for inst in &unit.annotations {
        let line = line_of_offset(text, inst.span.start);
        if outcome.errors_at_line(line).next().is_some() {
            return Ok(ProgramJudgement::Drop(format!(
                "rejected: error at annotation line {line}"
            )));
        }
    }
    Ok(ProgramJudgement::Keep(outcome))
}

/// Fate of an annotator rewrite.
#[derive(Debug, Clone, PartialEq)]
pub enum AnnotatorJudgement {
    /// Every added annotation is individually accepted.
    KeepWhole(VerificationOutcome),
    /// Some added annotations failed; the passing subset survives.
    Salvage {
        text: String,
        outcome: VerificationOutcome,
        rejected: Vec<String>,
    },
    Drop(String),
}

/// Split a rewrite into (matched parent annotations, added annotations).
/// Returns `None` when the rewrite removed one of the parent's
/// annotations.
fn added_annotations(
    parent: &SourceText,
    candidate: &SourceText,
) -> Option<Vec<AnnotationInstance>> {
    let parent_unit = parse(parent);
    let candidate_unit = parse(candidate);
    let mut remaining: Vec<&str> = parent_unit
        .annotations
        .iter()
        .map(|a| a.annotation.normalized.as_str())
        .collect();
    let mut added = Vec::new();
    for inst in &candidate_unit.annotations {
        if let Some(i) = remaining.iter().position(|r| *r == inst.annotation.normalized) {
            remaining.swap_remove(i);
        } else {
            added.push(inst.clone());
        }
    }
    if remaining.is_empty() {
        Some(added)
    } else {
        None
    }
}

/// Candidate text with a subset of its annotations removed (later spans
/// first so earlier ones stay valid).
fn without_instances(text: &SourceText, drop: &[AnnotationInstance]) -> SourceText {
    let mut ordered: Vec<&AnnotationInstance> = drop.iter().collect();
    ordered.sort_by_key(|i| i.span.start);
    let mut current = text.clone();
    for inst in ordered.iter().rev() {
        if let Ok(next) = remove_annotation(&current, inst) {
            current = next;
        }
    }
    current
}

/// Keep rule for annotator rewrites: the rewrite must differ from its
/// parent only by added annotations, and each added annotation — checked
/// alone against the parent — must pass the acceptance predicate. With
/// `salvage`, a partly-acceptable rewrite is reduced to its passing
/// subset instead of being dropped.
pub fn judge_annotator(
    parent: &SourceText,
    parent_outcome: &VerificationOutcome,
    candidate: &SourceText,
    harness: &Harness,
    salvage: bool,
) -> Result<AnnotatorJudgement, SynthError> {
    let (parent_stripped, _) = strip_all_annotations(parent);
    let (candidate_stripped, _) = strip_all_annotations(candidate);
    if parent_stripped.content != candidate_stripped.content {
        return Ok(AnnotatorJudgement::Drop(
            "rejected: rewrite changes more than annotations".into(),
        ));
    }
    let Some(added) = added_annotations(parent, candidate) else {
        return Ok(AnnotatorJudgement::Drop(
            "rejected: rewrite removes existing annotations".into(),
        ));
    };
    if added.is_empty() {
        return Ok(AnnotatorJudgement::Drop("rejected: no annotations added".into()));
    }

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (i, inst) in added.iter().enumerate() {
        let others: Vec<AnnotationInstance> = added
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, x)| x.clone())
            .collect();
        let single = without_instances(candidate, &others);
        // Locate this annotation in the reduced text.
        let single_added = added_annotations(parent, &single).unwrap_or_default();
        let Some(found) = single_added
            .iter()
            .find(|a| a.annotation.normalized == inst.annotation.normalized)
        else {
            rejected.push(inst.clone());
            continue;
        };
        let line = line_of_offset(&single.content, found.span.start);
        let outcome = harness.verify(&single)?;
        if annotation_is_accepted(parent_outcome, &outcome, line, false) {
            accepted.push(inst.clone());
        } else {
            rejected.push(inst.clone());
        }
    }

    if rejected.is_empty() {
        let outcome = harness.verify(candidate)?;
        return Ok(AnnotatorJudgement::KeepWhole(outcome));
    }
    let rejected_texts: Vec<String> =
        rejected.iter().map(|i| i.annotation.text.clone()).collect();
    if !salvage || accepted.is_empty() {
        return Ok(AnnotatorJudgement::Drop(format!(
            "rejected annotations: {}",
            rejected_texts.join(" | ")
        )));
    }
    let salvage_text = without_instances(candidate, &rejected);
    let outcome = harness.verify(&salvage_text)?;
    Ok(AnnotatorJudgement::Salvage {
        text: salvage_text.content,
        outcome,
        rejected: rejected_texts,
    })
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineReport {
    pub rounds_run: usize,
    pub llm_calls_used: u64,
    pub nodes_total: usize,
    pub kept: usize,
    pub dropped: usize,
    pub stopped_by_budget: bool,
}

fn budget_left(graph: &EditGraph, schedule: &Schedule) -> bool {
    let calls_ok = schedule.max_llm_calls.is_none_or(|m| graph.llm_calls_used < m);
    let nodes_ok = schedule.max_nodes.is_none_or(|m| graph.nodes.len() < m);
    calls_ok && nodes_ok
}

/// First fenced code block if the completion uses fences, else the raw
/// completion unchanged (byte-exact candidates matter for reproducibility).
fn extract_program_text(completion: &str) -> String {
    if !completion.contains("```") {
        return completion.to_string();
    }
    let mut lines = completion.lines();
    let mut block = Vec::new();
    let mut inside = false;
    for line in &mut lines {
        if line.trim_start().starts_with("```") {
            if inside {
                break;
            }
            inside = true;
            continue;
        }
        if inside {
            block.push(line);
        }
    }
    let mut text = block.join("\n");
    text.push('\n');
    text
}

/// Run (or resume) a schedule against the graph stored in `dir`.
pub fn run_pipeline(
    dir: &Path,
    schedule: &Schedule,
    backend: &dyn CompletionBackend,
    harness: &Harness,
    prompts: &EditorPrompts,
) -> Result<PipelineReport, SynthError> {
    let mut graph = if dir.join("graph.json").exists() {
        let g = EditGraph::load(dir)?;
        if g.seed != schedule.seed {
            return Err(SynthError::Schedule(format!(
                "stored graph was grown with seed {}, schedule says {}",
                g.seed, schedule.seed
            )));
        }
        if g.salvage != schedule.salvage {
            return Err(SynthError::Schedule(
                "stored graph and schedule disagree on salvage mode".into(),
            ));
        }
        g
    } else {
        let g = EditGraph::new(schedule.seed, schedule.salvage);
        g.save(dir)?;
        g
    };

    let decisions_before = graph.decisions.len();
    let mut rounds_run = 0usize;
    let mut stopped_by_budget = false;
    while (graph.rounds_completed as usize) < schedule.rounds.len() {
        if !budget_left(&graph, schedule) {
            stopped_by_budget = true;
            break;
        }
        let round_index = graph.rounds_completed;
        let round = schedule.rounds[round_index as usize].clone();
        let mut rng = round_rng(schedule.seed, round_index);
        match round.editor {
            EditorKind::IdeaProposer => {
                run_idea_proposer(&mut graph, &round, round_index, backend, prompts)?
            }
            EditorKind::IdeaImplementer => run_idea_implementer(
                &mut graph, &round, round_index, &mut rng, backend, harness, prompts, schedule,
            )?,
            EditorKind::Annotator => run_annotator(
                &mut graph, &round, round_index, &mut rng, backend, harness, prompts, schedule,
            )?,
            EditorKind::ChangeProposer => run_change_proposer(
                &mut graph, &round, round_index, &mut rng, backend, harness, prompts, schedule,
            )?,
        }
        graph.rounds_completed = round_index + 1;
        graph.save(dir)?;
        rounds_run += 1;
    }

    let new_decisions = &graph.decisions[decisions_before..];
    Ok(PipelineReport {
        rounds_run,
        llm_calls_used: graph.llm_calls_used,
        nodes_total: graph.nodes.len(),
        kept: new_decisions.iter().filter(|d| d.kept).count(),
        dropped: new_decisions.iter().filter(|d| !d.kept).count(),
        stopped_by_budget,
    })
}

fn existing_ideas(graph: &EditGraph) -> Vec<String> {
    graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Idea)
        .filter_map(|n| n.idea.clone())
        .collect()
}

/// One line of model output distilled to an idea: first non-empty line,
/// bullets stripped.
fn distill_idea(completion: &str) -> String {
    let line = completion.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    line.trim_start_matches(['-', '*', ' ']).trim().to_string()
}

fn run_idea_proposer(
    graph: &mut EditGraph,
    round: &ScheduleRound,
    round_index: u64,
    backend: &dyn CompletionBackend,
    prompts: &EditorPrompts,
) -> Result<(), SynthError> {
    let ideas = existing_ideas(graph);
    let listing = if ideas.is_empty() {
        "(none)".to_string()
    } else {
        ideas.iter().map(|i| format!("- {i}")).collect::<Vec<_>>().join("\n")
    };
    let prompt = prompts.idea_proposer.replace("{existing}", &listing);
    graph.llm_calls_used += 1;
    let completions = backend.complete(&prompt, round.fanout)?;
    let root = graph.root_id().to_string();
    let mut known: BTreeSet<String> = ideas.into_iter().collect();
    for completion in completions {
        let idea = distill_idea(&completion);
        if idea.is_empty() {
            graph.decide(DecisionRecord {
                seq: 0,
                round: round_index,
                editor: "idea_proposer".into(),
                parent: Some(root.clone()),
                idea: Some(completion.clone()),
                content_hash: None,
                kept: false,
                node: None,
                reason: "rejected: empty idea".into(),
            });
            continue;
        }
        if known.contains(&idea) {
            graph.decide(DecisionRecord {
                seq: 0,
                round: round_index,
                editor: "idea_proposer".into(),
                parent: Some(root.clone()),
                idea: Some(idea.clone()),
                content_hash: None,
                kept: false,
                node: None,
                reason: "rejected: duplicate idea".into(),
            });
            continue;
        }
        known.insert(idea.clone());
        let (id, at) = graph.next_id();
        graph.nodes.push(GraphNode {
            id: id.clone(),
            kind: NodeKind::Idea,
            created_at: at,
            created_by: "idea_proposer".into(),
            idea: Some(idea.clone()),
            content_hash: None,
            verification: None,
            content: None,
        });
        graph.edges.push(GraphEdge {
            parent: root.clone(),
            child: id.clone(),
            editor: "idea_proposer".into(),
        });
        graph.decide(DecisionRecord {
            seq: 0,
            round: round_index,
            editor: "idea_proposer".into(),
            parent: Some(root.clone()),
            idea: Some(idea),
            content_hash: None,
            kept: true,
            node: Some(id),
            reason: "kept".into(),
        });
    }
    Ok(())
}

/// Deterministically sample up to `limit` items from `eligible` (a list of
/// node ids) using the round RNG.
fn sample_ids(eligible: Vec<String>, limit: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut ids = eligible;
    ids.shuffle(rng);
    ids.truncate(limit);
    ids
}

#[allow(clippy::too_many_arguments)]
fn run_idea_implementer(
    graph: &mut EditGraph,
    round: &ScheduleRound,
    round_index: u64,
    rng: &mut ChaCha8Rng,
    backend: &dyn CompletionBackend,
    harness: &Harness,
    prompts: &EditorPrompts,
    schedule: &Schedule,
) -> Result<(), SynthError> {
    let implemented: BTreeSet<&str> = graph
        .edges
        .iter()
        .filter(|e| e.editor == "idea_implementer")
        .map(|e| e.parent.as_str())
        .collect();
    let eligible: Vec<String> = graph
        .nodes
        .iter()
        .filter(|n| n.kind == NodeKind::Idea && !implemented.contains(n.id.as_str()))
        .map(|n| n.id.clone())
        .collect();
    for idea_id in sample_ids(eligible, round.selection_limit, rng) {
        if !budget_left(graph, schedule) {
            break;
        }
        let idea_text = graph
            .node(&idea_id)
            .and_then(|n| n.idea.clone())
            .expect("idea nodes carry idea text");
        let prompt = prompts.idea_implementer.replace("{idea}", &idea_text);
        graph.llm_calls_used += 1;
        let completions = backend.complete(&prompt, 1)?;
        let Some(first) = completions.first() else {
            graph.decide(DecisionRecord {
                seq: 0,
                round: round_index,
                editor: "idea_implementer".into(),
                parent: Some(idea_id.clone()),
                idea: None,
                content_hash: None,
                kept: false,
                node: None,
                reason: "rejected: no completion".into(),
            });
            continue;
        };
        let text = extract_program_text(first);
        let hash = graph.record_blob(&text);
        match judge_program(&text, harness)? {
            ProgramJudgement::Keep(outcome) => {
                let (id, at) = graph.next_id();
                graph.nodes.push(GraphNode {
                    id: id.clone(),
                    kind: NodeKind::Program,
                    created_at: at,
                    created_by: "idea_implementer".into(),
                    idea: None,
                    content_hash: Some(hash.clone()),
                    verification: Some(outcome),
                    content: Some(text),
                });
                graph.edges.push(GraphEdge {
                    parent: idea_id.clone(),
                    child: id.clone(),
                    editor: "idea_implementer".into(),
                });
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "idea_implementer".into(),
                    parent: Some(idea_id),
                    idea: None,
                    content_hash: Some(hash),
                    kept: true,
                    node: Some(id),
                    reason: "kept".into(),
                });
            }
            ProgramJudgement::Drop(reason) => {
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "idea_implementer".into(),
                    parent: Some(idea_id),
                    idea: None,
                    content_hash: Some(hash),
                    kept: false,
                    node: None,
                    reason,
                });
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_annotator(
    graph: &mut EditGraph,
    round: &ScheduleRound,
    round_index: u64,
    rng: &mut ChaCha8Rng,
    backend: &dyn CompletionBackend,
    harness: &Harness,
    prompts: &EditorPrompts,
    schedule: &Schedule,
) -> Result<(), SynthError> {
    let eligible: Vec<String> = graph
        .program_nodes()
        .filter(|n| {
            matches!(
                n.verification.as_ref().map(|v| v.status),
                Some(VerificationStatus::VerificationErrors(_))
            )
        })
        .map(|n| n.id.clone())
        .collect();
    for parent_id in sample_ids(eligible, round.selection_limit, rng) {
        if !budget_left(graph, schedule) {
            break;
        }
        let (parent_text, parent_outcome) = {
            let node = graph.node(&parent_id).expect("sampled from graph");
            (
                SourceText::new(node.content.clone().expect("program nodes carry text")),
                node.verification.clone().expect("program nodes carry outcomes"),
            )
        };
        let prompt = prompts.annotator.replace("{program}", &parent_text.content);
        graph.llm_calls_used += 1;
        let completions = backend.complete(&prompt, 1)?;
        let Some(first) = completions.first() else {
            graph.decide(DecisionRecord {
                seq: 0,
                round: round_index,
                editor: "annotator".into(),
                parent: Some(parent_id.clone()),
                idea: None,
                content_hash: None,
                kept: false,
                node: None,
                reason: "rejected: no completion".into(),
            });
            continue;
        };
        let text = extract_program_text(first);
        let hash = graph.record_blob(&text);
        let candidate = SourceText::new(text);
        match judge_annotator(&parent_text, &parent_outcome, &candidate, harness, graph.salvage)? {
            AnnotatorJudgement::KeepWhole(outcome) => {
                let (id, at) = graph.next_id();
                graph.nodes.push(GraphNode {
                    id: id.clone(),
                    kind: NodeKind::Program,
                    created_at: at,
                    created_by: "annotator".into(),
                    idea: None,
                    content_hash: Some(hash.clone()),
                    verification: Some(outcome),
                    content: Some(candidate.content),
                });
                graph.edges.push(GraphEdge {
                    parent: parent_id.clone(),
                    child: id.clone(),
                    editor: "annotator".into(),
                });
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "annotator".into(),
                    parent: Some(parent_id),
                    idea: None,
                    content_hash: Some(hash),
                    kept: true,
                    node: Some(id),
                    reason: "kept".into(),
                });
            }
            AnnotatorJudgement::Salvage { text, outcome, rejected } => {
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "annotator".into(),
                    parent: Some(parent_id.clone()),
                    idea: None,
                    content_hash: Some(hash),
                    kept: false,
                    node: None,
                    reason: format!(
                        "salvaged; rejected annotations: {}",
                        rejected.join(" | ")
                    ),
                });
                let salvage_hash = graph.record_blob(&text);
                let (id, at) = graph.next_id();
                graph.nodes.push(GraphNode {
                    id: id.clone(),
                    kind: NodeKind::Program,
                    created_at: at,
                    created_by: "annotator".into(),
                    idea: None,
                    content_hash: Some(salvage_hash.clone()),
                    verification: Some(outcome),
                    content: Some(text),
                });
                graph.edges.push(GraphEdge {
                    parent: parent_id.clone(),
                    child: id.clone(),
                    editor: "annotator".into(),
                });
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "annotator".into(),
                    parent: Some(parent_id),
                    idea: None,
                    content_hash: Some(salvage_hash),
                    kept: true,
                    node: Some(id),
                    reason: "kept (salvaged subset)".into(),
                });
            }
            AnnotatorJudgement::Drop(reason) => {
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "annotator".into(),
                    parent: Some(parent_id),
                    idea: None,
                    content_hash: Some(hash),
                    kept: false,
                    node: None,
                    reason,
                });
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_change_proposer(
    graph: &mut EditGraph,
    round: &ScheduleRound,
    round_index: u64,
    rng: &mut ChaCha8Rng,
    backend: &dyn CompletionBackend,
    harness: &Harness,
    prompts: &EditorPrompts,
    schedule: &Schedule,
) -> Result<(), SynthError> {
    let eligible: Vec<String> = graph.program_nodes().map(|n| n.id.clone()).collect();
    for parent_id in sample_ids(eligible, round.selection_limit, rng) {
        if !budget_left(graph, schedule) {
            break;
        }
        let parent_text = graph
            .node(&parent_id)
            .and_then(|n| n.content.clone())
            .expect("program nodes carry text");
        let prompt = prompts.change_proposer.replace("{program}", &parent_text);
        graph.llm_calls_used += 1;
        let completions = backend.complete(&prompt, 1)?;
        let Some(first) = completions.first() else {
            graph.decide(DecisionRecord {
                seq: 0,
                round: round_index,
                editor: "change_proposer".into(),
                parent: Some(parent_id.clone()),
                idea: None,
                content_hash: None,
                kept: false,
                node: None,
                reason: "rejected: no completion".into(),
            });
            continue;
        };
        let text = extract_program_text(first);
        let hash = graph.record_blob(&text);
        match judge_program(&text, harness)? {
            ProgramJudgement::Keep(outcome) => {
                let (id, at) = graph.next_id();
                graph.nodes.push(GraphNode {
                    id: id.clone(),
                    kind: NodeKind::Program,
                    created_at: at,
                    created_by: "change_proposer".into(),
                    idea: None,
                    content_hash: Some(hash.clone()),
                    verification: Some(outcome),
                    content: Some(text),
                });
                graph.edges.push(GraphEdge {
                    parent: parent_id.clone(),
                    child: id.clone(),
                    editor: "change_proposer".into(),
                });
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "change_proposer".into(),
                    parent: Some(parent_id),
                    idea: None,
                    content_hash: Some(hash),
                    kept: true,
                    node: Some(id),
                    reason: "kept".into(),
                });
            }
            ProgramJudgement::Drop(reason) => {
                graph.decide(DecisionRecord {
                    seq: 0,
                    round: round_index,
                    editor: "change_proposer".into(),
                    parent: Some(parent_id),
                    idea: None,
                    content_hash: Some(hash),
                    kept: false,
                    node: None,
                    reason,
                });
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset export
// ---------------------------------------------------------------------------

/// Convert a graph into training pairs. Every annotation is attributed to
/// the first node in its lineage (closest to the root) whose text contains
/// it; descendants that merely carry it forward contribute nothing, so a
/// lineage never exports the same annotation twice. Independent branches
/// that discover the same text each export it once.
pub fn export_dataset(graph: &EditGraph, verifier_version: Option<String>) -> CorpusExtraction {
    // Union of annotation texts over all program ancestors, per node.
    let mut inherited: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    let mut own: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for node in &graph.nodes {
        let own_set: BTreeSet<String> = match (&node.kind, &node.content) {
            (NodeKind::Program, Some(content)) => parse(&SourceText::new(content.clone()))
                .annotations
                .iter()
                .map(|a| a.annotation.normalized.clone())
                .collect(),
            _ => BTreeSet::new(),
        };
        let mut acc = BTreeSet::new();
        for parent in graph.parents_of(&node.id) {
            if let Some(set) = inherited.get(parent) {
                acc.extend(set.iter().cloned());
            }
            if let Some(set) = own.get(parent) {
                acc.extend(set.iter().cloned());
            }
        }
        inherited.insert(&node.id, acc);
        own.insert(&node.id, own_set);
    }

    let mut examples: Vec<TrainingExample> = Vec::new();
    let mut contributing = 0usize;
    let mut program_count = 0usize;
    for node in graph.program_nodes() {
        program_count += 1;
        let Some(content) = &node.content else { continue };
        let mut attributed: BTreeSet<String> = own[node.id.as_str()]
            .difference(&inherited[node.id.as_str()])
            .cloned()
            .collect();
        if attributed.is_empty() {
            continue;
        }
        let source = SourceText::with_path(content.clone(), format!("graph:{}", node.id));
        let mut took_any = false;
        for pair in extract_pairs(&source) {
            let norm = normalize_whitespace(&pair.completion);
            if attributed.remove(&norm) {
                examples.push(pair);
                took_any = true;
            }
        }
        if took_any {
            contributing += 1;
        }
    }
    let manifest = build_manifest(&examples, program_count, contributing, vec![], verifier_version);
    CorpusExtraction { examples, manifest }
}

// ---------------------------------------------------------------------------
// Re-validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub seq: u64,
    pub editor: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevalidationReport {
    pub decisions_checked: usize,
    pub discrepancies: Vec<Discrepancy>,
}

/// Recompute every keep/drop decision of a stored graph from scratch and
/// compare with the record. A sound pipeline yields zero discrepancies;
/// any difference means the store was tampered with or the keep rules
/// drifted.
pub fn revalidate(dir: &Path, harness: &Harness) -> Result<RevalidationReport, SynthError> {
    let graph = EditGraph::load(dir)?;
    let mut discrepancies = Vec::new();
    let mut known_ideas: BTreeSet<String> = BTreeSet::new();
    for d in &graph.decisions {
        let expected: Result<bool, String> = match d.editor.as_str() {
            "idea_proposer" => {
                let idea = d.idea.clone().unwrap_or_default();
                let distilled = distill_idea(&idea);
                let keep = !distilled.is_empty() && !known_ideas.contains(&distilled);
                if keep && d.kept {
                    known_ideas.insert(distilled);
                } else if keep && !d.kept {
                    // recorded drop of an acceptable idea: flag below
                } else if d.kept {
                    known_ideas.insert(distilled);
                }
                Ok(keep)
            }
            "idea_implementer" | "change_proposer" => match &d.content_hash {
                None => Ok(false), // no completion: never kept
                Some(hash) => {
                    let text = read_blob(dir, hash)?;
                    match judge_program(&text, harness)? {
                        ProgramJudgement::Keep(outcome) => {
                            if let Some(node_id) = &d.node {
                                check_stored_outcome(&graph, node_id, &outcome, d, &mut discrepancies);
                            }
                            Ok(true)
                        }
                        ProgramJudgement::Drop(reason) => Err(reason),
                    }
                }
            },
            "annotator" => match (&d.content_hash, &d.parent) {
                (Some(hash), Some(parent_id)) => {
                    let candidate = SourceText::new(read_blob(dir, hash)?);
                    let parent_node = graph.node(parent_id).ok_or_else(|| SynthError::Corrupt {
                        path: dir.display().to_string(),
                        detail: format!("decision {} references unknown node {parent_id}", d.seq),
                    })?;
                    let parent_text = SourceText::new(
                        parent_node.content.clone().unwrap_or_default(),
                    );
                    let parent_outcome = harness.verify(&parent_text)?;
                    match judge_annotator(
                        &parent_text,
                        &parent_outcome,
                        &candidate,
                        harness,
                        graph.salvage,
                    )? {
                        AnnotatorJudgement::KeepWhole(outcome) => {
                            if let Some(node_id) = &d.node {
                                check_stored_outcome(&graph, node_id, &outcome, d, &mut discrepancies);
                            }
                            Ok(true)
                        }
                        AnnotatorJudgement::Salvage { .. } => {
                            Err("salvaged; partial acceptance".into())
                        }
                        AnnotatorJudgement::Drop(reason) => Err(reason),
                    }
                }
                _ => Ok(false),
            },
            other => {
                discrepancies.push(Discrepancy {
                    seq: d.seq,
                    editor: d.editor.clone(),
                    detail: format!("unknown editor {other:?}"),
                });
                continue;
            }
        };
        let expected_kept = matches!(expected, Ok(true));
        if expected_kept != d.kept {
            discrepancies.push(Discrepancy {
                seq: d.seq,
                editor: d.editor.clone(),
                detail: format!(
                    "recorded kept={} but recomputation says kept={} ({})",
                    d.kept,
                    expected_kept,
                    match &expected {
                        Ok(_) => "acceptable".to_string(),
                        Err(reason) => reason.clone(),
                    }
                ),
            });
        }
    }
    Ok(RevalidationReport { decisions_checked: graph.decisions.len(), discrepancies })
}

fn check_stored_outcome(
    graph: &EditGraph,
    node_id: &str,
    fresh: &VerificationOutcome,
    d: &DecisionRecord,
    discrepancies: &mut Vec<Discrepancy>,
) {
    match graph.node(node_id).and_then(|n| n.verification.as_ref()) {
        Some(stored) if stored == fresh => {}
        Some(_) => discrepancies.push(Discrepancy {
            seq: d.seq,
            editor: d.editor.clone(),
            detail: format!("node {node_id}: stored outcome differs from fresh verification"),
        }),
        None => discrepancies.push(Discrepancy {
            seq: d.seq,
            editor: d.editor.clone(),
            detail: format!("node {node_id} has no stored outcome"),
        }),
    }
}

// Tests live in `tests/synthesis.rs`; they drive whole pipelines against
// the bundled verifier.
