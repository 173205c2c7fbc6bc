//! Greedy annotation search.
//!
//! Each iteration asks the proposer for candidate annotations, tries every
//! (candidate, insertion point) pair, and keeps the first pair — in
//! proposal order, then ascending offset — that the verifier accepts
//! without regressions. The search stops as soon as the program fully
//! verifies, or after a fixed number of iterations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proposer::{propose, CompletionBackend, ProposalSet, ProposerError};
use crate::text::{
    enumerate_insertion_points, insert_annotation, line_of_offset, parse, Annotation,
    AnnotationKind, InsertionPoint, InsertionStyle, SourceText,
};
use crate::verifier::{
    annotation_is_accepted, Harness, VerificationOutcome, VerificationStatus, VerifierError,
};

/// Search-stage configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum proposal rounds per program.
    pub max_iterations: u32,
    /// Require the error count to strictly decrease on every accepted edit.
    pub strict_progress: bool,
    /// Stop early when an iteration accepts nothing. Off by default: with
    /// a sampling model the next round may propose something new, so a
    /// stalled round is not evidence of a dead end.
    pub stop_on_stall: bool,
    /// Prompt with only the text up to the end of the first failing
    /// method, instead of the whole file.
    pub prompt_prefix_only: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            max_iterations: 5,
            strict_progress: false,
            stop_on_stall: false,
            prompt_prefix_only: false,
        }
    }
}

/// Why the search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FinalStatus {
    /// The program verifies with no errors.
    FullyVerified,
    /// The iteration cap was reached without full verification.
    Exhausted,
    /// `stop_on_stall` ended the search after a round with no acceptance.
    StalledNoAcceptance,
}

/// One (candidate, point) pair the search tried.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub annotation: Annotation,
    pub point: InsertionPoint,
    /// 1-based line the annotation occupies in the edited text.
    pub inserted_line: usize,
    pub status: VerificationStatus,
    pub accepted: bool,
}

/// The edit an iteration kept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptedEdit {
    pub annotation: Annotation,
    pub point: InsertionPoint,
    pub inserted_line: usize,
    pub errors_before: Option<u32>,
    pub errors_after: Option<u32>,
}

/// One proposal round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub proposals: ProposalSet,
    /// Candidates dropped because the program already contains them.
    pub already_present: Vec<Annotation>,
    pub attempts: Vec<AttemptRecord>,
    pub accepted: Option<AcceptedEdit>,
}

/// Full record of one search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub initial_status: VerificationStatus,
    pub iterations: Vec<IterationRecord>,
    pub final_status: FinalStatus,
    pub final_outcome: VerificationStatus,
    /// Verify requests issued during this search (cache hits included).
    pub verifier_calls: u64,
    /// Total wall time in seconds. The only nondeterministic field; see
    /// [`SearchTrace::redacted`].
    pub wall_secs: f64,
    pub config: TraceConfigEcho,
}

/// The configuration under which a trace was produced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceConfigEcho {
    pub k: u32,
    pub max_iterations: u32,
    pub strict_progress: bool,
    pub stop_on_stall: bool,
    pub prompt_prefix_only: bool,
    pub backend: String,
    pub verifier_version: Option<String>,
    pub time_limit_secs: u64,
    pub max_workers: usize,
}

impl SearchTrace {
    /// Copy with wall time zeroed, for comparisons across runs.
    pub fn redacted(&self) -> SearchTrace {
        SearchTrace { wall_secs: 0.0, ..self.clone() }
    }
}

/// Search result: the annotated program and how it was reached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateResult {
    pub program: SourceText,
    pub trace: SearchTrace,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Proposer(#[from] ProposerError),
}

/// Outcome of one greedy iteration.
pub struct GreedyStep {
    pub attempts: Vec<AttemptRecord>,
    pub already_present: Vec<Annotation>,
    /// The first accepted edit, the edited text, and its outcome.
    pub accepted: Option<(AcceptedEdit, SourceText, VerificationOutcome)>,
    /// Verifier requests this step issued.
    pub verifier_calls: u64,
}

/// 1-based line an annotation will occupy after splicing at `point`.
fn inserted_line_for(source: &str, point: &InsertionPoint) -> usize {
    match point.style {
        InsertionStyle::OwnLine => {
            let at_line_start =
                point.offset == 0 || source.as_bytes().get(point.offset - 1) == Some(&b'\n');
            if at_line_start {
                line_of_offset(source, point.offset)
            } else {
                // Appending past a file without a final newline opens a
                // fresh line below the current last one.
                line_of_offset(source, point.offset) + 1
            }
        }
        InsertionStyle::InlineBeforeBrace => line_of_offset(source, point.offset),
    }
}

/// Try every (candidate, point) pair against `program` and keep the first
/// acceptable one. Candidates already present in the program (by
/// normalized text) are skipped up front; re-inserting an annotation the
/// text already carries can never make progress.
pub fn greedy_step(
    program: &SourceText,
    baseline: &VerificationOutcome,
    candidates: &[Annotation],
    harness: &Harness,
    strict_progress: bool,
) -> Result<GreedyStep, SearchError> {
    let unit = parse(program);
    let existing: std::collections::BTreeSet<&str> =
        unit.annotations.iter().map(|a| a.annotation.normalized.as_str()).collect();
    let mut already_present = Vec::new();
    let mut live = Vec::new();
    for cand in candidates {
        if existing.contains(cand.normalized.as_str()) {
            already_present.push(cand.clone());
        } else {
            live.push(cand.clone());
        }
    }

    // Build the grid in canonical order: candidates in proposal order,
    // points by ascending offset across all methods.
    let mut grid: Vec<(Annotation, InsertionPoint, usize, SourceText)> = Vec::new();
    for cand in &live {
        let mut points: Vec<InsertionPoint> = Vec::new();
        for method_id in 0..unit.methods.len() {
            points.extend(enumerate_insertion_points(&unit, method_id, cand.kind).expect(
                "method ids enumerate the unit's own methods",
            ));
        }
        points.sort_by_key(|p| p.offset);
        points.dedup_by_key(|p| p.offset);
        for point in points {
            match insert_annotation(program, &point, cand) {
                Ok(text) => {
                    let line = inserted_line_for(&program.content, &point);
                    grid.push((cand.clone(), point, line, text));
                }
                Err(_) => continue,
            }
        }
    }

    let texts: Vec<SourceText> = grid.iter().map(|(_, _, _, t)| t.clone()).collect();
    let outcomes = harness.verify_batch(&texts);

    let mut attempts = Vec::with_capacity(grid.len());
    let mut accepted = None;
    for ((cand, point, line, text), outcome) in grid.into_iter().zip(outcomes) {
        let outcome = outcome?;
        let ok = annotation_is_accepted(baseline, &outcome, line, strict_progress);
        attempts.push(AttemptRecord {
            annotation: cand.clone(),
            point: point.clone(),
            inserted_line: line,
            status: outcome.status,
            accepted: ok,
        });
        if ok && accepted.is_none() {
            let edit = AcceptedEdit {
                annotation: cand,
                point,
                inserted_line: line,
                errors_before: baseline.status.error_count(),
                errors_after: outcome.status.error_count(),
            };
            accepted = Some((edit, text, outcome));
        }
    }
    let verifier_calls = attempts.len() as u64;
    Ok(GreedyStep { attempts, already_present, accepted, verifier_calls })
}

/// Text the proposer sees: the whole file, or — in prefix mode — the file
/// up to the end of the first method with an error diagnostic.
fn prompt_text(program: &SourceText, baseline: &VerificationOutcome, prefix_only: bool) -> String {
    if !prefix_only {
        return program.content.clone();
    }
    let unit = parse(program);
    let first_error_line = baseline
        .diagnostics
        .iter()
        .find(|d| d.severity == crate::verifier::Severity::Error)
        .map(|d| d.line);
    let Some(line) = first_error_line else {
        return program.content.clone();
    };
    for m in &unit.methods {
        let end_line = line_of_offset(&program.content, m.span.end);
        let start_line = line_of_offset(&program.content, m.span.start);
        if (start_line..=end_line).contains(&line) {
            // Cut after the line containing the method's end.
            let cut = program.content[m.span.end..]
                .find('\n')
                .map(|p| m.span.end + p + 1)
                .unwrap_or(program.content.len());
            return program.content[..cut].to_string();
        }
    }
    program.content.clone()
}

/// Run the greedy search on one program.
pub fn annotate(
    program: &SourceText,
    backend: &dyn CompletionBackend,
    harness: &Harness,
    config: &SearchConfig,
    k: u32,
) -> Result<AnnotateResult, SearchError> {
    let started = std::time::Instant::now();
    let mut verifier_calls = 1u64;
    let mut current = program.clone();
    let mut baseline = harness.verify(&current)?;
    let initial_status = baseline.status;
    let mut iterations = Vec::new();
    let mut final_status = None;

    if baseline.status == VerificationStatus::FullyVerified {
        final_status = Some(FinalStatus::FullyVerified);
    } else {
        for _ in 0..config.max_iterations {
            let prompt = prompt_text(&current, &baseline, config.prompt_prefix_only);
            let proposals = propose(backend, &prompt, k)?;
            let step = greedy_step(
                &current,
                &baseline,
                &proposals.candidates,
                harness,
                config.strict_progress,
            )?;
            verifier_calls += step.verifier_calls;
            let mut record = IterationRecord {
                proposals,
                already_present: step.already_present,
                attempts: step.attempts,
                accepted: None,
            };
            match step.accepted {
                Some((edit, text, outcome)) => {
                    record.accepted = Some(edit);
                    iterations.push(record);
                    current = text;
                    baseline = outcome;
                    if baseline.status == VerificationStatus::FullyVerified {
                        final_status = Some(FinalStatus::FullyVerified);
                        break;
                    }
                }
                None => {
                    iterations.push(record);
                    if config.stop_on_stall {
                        final_status = Some(FinalStatus::StalledNoAcceptance);
                        break;
                    }
                }
            }
        }
    }

    let trace = SearchTrace {
        initial_status,
        iterations,
        final_status: final_status.unwrap_or(FinalStatus::Exhausted),
        final_outcome: baseline.status,
        verifier_calls,
        wall_secs: started.elapsed().as_secs_f64(),
        config: TraceConfigEcho {
            k,
            max_iterations: config.max_iterations,
            strict_progress: config.strict_progress,
            stop_on_stall: config.stop_on_stall,
            prompt_prefix_only: config.prompt_prefix_only,
            backend: backend.describe(),
            verifier_version: harness.version(),
            time_limit_secs: harness.config().time_limit_secs,
            max_workers: harness.config().max_workers,
        },
    };
    Ok(AnnotateResult { program: current, trace })
}

/// Statements proved by the pipeline's annotations, for quick reporting.
pub fn count_annotations_by_kind(source: &SourceText) -> std::collections::BTreeMap<AnnotationKind, usize> {
    let unit = parse(source);
    let mut map = std::collections::BTreeMap::new();
    for a in &unit.annotations {
        *map.entry(a.annotation.kind).or_insert(0) += 1;
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposer::{Script, ScriptedBackend};
    use crate::verifier::VerifierConfig;

    fn harness() -> Harness {
        let cfg = VerifierConfig {
            executable: minidafny::locate::binary(),
            time_limit_secs: 10,
            extra_args: vec![],
            max_workers: 4,
        };
        Harness::new(cfg).unwrap()
    }

    const COUNT_UP: &str = "method countUp(n: nat) returns (i: nat)\n  ensures i == n\n{\n  i := 0;\n  while i < n\n  {\n    i := i + 1;\n  }\n}\n";

    fn scripted(lines: &[&str]) -> ScriptedBackend {
        let script = Script {
            default: lines.iter().map(|s| s.to_string()).collect(),
            ..Script::default()
        };
        ScriptedBackend::from_script(script)
    }

    #[test]
    fn accepts_the_needed_invariant_and_fully_verifies() {
        let program = SourceText::new(COUNT_UP);
        let backend = scripted(&["invariant i <= n"]);
        let h = harness();
        let r = annotate(&program, &backend, &h, &SearchConfig::default(), 5).unwrap();
        assert_eq!(r.trace.final_status, FinalStatus::FullyVerified);
        assert_eq!(r.trace.iterations.len(), 1);
        assert!(r.program.content.contains("invariant i <= n"));
        assert_eq!(r.trace.final_outcome, VerificationStatus::FullyVerified);
    }

    #[test]
    fn already_verifying_program_short_circuits() {
        let program = SourceText::new("method nop() {\n}\n");
        let backend = scripted(&["invariant true"]);
        let h = harness();
        let r = annotate(&program, &backend, &h, &SearchConfig::default(), 5).unwrap();
        assert_eq!(r.trace.final_status, FinalStatus::FullyVerified);
        assert!(r.trace.iterations.is_empty());
        assert_eq!(r.trace.verifier_calls, 1);
        assert_eq!(r.program.content, program.content);
    }

    #[test]
    fn garbage_proposals_run_the_full_iteration_budget() {
        let program = SourceText::new(COUNT_UP);
        let backend = scripted(&["have you tried turning it off and on again"]);
        let h = harness();
        let r = annotate(&program, &backend, &h, &SearchConfig::default(), 5).unwrap();
        assert_eq!(r.trace.final_status, FinalStatus::Exhausted);
        assert_eq!(r.trace.iterations.len(), 5);
        assert!(r.trace.iterations.iter().all(|it| it.accepted.is_none()));
        assert_eq!(r.program.content, COUNT_UP);
    }

    #[test]
    fn stop_on_stall_ends_after_one_stalled_round() {
        let program = SourceText::new(COUNT_UP);
        let backend = scripted(&["invariant i == i + 1"]);
        let h = harness();
        let cfg = SearchConfig { stop_on_stall: true, ..SearchConfig::default() };
        let r = annotate(&program, &backend, &h, &cfg, 5).unwrap();
        assert_eq!(r.trace.final_status, FinalStatus::StalledNoAcceptance);
        assert_eq!(r.trace.iterations.len(), 1);
    }

    #[test]
    fn earlier_candidate_wins_even_when_both_acceptable() {
        let program = SourceText::new(COUNT_UP);
        // Both candidates are acceptable (neither regresses); the first
        // proposed must be chosen.
        let backend = scripted(&["invariant 0 <= i", "invariant i <= n"]);
        let h = harness();
        let cfg = SearchConfig { max_iterations: 1, ..SearchConfig::default() };
        let r = annotate(&program, &backend, &h, &cfg, 5).unwrap();
        let edit = r.trace.iterations[0].accepted.as_ref().unwrap();
        assert_eq!(edit.annotation.text, "invariant 0 <= i");
    }

    #[test]
    fn present_candidates_are_skipped_not_retried() {
        let with_partial = COUNT_UP.replace(
            "  while i < n\n",
            "  while i < n\n    invariant i <= n\n",
        );
        let program = SourceText::new(with_partial);
        let backend = scripted(&["invariant i <= n"]);
        let h = harness();
        let cfg = SearchConfig { max_iterations: 2, ..SearchConfig::default() };
        let r = annotate(&program, &backend, &h, &cfg, 5).unwrap();
        // countUp with the invariant already verifies, so the search ends
        // before proposing; force the interesting case with a harder file.
        assert_eq!(r.trace.final_status, FinalStatus::FullyVerified);

        // A program that does not verify and whose only proposal is
        // already present: every round stalls with the candidate parked in
        // `already_present`.
        let unprovable = "method wrong(n: nat) returns (i: nat)\n  ensures i == n + 1\n{\n  i := 0;\n  while i < n\n    invariant i <= n\n  {\n    i := i + 1;\n  }\n}\n";
        let program = SourceText::new(unprovable);
        let backend = scripted(&["invariant i <= n"]);
        let r = annotate(&program, &backend, &h, &cfg, 5).unwrap();
        assert_eq!(r.trace.final_status, FinalStatus::Exhausted);
        for it in &r.trace.iterations {
            assert!(it.attempts.is_empty());
            assert_eq!(it.already_present.len(), 1);
        }
    }

    #[test]
    fn strict_progress_rejects_lateral_moves() {
        let program = SourceText::new(COUNT_UP);
        // `invariant 0 <= i` is accepted under the lax rule (no new error,
        // count unchanged) but makes no progress.
        let backend = scripted(&["invariant 0 <= i"]);
        let h = harness();
        let cfg = SearchConfig {
            max_iterations: 1,
            strict_progress: true,
            ..SearchConfig::default()
        };
        let r = annotate(&program, &backend, &h, &cfg, 5).unwrap();
        assert!(r.trace.iterations[0].accepted.is_none());
        assert_eq!(r.trace.final_status, FinalStatus::Exhausted);
    }

    #[test]
    fn trace_is_deterministic_across_worker_counts() {
        let program = SourceText::new(COUNT_UP);
        let mk = |workers: usize| {
            let cfg = VerifierConfig {
                executable: minidafny::locate::binary(),
                time_limit_secs: 10,
                extra_args: vec![],
                max_workers: workers,
            };
            let h = Harness::new(cfg).unwrap();
            let backend = scripted(&["invariant x must go", "invariant i <= n", "assert i >= 0;"]);
            annotate(&program, &backend, &h, &SearchConfig::default(), 5).unwrap()
        };
        let a = mk(1);
        let b = mk(4);
        assert_eq!(a.program, b.program);
        // Worker count is part of the config echo; compare everything else.
        let mut ta = a.trace.redacted();
        let mut tb = b.trace.redacted();
        ta.config.max_workers = 0;
        tb.config.max_workers = 0;
        assert_eq!(ta, tb);
    }

    #[test]
    fn trace_counts_verifier_calls() {
        let program = SourceText::new(COUNT_UP);
        let backend = scripted(&["invariant i <= n"]);
        let h = harness();
        let r = annotate(&program, &backend, &h, &SearchConfig::default(), 5).unwrap();
        // 1 baseline + one per grid cell in the single iteration.
        let grid: u64 = r.trace.iterations.iter().map(|it| it.attempts.len() as u64).sum();
        assert_eq!(r.trace.verifier_calls, 1 + grid);
        assert!(grid >= 1);
    }
}
