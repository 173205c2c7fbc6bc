//! Corpus evaluation: strip annotations, re-annotate via search, report.
//!
//! A test file enters the evaluation set only if its stripped form fails
//! to verify — files that verify without annotations measure nothing. The
//! headline number is the fraction of evaluation-set files the search
//! brings to full verification.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proposer::CompletionBackend;
use crate::search::{annotate, FinalStatus, SearchConfig, SearchError, SearchTrace};
use crate::text::{parse, strip_all_annotations, SourceText};
use crate::verifier::{Harness, VerificationStatus, VerifierError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("could not read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Verifier(#[from] VerifierError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// `.dfy` files under `dir`, relative paths, sorted.
pub fn dfy_files(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut files = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| EvalError::Read {
            path: dir.display().to_string(),
            source: e.into(),
        })?;
        if entry.file_type().is_file()
            && entry.path().extension().is_some_and(|x| x == "dfy")
        {
            let rel = entry
                .path()
                .strip_prefix(dir)
                .expect("walkdir yields children of its root")
                .to_path_buf();
            files.push(rel);
        }
    }
    files.sort();
    Ok(files)
}

/// One file processed by `strip_corpus`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripRow {
    pub file: String,
    pub annotations_removed: usize,
    /// Corpus hygiene: did the file verify as given? `None` when
    /// stripping ran without a verifier.
    pub original_verifies: Option<bool>,
    /// Does the stripped copy still fully verify — and so would be
    /// excluded from an evaluation set? `None` without a verifier.
    pub verifies_after_strip: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripReport {
    pub rows: Vec<StripRow>,
    pub total_annotations_removed: usize,
}

/// Copy `input_dir`'s `.dfy` files into `output_dir` with every
/// annotation removed, preserving relative paths. With a harness, each
/// row also reports whether the original and the stripped copy verify;
/// an unverifiable original is flagged but still stripped.
pub fn strip_corpus(
    input_dir: &Path,
    output_dir: &Path,
    harness: Option<&Harness>,
) -> Result<StripReport, EvalError> {
    let mut rows = Vec::new();
    for rel in dfy_files(input_dir)? {
        let src_path = input_dir.join(&rel);
        let content = std::fs::read_to_string(&src_path).map_err(|source| EvalError::Read {
            path: src_path.display().to_string(),
            source,
        })?;
        let source = SourceText::with_path(content, rel.display().to_string());
        let (stripped, removed) = strip_all_annotations(&source);
        let dst_path = output_dir.join(&rel);
        if let Some(dir) = dst_path.parent() {
            std::fs::create_dir_all(dir).map_err(|source| EvalError::Write {
                path: dir.display().to_string(),
                source,
            })?;
        }
        std::fs::write(&dst_path, &stripped.content).map_err(|source| EvalError::Write {
            path: dst_path.display().to_string(),
            source,
        })?;
        let verdict = |text: &SourceText| -> Result<Option<bool>, EvalError> {
            match harness {
                Some(h) => Ok(Some(
                    h.verify(text)?.status == VerificationStatus::FullyVerified,
                )),
                None => Ok(None),
            }
        };
        rows.push(StripRow {
            file: rel.display().to_string(),
            annotations_removed: removed.len(),
            original_verifies: verdict(&source)?,
            verifies_after_strip: verdict(&stripped)?,
        });
    }
    let total = rows.iter().map(|r| r.annotations_removed).sum();
    Ok(StripReport { rows, total_annotations_removed: total })
}

/// One file's evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub file: String,
    pub baseline: VerificationStatus,
    /// True when the file verified as given and was excluded from the
    /// evaluation set.
    pub excluded: bool,
    pub success: bool,
    pub final_status: Option<FinalStatus>,
    pub iterations_used: usize,
    pub annotations_added: usize,
    pub trace: Option<SearchTrace>,
}

/// Whole-corpus evaluation result. Identities: `eval_set_size ==
/// total_files - excluded`, `successes <= eval_set_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub total_files: usize,
    pub excluded_verify_without_annotations: usize,
    pub eval_set_size: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub rows: Vec<EvalRow>,
    pub backend: String,
    pub verifier_version: Option<String>,
}

impl EvalReport {
    /// Copy with per-file wall times zeroed, for comparisons across runs.
    pub fn redacted(&self) -> EvalReport {
        let mut r = self.clone();
        for row in &mut r.rows {
            if let Some(t) = &mut row.trace {
                *t = t.redacted();
            }
        }
        r
    }
}

/// Evaluate every `.dfy` file under `dir` (already stripped or not):
/// verify as-is, exclude files that already pass, then search. Files are
/// processed in path order; the verifier's worker cap still parallelises
/// each search's candidate grid.
pub fn eval_corpus(
    dir: &Path,
    backend: &dyn CompletionBackend,
    harness: &Harness,
    search: &SearchConfig,
    k: u32,
) -> Result<EvalReport, EvalError> {
    let mut rows = Vec::new();
    let mut excluded = 0usize;
    let mut successes = 0usize;
    for rel in dfy_files(dir)? {
        let path = dir.join(&rel);
        let content = std::fs::read_to_string(&path).map_err(|source| EvalError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let source = SourceText::with_path(content, rel.display().to_string());
        let baseline = harness.verify(&source)?;
        if baseline.status == VerificationStatus::FullyVerified {
            excluded += 1;
            rows.push(EvalRow {
                file: rel.display().to_string(),
                baseline: baseline.status,
                excluded: true,
                success: false,
                final_status: None,
                iterations_used: 0,
                annotations_added: 0,
                trace: None,
            });
            continue;
        }
        let result = annotate(&source, backend, harness, search, k)?;
        let success = result.trace.final_status == FinalStatus::FullyVerified;
        if success {
            successes += 1;
        }
        let added = parse(&result.program).annotations.len()
            - parse(&source).annotations.len();
        rows.push(EvalRow {
            file: rel.display().to_string(),
            baseline: baseline.status,
            excluded: false,
            success,
            final_status: Some(result.trace.final_status),
            iterations_used: result.trace.iterations.len(),
            annotations_added: added,
            trace: Some(result.trace),
        });
    }
    let total_files = rows.len();
    let eval_set_size = total_files - excluded;
    let success_rate =
        if eval_set_size == 0 { 0.0 } else { successes as f64 / eval_set_size as f64 };
    Ok(EvalReport {
        total_files,
        excluded_verify_without_annotations: excluded,
        eval_set_size,
        successes,
        success_rate,
        rows,
        backend: backend.describe(),
        verifier_version: harness.version(),
    })
}

/// Fixed-width text table for terminals.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let width = report
        .rows
        .iter()
        .map(|r| r.file.len())
        .chain(std::iter::once("FILE".len()))
        .max()
        .unwrap_or(4);
    out.push_str(&format!(
        "{:<width$}  {:<10}  {:<9}  {:>5}  {:>5}\n",
        "FILE", "RESULT", "BASELINE", "ITERS", "ADDED",
    ));
    for r in &report.rows {
        let result = if r.excluded {
            "excluded".to_string()
        } else if r.success {
            "success".to_string()
        } else {
            "failure".to_string()
        };
        let baseline = match r.baseline {
            VerificationStatus::FullyVerified => "verifies".to_string(),
            VerificationStatus::VerificationErrors(n) => format!("{n} errors"),
            VerificationStatus::ParseOrResolutionError => "rejected".to_string(),
            VerificationStatus::Timeout => "timeout".to_string(),
            VerificationStatus::ToolFailure => "tool-fail".to_string(),
        };
        out.push_str(&format!(
            "{:<width$}  {:<10}  {:<9}  {:>5}  {:>5}\n",
            r.file, result, baseline, r.iterations_used, r.annotations_added,
        ));
    }
    out.push_str(&format!(
        "\n{} files, {} excluded (verify without annotations), eval set {}: {} succeeded, success rate {:.3}\n",
        report.total_files,
        report.excluded_verify_without_annotations,
        report.eval_set_size,
        report.successes,
        report.success_rate,
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposer::{Script, ScriptedBackend};
    use crate::verifier::VerifierConfig;

    fn harness() -> Harness {
        Harness::new(VerifierConfig {
            executable: minidafny::locate::binary(),
            time_limit_secs: 10,
            extra_args: vec![],
            max_workers: 4,
        })
        .unwrap()
    }

    const ANNOTATED: &str = "method countUp(n: nat) returns (i: nat)\n  ensures i == n\n{\n  i := 0;\n  while i < n\n    invariant i <= n\n  {\n    i := i + 1;\n  }\n}\n";
    const TRIVIAL: &str = "method nop() {\n}\n";

    fn write_corpus(dir: &Path) {
        std::fs::write(dir.join("a_count_up.dfy"), ANNOTATED).unwrap();
        std::fs::write(dir.join("b_nop.dfy"), TRIVIAL).unwrap();
    }

    #[test]
    fn strip_corpus_removes_annotations_and_preserves_layout() {
        let input = tempfile::tempdir().unwrap();
        let output = tempfile::tempdir().unwrap();
        write_corpus(input.path());
        let report = strip_corpus(input.path(), output.path(), None).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.total_annotations_removed, 1);
        assert!(report.rows.iter().all(|r| r.original_verifies.is_none()));
        let stripped = std::fs::read_to_string(output.path().join("a_count_up.dfy")).unwrap();
        assert!(!stripped.contains("invariant"));
        assert_eq!(stripped, ANNOTATED.replace("    invariant i <= n\n", ""));
        let untouched = std::fs::read_to_string(output.path().join("b_nop.dfy")).unwrap();
        assert_eq!(untouched, TRIVIAL);
    }

    #[test]
    fn strip_corpus_with_verifier_reports_both_verdicts() {
        let input = tempfile::tempdir().unwrap();
        let output = tempfile::tempdir().unwrap();
        write_corpus(input.path());
        let h = harness();
        let report = strip_corpus(input.path(), output.path(), Some(&h)).unwrap();
        let count_up = &report.rows[0];
        assert_eq!(count_up.original_verifies, Some(true));
        assert_eq!(count_up.verifies_after_strip, Some(false));
        let nop = &report.rows[1];
        assert_eq!(nop.original_verifies, Some(true));
        assert_eq!(nop.verifies_after_strip, Some(true));
    }

    #[test]
    fn eval_excludes_files_that_verify_stripped_and_counts_successes() {
        let input = tempfile::tempdir().unwrap();
        let stripped = tempfile::tempdir().unwrap();
        write_corpus(input.path());
        strip_corpus(input.path(), stripped.path(), None).unwrap();
        let backend = ScriptedBackend::from_script(Script {
            default: vec!["invariant i <= n".into()],
            ..Script::default()
        });
        let h = harness();
        let report =
            eval_corpus(stripped.path(), &backend, &h, &SearchConfig::default(), 5).unwrap();
        assert_eq!(report.total_files, 2);
        assert_eq!(report.excluded_verify_without_annotations, 1);
        assert_eq!(report.eval_set_size, 1);
        assert_eq!(report.successes, 1);
        assert_eq!(report.success_rate, 1.0);
        let row = report.rows.iter().find(|r| r.file.contains("count_up")).unwrap();
        assert!(row.success);
        assert_eq!(row.annotations_added, 1);
        let table = render_table(&report);
        assert!(table.contains("success rate 1.000"));
        assert!(table.contains("excluded"));
    }

    #[test]
    fn failed_search_is_a_failure_row_not_an_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("hard.dfy"),
            "method hard(n: nat) returns (i: nat)\n  ensures i == n\n{\n  i := 0;\n  while i < n\n  {\n    i := i + 1;\n  }\n}\n",
        )
        .unwrap();
        let backend = ScriptedBackend::from_script(Script {
            default: vec!["invariant helpful nonsense".into()],
            ..Script::default()
        });
        let h = harness();
        let cfg = SearchConfig { max_iterations: 2, ..SearchConfig::default() };
        let report = eval_corpus(dir.path(), &backend, &h, &cfg, 5).unwrap();
        assert_eq!(report.eval_set_size, 1);
        assert_eq!(report.successes, 0);
        assert_eq!(report.success_rate, 0.0);
        assert_eq!(report.rows[0].final_status, Some(FinalStatus::Exhausted));
    }

    #[test]
    fn empty_directory_yields_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ScriptedBackend::empty();
        let h = harness();
        let report =
            eval_corpus(dir.path(), &backend, &h, &SearchConfig::default(), 5).unwrap();
        assert_eq!(report.total_files, 0);
        assert_eq!(report.success_rate, 0.0);
    }
}
