//! Training-pair extraction from annotated programs.
//!
//! An annotated program with N annotations yields N (prompt, completion)
//! pairs by repeatedly removing the *last* annotation: the i-th removal
//! pairs the program carrying the first N-i annotations with the removed
//! one as the completion. Prompts use the same rendering the proposer
//! uses, so extracted pairs and inference-time prompts line up token for
//! token.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::proposer::render_prompt;
use crate::text::{parse, remove_annotation, SourceText};
use crate::verifier::{Harness, VerificationStatus};

/// Where a training example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// Origin path (or other identifier) of the annotated program.
    pub source: Option<String>,
    /// Index of the removed annotation in the file's textual order.
    pub ordinal: usize,
    /// 1-based removal step; step 1 removes the last annotation.
    pub removal_step: usize,
}

/// One supervised pair. The intended training contract: the loss is
/// computed on completion tokens only; prompt tokens are context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub prompt: String,
    pub completion: String,
    pub meta: Provenance,
}

/// Sidecar manifest written next to an exported dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub files_scanned: usize,
    pub files_used: usize,
    pub skipped: Vec<SkippedFile>,
    pub example_count: usize,
    /// Examples per annotation keyword.
    pub counts_by_kind: BTreeMap<String, usize>,
    /// Distinct completions after whitespace normalisation.
    pub unique_completions: usize,
    pub verifier_version: Option<String>,
    pub created_at: String,
    /// Statement of the loss-masking contract consumers must follow.
    pub masking: String,
}

/// The statement recorded in every manifest's `masking` field.
pub const MASKING_CONTRACT: &str = "Compute the training loss on completion tokens only; prompt tokens are context and receive no loss.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum ExtractError {
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
    #[error("malformed dataset line {line}: {source}")]
    Jsonl {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Verifier(#[from] crate::verifier::VerifierError),
}

/// Extract every training pair from one annotated program.
///
/// Pairs come out in removal order: the first pair's prompt carries all
/// but the last annotation, the final pair's prompt carries none.
pub fn extract_pairs(program: &SourceText) -> Vec<TrainingExample> {
    let mut examples = Vec::new();
    let mut current = program.clone();
    let mut step = 1usize;
    loop {
        let unit = parse(&current);
        let Some(last) = unit.annotations.last().cloned() else {
            break;
        };
        let Ok(removed) = remove_annotation(&current, &last) else {
            break; // overlapping spans; stop rather than loop
        };
        examples.push(TrainingExample {
            prompt: render_prompt(&removed.content).text,
            completion: last.annotation.text.clone(),
            meta: Provenance {
                source: program.path.clone(),
                ordinal: last.ordinal,
                removal_step: step,
            },
        });
        current = removed;
        step += 1;
    }
    examples
}

/// Result of scanning a set of files.
#[derive(Debug)]
pub struct CorpusExtraction {
    pub examples: Vec<TrainingExample>,
    pub manifest: DatasetManifest,
}

/// Extract pairs from every file, in path order. With `filter_verified`,
/// files that do not fully verify are skipped (and recorded as skipped);
/// unreadable files are always recorded rather than failing the run.
pub fn extract_corpus(
    paths: &[PathBuf],
    filter_verified: bool,
    harness: &Harness,
) -> Result<CorpusExtraction, ExtractError> {
    let mut paths: Vec<&PathBuf> = paths.iter().collect();
    paths.sort();
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let mut files_used = 0usize;
    for path in &paths {
        let display = path.display().to_string();
        let content = match std::fs::read_to_string(path) {
            Ok(c) => c,
            Err(e) => {
                skipped.push(SkippedFile { path: display, reason: format!("unreadable: {e}") });
                continue;
            }
        };
        let source = SourceText::with_path(content, display.clone());
        if filter_verified {
            let outcome = harness.verify(&source)?;
            if outcome.status != VerificationStatus::FullyVerified {
                skipped.push(SkippedFile {
                    path: display,
                    reason: format!("does not fully verify: {:?}", outcome.status),
                });
                continue;
            }
        }
        let pairs = extract_pairs(&source);
        if pairs.is_empty() {
            skipped.push(SkippedFile { path: display, reason: "no annotations".into() });
            continue;
        }
        files_used += 1;
        examples.extend(pairs);
    }
    let manifest = build_manifest(
        &examples,
        paths.len(),
        files_used,
        skipped,
        harness.version(),
    );
    Ok(CorpusExtraction { examples, manifest })
}

/// Compute a manifest for a set of examples.
pub fn build_manifest(
    examples: &[TrainingExample],
    files_scanned: usize,
    files_used: usize,
    skipped: Vec<SkippedFile>,
    verifier_version: Option<String>,
) -> DatasetManifest {
    let mut counts_by_kind: BTreeMap<String, usize> = BTreeMap::new();
    let mut unique = std::collections::BTreeSet::new();
    for ex in examples {
        let kind = crate::text::classify_annotation(&ex.completion)
            .map(|a| a.kind.keyword().to_string())
            .unwrap_or_else(|| "other".into());
        *counts_by_kind.entry(kind).or_insert(0) += 1;
        unique.insert(crate::text::normalize_whitespace(&ex.completion));
    }
    DatasetManifest {
        schema_version: 1,
        files_scanned,
        files_used,
        skipped,
        example_count: examples.len(),
        counts_by_kind,
        unique_completions: unique.len(),
        verifier_version,
        created_at: chrono::Utc::now().to_rfc3339(),
        masking: MASKING_CONTRACT.into(),
    }
}

/// Write examples as JSON Lines plus a `<path>.manifest.json` sidecar.
pub fn export_jsonl(
    examples: &[TrainingExample],
    manifest: &DatasetManifest,
    path: &Path,
) -> Result<(), ExtractError> {
    let write_err = |source| ExtractError::Write { path: path.display().to_string(), source };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(write_err)?;
        }
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(write_err)?);
    for ex in examples {
        let line = serde_json::to_string(ex).expect("training examples serialize");
        out.write_all(line.as_bytes()).map_err(write_err)?;
        out.write_all(b"\n").map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;
    let manifest_path = sidecar_manifest_path(path);
    let body = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, body).map_err(|source| ExtractError::Write {
        path: manifest_path.display().to_string(),
        source,
    })?;
    Ok(())
}

/// `dataset.jsonl` → `dataset.jsonl.manifest.json`.
pub fn sidecar_manifest_path(dataset: &Path) -> PathBuf {
    let mut os = dataset.as_os_str().to_os_string();
    os.push(".manifest.json");
    PathBuf::from(os)
}

/// Read a JSONL dataset back; the inverse of [`export_jsonl`].
pub fn read_jsonl(path: &Path) -> Result<Vec<TrainingExample>, ExtractError> {
    let file = std::fs::File::open(path).map_err(|source| ExtractError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let mut examples = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| ExtractError::Read {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line)
            .map_err(|source| ExtractError::Jsonl { line: i + 1, source })?;
        examples.push(ex);
    }
    Ok(examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE_ANNOTATIONS: &str = "method sum(n: nat) returns (s: nat)\n  ensures true\n{\n  s := 0;\n  var i := 0;\n  while i < n\n    invariant i <= n\n    invariant s >= 0\n  {\n    s := s + i;\n    i := i + 1;\n  }\n  assert s >= 0;\n}\n";

    #[test]
    fn pair_count_matches_annotation_count() {
        let src = SourceText::with_path(THREE_ANNOTATIONS, "sum.dfy");
        let pairs = extract_pairs(&src);
        assert_eq!(pairs.len(), 3);
    }

    #[test]
    fn removal_goes_last_first() {
        let src = SourceText::with_path(THREE_ANNOTATIONS, "sum.dfy");
        let pairs = extract_pairs(&src);
        assert_eq!(pairs[0].completion, "assert s >= 0;");
        assert_eq!(pairs[1].completion, "invariant s >= 0");
        assert_eq!(pairs[2].completion, "invariant i <= n");
        assert_eq!(pairs[0].meta.removal_step, 1);
        assert_eq!(pairs[2].meta.removal_step, 3);
        assert_eq!(pairs[0].meta.ordinal, 2);
        assert_eq!(pairs[2].meta.ordinal, 0);
        assert_eq!(pairs[0].meta.source.as_deref(), Some("sum.dfy"));
    }

    #[test]
    fn prompts_nest_and_use_the_standard_rendering() {
        let src = SourceText::new(THREE_ANNOTATIONS);
        let pairs = extract_pairs(&src);
        // First prompt still contains the two earlier annotations, last
        // prompt none. (Look only at the embedded program: the instruction
        // line legitimately mentions the keywords.)
        let program_of = |p: &str| p.split_once("Program:\n").unwrap().1.to_string();
        assert!(program_of(&pairs[0].prompt).contains("invariant s >= 0"));
        assert!(!program_of(&pairs[0].prompt).contains("assert s >= 0;"));
        assert!(!program_of(&pairs[2].prompt).contains("invariant"));
        for p in &pairs {
            assert!(p.prompt.starts_with("Given each Dafny program"));
            assert!(p.prompt.ends_with("Annotation:"));
        }
    }

    #[test]
    fn unannotated_program_yields_nothing() {
        let src = SourceText::new("method m() {\n  var x := 1;\n}\n");
        assert!(extract_pairs(&src).is_empty());
    }

    #[test]
    fn jsonl_round_trips_losslessly() {
        let src = SourceText::with_path(THREE_ANNOTATIONS, "sum.dfy");
        let examples = extract_pairs(&src);
        let manifest = build_manifest(&examples, 1, 1, vec![], Some("MiniDafny 0.1.0".into()));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out/dataset.jsonl");
        export_jsonl(&examples, &manifest, &path).unwrap();
        let back = read_jsonl(&path).unwrap();
        assert_eq!(back, examples);
        let manifest_raw =
            std::fs::read_to_string(sidecar_manifest_path(&path)).unwrap();
        let manifest_back: DatasetManifest = serde_json::from_str(&manifest_raw).unwrap();
        assert_eq!(manifest_back, manifest);
    }

    #[test]
    fn manifest_counts_add_up() {
        let src = SourceText::new(THREE_ANNOTATIONS);
        let examples = extract_pairs(&src);
        let manifest = build_manifest(&examples, 1, 1, vec![], None);
        assert_eq!(manifest.example_count, 3);
        assert_eq!(manifest.counts_by_kind.get("invariant"), Some(&2));
        assert_eq!(manifest.counts_by_kind.get("assert"), Some(&1));
        assert_eq!(manifest.counts_by_kind.values().sum::<usize>(), manifest.example_count);
        assert_eq!(manifest.unique_completions, 3);
        assert_eq!(manifest.masking, MASKING_CONTRACT);
    }

    #[test]
    fn malformed_jsonl_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{not json}\n").unwrap();
        match read_jsonl(&path) {
            Err(ExtractError::Jsonl { line: 1, .. }) => {}
            other => panic!("expected jsonl error, got {other:?}"),
        }
    }
}
