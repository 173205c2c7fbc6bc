//! Dataset extraction over the bundled corpus with the bundled verifier:
//! the pair count equals the annotation count, JSONL export re-reads
//! losslessly, and the sidecar manifest accounts for every example.

use std::path::PathBuf;

use scribe_core::extract::{
    export_jsonl, extract_corpus, extract_pairs, read_jsonl, sidecar_manifest_path,
    DatasetManifest, MASKING_CONTRACT,
};
use scribe_core::text::{parse, SourceText};
use scribe_core::verifier::{Harness, VerifierConfig};

fn corpus_files() -> Vec<PathBuf> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "dfy"))
        .collect();
    files.sort();
    files
}

fn harness() -> Harness {
    Harness::new(VerifierConfig {
        executable: minidafny::locate::binary(),
        time_limit_secs: 10,
        extra_args: vec![],
        max_workers: 4,
    })
    .unwrap()
}

#[test]
fn pair_count_matches_annotation_count_per_file() {
    for path in corpus_files() {
        let source = SourceText::with_path(
            std::fs::read_to_string(&path).unwrap(),
            path.display().to_string(),
        );
        let annotations = parse(&source).annotations.len();
        let pairs = extract_pairs(&source);
        assert_eq!(pairs.len(), annotations, "{}", path.display());
        // Removal steps count up from 1; every prompt asks for exactly the
        // removed annotation and never contains it.
        for (i, pair) in pairs.iter().enumerate() {
            assert_eq!(pair.meta.removal_step, i + 1);
            let program = pair.prompt.split_once("Program:\n").unwrap().1;
            assert!(!program.contains(&pair.completion), "{}", path.display());
        }
    }
}

#[test]
fn corpus_extraction_yields_31_examples_and_a_consistent_manifest() {
    let extraction = extract_corpus(&corpus_files(), true, &harness()).unwrap();
    assert_eq!(extraction.examples.len(), 31);

    let m = &extraction.manifest;
    assert_eq!(m.files_scanned, 10);
    assert_eq!(m.files_used, 10);
    assert!(m.skipped.is_empty(), "{:?}", m.skipped);
    assert_eq!(m.example_count, 31);
    assert_eq!(m.counts_by_kind.values().sum::<usize>(), 31);
    assert_eq!(m.counts_by_kind["invariant"], 23);
    assert_eq!(m.counts_by_kind["assert"], 2);
    assert_eq!(m.counts_by_kind["decreases"], 6);
    assert!(m.unique_completions <= 31);
    assert!(m.verifier_version.as_deref().unwrap_or("").contains("MiniDafny"));
    assert_eq!(m.masking, MASKING_CONTRACT);
}

#[test]
fn jsonl_export_round_trips_losslessly() {
    let extraction = extract_corpus(&corpus_files(), true, &harness()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("train.jsonl");
    export_jsonl(&extraction.examples, &extraction.manifest, &out).unwrap();

    let back = read_jsonl(&out).unwrap();
    assert_eq!(back, extraction.examples);

    let sidecar = sidecar_manifest_path(&out);
    let manifest: DatasetManifest =
        serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(manifest, extraction.manifest);
}
