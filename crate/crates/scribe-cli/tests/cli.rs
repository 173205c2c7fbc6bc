//! End-to-end tests of the `scribe` binary: subcommand behaviour, report
//! files, configuration precedence, and the exit-code contract.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scribe_core::proposer::Script;
use scribe_core::text::{parse, SourceText};

const COUNT_UP_PARTIAL: &str = "method countUp(n: nat) returns (i: nat)\n  ensures i == n\n{\n  i := 0;\n  while i < n\n  {\n    i := i + 1;\n  }\n}\n";

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// The binary under test, pointed at the bundled verifier and scrubbed of
/// ambient configuration.
fn scribe() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_scribe"));
    cmd.env("DAFNY_EXE", minidafny::locate::binary());
    for (key, _) in std::env::vars() {
        if key.starts_with("SCRIBE_") {
            cmd.env_remove(&key);
        }
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("scribe binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Script replaying each corpus file's own annotations (reversed, so the
/// search must retry candidates across iterations), keyed by method name.
fn oracle_script() -> Script {
    let mut script = Script::default();
    for entry in std::fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|x| x != "dfy") {
            continue;
        }
        let source = SourceText::new(std::fs::read_to_string(&path).unwrap());
        let unit = parse(&source);
        let key = format!("method {}(", unit.methods[0].name);
        let mut anns: Vec<String> =
            unit.annotations.iter().map(|a| a.annotation.text.clone()).collect();
        anns.reverse();
        script.by_path.insert(key, anns);
    }
    script
}

#[test]
fn strip_reports_counts_and_verification_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("stripped");
    let report_path = dir.path().join("strip.json");
    let out = run(scribe()
        .arg("strip")
        .arg(corpus_dir())
        .arg(&out_dir)
        .arg("--report")
        .arg(&report_path));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("10 file(s), 31 annotation(s) removed"));

    let report = read_json(&report_path);
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["kind"], "strip_report");
    assert_eq!(report["report"]["total_annotations_removed"], 31);
    for row in report["report"]["rows"].as_array().unwrap() {
        assert_eq!(row["original_verifies"], true, "{row}");
        assert_eq!(row["verifies_after_strip"], false, "{row}");
    }
}

#[test]
fn eval_with_an_oracle_script_recovers_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let stripped = dir.path().join("stripped");
    let out = run(scribe()
        .arg("strip")
        .arg(corpus_dir())
        .arg(&stripped)
        .arg("--no-verify"));
    assert!(out.status.success(), "{}", stderr(&out));

    let script_path = dir.path().join("oracle.json");
    std::fs::write(&script_path, serde_json::to_string(&oracle_script()).unwrap()).unwrap();
    let report_path = dir.path().join("eval.json");
    let out = run(scribe()
        .arg("eval")
        .arg(&stripped)
        .arg("--scripted")
        .arg(&script_path)
        .arg("--report")
        .arg(&report_path));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("success rate 1.000"), "{}", stdout(&out));

    let report = read_json(&report_path);
    assert_eq!(report["kind"], "eval_report");
    assert_eq!(report["report"]["eval_set_size"], 10);
    assert_eq!(report["report"]["successes"], 10);
    assert_eq!(report["report"]["success_rate"], 1.0);
}

#[test]
fn annotate_leaves_a_verifying_file_alone() {
    let file = corpus_dir().join("01_max_array.dfy");
    let out = run(scribe().arg("annotate").arg(&file));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("already verified"));
    assert!(stderr(&out).contains("0 LLM calls"));
    assert_eq!(stdout(&out), std::fs::read_to_string(&file).unwrap());
}

#[test]
fn annotate_completes_a_file_and_echoes_config_in_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("count_up.dfy");
    std::fs::write(&file, COUNT_UP_PARTIAL).unwrap();
    let script_path = dir.path().join("script.json");
    std::fs::write(
        &script_path,
        serde_json::to_string(&Script {
            default: vec!["invariant i <= n".into()],
            ..Script::default()
        })
        .unwrap(),
    )
    .unwrap();
    let out_file = dir.path().join("annotated.dfy");
    let trace_path = dir.path().join("trace.json");
    let out = run(scribe()
        .arg("annotate")
        .arg(&file)
        .arg("--scripted")
        .arg(&script_path)
        .arg("--k")
        .arg("4")
        .arg("--output")
        .arg(&out_file)
        .arg("--trace")
        .arg(&trace_path));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(std::fs::read_to_string(&out_file).unwrap().contains("invariant i <= n"));

    let trace = read_json(&trace_path);
    assert_eq!(trace["schema_version"], 1);
    assert_eq!(trace["kind"], "search_trace");
    assert_eq!(trace["report"]["config"]["k"], 4);
}

#[test]
fn unfinished_search_exits_one_but_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("count_up.dfy");
    std::fs::write(&file, COUNT_UP_PARTIAL).unwrap();
    let script_path = dir.path().join("empty.json");
    std::fs::write(&script_path, "{}").unwrap();
    let trace_path = dir.path().join("trace.json");
    let out = run(scribe()
        .arg("annotate")
        .arg(&file)
        .arg("--scripted")
        .arg(&script_path)
        .arg("--trace")
        .arg(&trace_path));
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("did not reach full verification"));
    assert!(trace_path.exists());
}

#[test]
fn flags_beat_environment_beats_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("count_up.dfy");
    std::fs::write(&file, COUNT_UP_PARTIAL).unwrap();
    let script_path = dir.path().join("script.json");
    std::fs::write(
        &script_path,
        serde_json::to_string(&Script {
            default: vec!["invariant i <= n".into()],
            ..Script::default()
        })
        .unwrap(),
    )
    .unwrap();
    let config_path = dir.path().join("scribe.toml");
    std::fs::write(&config_path, "[proposer]\nk = 2\n").unwrap();

    let trace_k = |extra: &dyn Fn(&mut Command)| -> i64 {
        let trace_path = dir.path().join("trace.json");
        let mut cmd = scribe();
        cmd.arg("annotate")
            .arg(&file)
            .arg("--config")
            .arg(&config_path)
            .arg("--scripted")
            .arg(&script_path)
            .arg("--trace")
            .arg(&trace_path);
        extra(&mut cmd);
        let out = run(&mut cmd);
        assert!(out.status.success(), "{}", stderr(&out));
        read_json(&trace_path)["report"]["config"]["k"].as_i64().unwrap()
    };

    assert_eq!(trace_k(&|_| {}), 2, "file value applies");
    assert_eq!(
        trace_k(&|c| {
            c.env("SCRIBE_K", "3");
        }),
        3,
        "environment beats file"
    );
    assert_eq!(
        trace_k(&|c| {
            c.env("SCRIBE_K", "3").arg("--k").arg("4");
        }),
        4,
        "flag beats environment"
    );
}

#[test]
fn exit_codes_distinguish_config_verifier_and_transport_errors() {
    // Unknown backend kind: configuration error.
    let out = run(scribe().arg("eval").arg(corpus_dir()).arg("--backend").arg("bogus"));
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error[config]"));

    // Verifier executable that cannot launch.
    let out = run(scribe()
        .arg("annotate")
        .arg(corpus_dir().join("01_max_array.dfy"))
        .env("DAFNY_EXE", "/nonexistent/verifier"));
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[verifier-missing]"));

    // Unreachable completion endpoint on a file that needs proposals.
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("count_up.dfy");
    std::fs::write(&file, COUNT_UP_PARTIAL).unwrap();
    let out = run(scribe()
        .arg("annotate")
        .arg(&file)
        .arg("--endpoint")
        .arg("http://127.0.0.1:9/v1/chat/completions")
        .arg("--model")
        .arg("m"));
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
    assert!(stderr(&out).contains("error[transport]"));
}

#[test]
fn extract_writes_one_line_per_annotation_plus_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("data/train.jsonl");
    let out = run(scribe()
        .arg("extract")
        .arg(corpus_dir())
        .arg("--output")
        .arg(&out_path));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("31 example(s) from 10 file(s)"));

    let body = std::fs::read_to_string(&out_path).unwrap();
    assert_eq!(body.lines().count(), 31);
    let manifest = read_json(&dir.path().join("data/train.jsonl.manifest.json"));
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["example_count"], 31);
}

#[test]
fn synthesize_grows_exports_and_revalidates_a_graph() {
    let dir = tempfile::tempdir().unwrap();
    let schedule_path = dir.path().join("schedule.json");
    std::fs::write(
        &schedule_path,
        r#"{
  "seed": 7,
  "rounds": [
    {"editor": "idea_proposer", "fanout": 1, "selection_limit": 1},
    {"editor": "idea_implementer", "fanout": 1, "selection_limit": 1},
    {"editor": "annotator", "fanout": 1, "selection_limit": 1}
  ]
}"#,
    )
    .unwrap();
    let mut script = Script::default();
    script
        .by_path
        .insert("Existing ideas:".into(), vec!["count up to n and return the counter".into()]);
    script.by_path.insert("count up to n".into(), vec![COUNT_UP_PARTIAL.into()]);
    script.by_path.insert(
        "Annotated program:".into(),
        vec![COUNT_UP_PARTIAL.replace("  while i < n\n", "  while i < n\n    invariant i <= n\n")],
    );
    let script_path = dir.path().join("script.json");
    std::fs::write(&script_path, serde_json::to_string(&script).unwrap()).unwrap();

    let store = dir.path().join("store");
    let export_path = dir.path().join("synth.jsonl");
    let out = run(scribe()
        .arg("synthesize")
        .arg("--schedule")
        .arg(&schedule_path)
        .arg("--store")
        .arg(&store)
        .arg("--scripted")
        .arg(&script_path)
        .arg("--export")
        .arg(&export_path));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("3 round(s) run"), "{}", stdout(&out));
    assert!(store.join("graph.json").exists());
    assert_eq!(std::fs::read_to_string(&export_path).unwrap().lines().count(), 1);

    let out = run(scribe()
        .arg("synthesize")
        .arg("--schedule")
        .arg(&schedule_path)
        .arg("--store")
        .arg(&store)
        .arg("--scripted")
        .arg(&script_path)
        .arg("--revalidate"));
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("0 discrepancy(ies)"), "{}", stdout(&out));
}
