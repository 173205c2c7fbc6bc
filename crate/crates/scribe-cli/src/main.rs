//! `scribe` — verifier-guided annotation tooling for Dafny programs.
//!
//! Subcommands: `annotate` a single file until it verifies, `strip` a
//! corpus of its annotations, `eval` annotation search over a stripped
//! corpus, `extract` supervised training pairs, and `synthesize` new
//! annotated programs through the edit-graph pipeline.
//!
//! Settings resolve as flags > `SCRIBE_*` environment variables > TOML
//! config file > defaults. Exit codes: 0 success, 1 task ran but did not
//! fully succeed, 2 configuration error, 3 verifier not launchable,
//! 4 transport error, 5 internal error.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use scribe_core::config::{self, merge_backend, ConfigError, ScribeConfig};
use scribe_core::eval::{eval_corpus, render_table, strip_corpus};
use scribe_core::extract::{export_jsonl, extract_corpus, sidecar_manifest_path};
use scribe_core::proposer::{build_backend, ProposerError};
use scribe_core::search::{annotate, FinalStatus};
use scribe_core::synth::{
    export_dataset, revalidate, run_pipeline, EditGraph, EditorPrompts, Schedule,
};
use scribe_core::text::SourceText;
use scribe_core::verifier::{Harness, VerifierError, VERIFIER_EXE_ENV};

const EXIT_INCOMPLETE: i32 = 1;
const EXIT_CONFIG: i32 = 2;
const EXIT_VERIFIER_MISSING: i32 = 3;
const EXIT_TRANSPORT: i32 = 4;
const EXIT_INTERNAL: i32 = 5;

#[derive(Parser)]
#[command(name = "scribe", version, about = "Verifier-guided Dafny annotation tooling")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// Flag-level overrides, highest precedence in the configuration stack.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Completions requested per search iteration.
    #[arg(long)]
    k: Option<u32>,
    /// Greedy search iteration cap.
    #[arg(long)]
    max_iterations: Option<u32>,
    /// Per-run verifier time limit in seconds.
    #[arg(long)]
    time_limit: Option<u64>,
    /// Concurrent verifier processes.
    #[arg(long)]
    max_workers: Option<usize>,
    /// Verifier executable (also settable via the DAFNY_EXE variable).
    #[arg(long)]
    verifier: Option<String>,
    /// Proposer backend kind: "http" or "scripted".
    #[arg(long)]
    backend: Option<String>,
    /// Chat-completions endpoint URL (http backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model identifier sent to the endpoint (http backend).
    #[arg(long)]
    model: Option<String>,
    /// Completion script file (scripted backend).
    #[arg(long)]
    scripted: Option<PathBuf>,
    /// Name of the environment variable holding the API key. The key
    /// itself never appears in configuration.
    #[arg(long)]
    api_key_env: Option<String>,
    /// Accept a candidate only if it strictly reduces the error count.
    #[arg(long)]
    strict_progress: bool,
    /// End the search at the first iteration that accepts nothing.
    #[arg(long)]
    stop_on_stall: bool,
    /// Prompt with only the text up to the end of the first failing method.
    #[arg(long)]
    prompt_prefix_only: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Search for annotations until a Dafny file fully verifies.
    Annotate {
        file: PathBuf,
        /// Write the annotated program here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the search trace as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Copy a corpus with every annotation removed.
    Strip {
        input_dir: PathBuf,
        output_dir: PathBuf,
        /// Skip verifying the originals and the stripped copies.
        #[arg(long)]
        no_verify: bool,
        /// Write the strip report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run annotation search over every failing file in a corpus and
    /// report the success rate.
    Eval {
        dir: PathBuf,
        /// Write the evaluation report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Extract prompt/completion training pairs from annotated programs.
    Extract {
        corpus_dir: PathBuf,
        /// Output JSONL path; a `.manifest.json` sidecar is written too.
        #[arg(long)]
        output: PathBuf,
        /// Extract from files even when they do not fully verify.
        #[arg(long)]
        keep_unverified: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Grow (or resume) an edit graph of synthetic annotated programs.
    Synthesize {
        /// Schedule JSON: seed, rounds, budgets.
        #[arg(long)]
        schedule: PathBuf,
        /// Graph store directory (graph.json plus a blobs/ directory).
        #[arg(long)]
        store: PathBuf,
        /// Directory of editor prompt templates (defaults to built-ins).
        #[arg(long)]
        prompts: Option<PathBuf>,
        /// Re-check every stored keep/drop decision instead of growing.
        #[arg(long)]
        revalidate: bool,
        /// After growing, export the graph's training pairs to this JSONL.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

/// Reports are written inside a versioned envelope so downstream readers
/// can detect schema drift.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    report: &'a T,
}

fn write_report<T: Serialize>(path: &Path, kind: &str, report: &T) -> anyhow::Result<()> {
    let body = serde_json::to_string_pretty(&Envelope { schema_version: 1, kind, report })
        .expect("reports serialize");
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn apply_overrides(cfg: &mut ScribeConfig, o: &Overrides) -> Result<(), ConfigError> {
    if let Some(x) = o.k {
        cfg.proposer.k = x;
    }
    if let Some(x) = o.max_iterations {
        cfg.search.max_iterations = x;
    }
    if let Some(x) = o.time_limit {
        cfg.verifier.time_limit_secs = x;
    }
    if let Some(x) = o.max_workers {
        cfg.verifier.max_workers = x;
    }
    if let Some(x) = &o.verifier {
        cfg.verifier.executable = x.into();
    }
    if o.strict_progress {
        cfg.search.strict_progress = true;
    }
    if o.stop_on_stall {
        cfg.search.stop_on_stall = true;
    }
    if o.prompt_prefix_only {
        cfg.search.prompt_prefix_only = true;
    }
    if o.backend.is_some()
        || o.endpoint.is_some()
        || o.model.is_some()
        || o.scripted.is_some()
        || o.api_key_env.is_some()
    {
        cfg.proposer.backend = merge_backend(
            &cfg.proposer.backend,
            o.backend.as_deref(),
            o.endpoint.clone(),
            o.model.clone(),
            o.api_key_env.clone(),
            o.scripted.as_ref().map(|p| p.display().to_string()),
        )?;
    }
    config::validate(cfg)
}

/// When the verifier is left at its default bare name, is not overridden
/// by environment, and a binary of that name sits next to this
/// executable, prefer the sibling — `cargo build` drops both into the
/// same directory.
fn discover_sibling_verifier(cfg: &mut ScribeConfig) {
    if cfg.verifier.executable.components().count() != 1 {
        return; // an explicit path stays as given
    }
    if std::env::var_os(VERIFIER_EXE_ENV).is_some() {
        return;
    }
    let Ok(me) = std::env::current_exe() else { return };
    let Some(dir) = me.parent() else { return };
    let name = format!(
        "{}{}",
        cfg.verifier.executable.display(),
        std::env::consts::EXE_SUFFIX
    );
    let sibling = dir.join(name);
    if sibling.is_file() {
        cfg.verifier.executable = sibling;
    }
}

fn load_config(file: Option<&Path>, overrides: &Overrides) -> Result<ScribeConfig, ConfigError> {
    let mut cfg = config::load(file)?;
    apply_overrides(&mut cfg, overrides)?;
    discover_sibling_verifier(&mut cfg);
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Annotate { file, output, trace, overrides } => {
            let cfg = load_config(cli.config.as_deref(), &overrides)?;
            let harness = Harness::new(cfg.verifier.clone())?;
            let backend = build_backend(&cfg.proposer)?;
            let content = std::fs::read_to_string(&file)
                .with_context(|| format!("reading {}", file.display()))?;
            let source = SourceText::with_path(content, file.display().to_string());
            let result =
                annotate(&source, backend.as_ref(), &harness, &cfg.search, cfg.proposer.k)?;

            if let Some(path) = &trace {
                write_report(path, "search_trace", &result.trace)?;
            }
            match &output {
                Some(path) => std::fs::write(path, &result.program.content)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", result.program.content),
            }
            let llm_calls = result.trace.iterations.len();
            match result.trace.final_status {
                FinalStatus::FullyVerified if llm_calls == 0 => {
                    eprintln!("already verified; no annotations needed (0 LLM calls)");
                    Ok(0)
                }
                FinalStatus::FullyVerified => {
                    eprintln!(
                        "verified after {llm_calls} iteration(s), {} verifier call(s)",
                        result.trace.verifier_calls
                    );
                    Ok(0)
                }
                status => {
                    eprintln!(
                        "did not reach full verification (final status {status:?} after {llm_calls} iteration(s))"
                    );
                    Ok(EXIT_INCOMPLETE)
                }
            }
        }

        Command::Strip { input_dir, output_dir, no_verify, report, overrides } => {
            let cfg = load_config(cli.config.as_deref(), &overrides)?;
            let harness = if no_verify {
                None
            } else {
                Some(Harness::new(cfg.verifier.clone())?)
            };
            let strip = strip_corpus(&input_dir, &output_dir, harness.as_ref())?;
            for row in &strip.rows {
                let verdict = match (row.original_verifies, row.verifies_after_strip) {
                    (Some(false), _) => "  [original does not verify]",
                    (_, Some(true)) => "  [still verifies when stripped]",
                    _ => "",
                };
                println!("{}: {} annotation(s) removed{}", row.file, row.annotations_removed, verdict);
            }
            println!(
                "{} file(s), {} annotation(s) removed",
                strip.rows.len(),
                strip.total_annotations_removed
            );
            if let Some(path) = &report {
                write_report(path, "strip_report", &strip)?;
            }
            Ok(0)
        }

        Command::Eval { dir, report, overrides } => {
            let cfg = load_config(cli.config.as_deref(), &overrides)?;
            let harness = Harness::new(cfg.verifier.clone())?;
            let backend = build_backend(&cfg.proposer)?;
            let eval = eval_corpus(&dir, backend.as_ref(), &harness, &cfg.search, cfg.proposer.k)?;
            print!("{}", render_table(&eval));
            if let Some(path) = &report {
                write_report(path, "eval_report", &eval)?;
            }
            Ok(0)
        }

        Command::Extract { corpus_dir, output, keep_unverified, overrides } => {
            let cfg = load_config(cli.config.as_deref(), &overrides)?;
            let harness = Harness::new(cfg.verifier.clone())?;
            let files: Vec<PathBuf> = scribe_core::eval::dfy_files(&corpus_dir)?
                .into_iter()
                .map(|rel| corpus_dir.join(rel))
                .collect();
            let extraction = extract_corpus(&files, !keep_unverified, &harness)?;
            export_jsonl(&extraction.examples, &extraction.manifest, &output)?;
            println!(
                "{} example(s) from {} file(s) -> {} (manifest: {})",
                extraction.examples.len(),
                extraction.manifest.files_used,
                output.display(),
                sidecar_manifest_path(&output).display(),
            );
            for skipped in &extraction.manifest.skipped {
                eprintln!("skipped {}: {}", skipped.path, skipped.reason);
            }
            Ok(0)
        }

        Command::Synthesize { schedule, store, prompts, revalidate: recheck, export, overrides } => {
            let cfg = load_config(cli.config.as_deref(), &overrides)?;
            let harness = Harness::new(cfg.verifier.clone())?;
            if recheck {
                let report = revalidate(&store, &harness)?;
                println!(
                    "{} decision(s) re-checked, {} discrepancy(ies)",
                    report.decisions_checked,
                    report.discrepancies.len()
                );
                for d in &report.discrepancies {
                    println!("  seq {} [{}]: {}", d.seq, d.editor, d.detail);
                }
                return Ok(if report.discrepancies.is_empty() { 0 } else { EXIT_INCOMPLETE });
            }

            let schedule = Schedule::from_file(&schedule)?;
            let prompt_set = match &prompts {
                Some(dir) => EditorPrompts::from_dir(dir)?,
                None => EditorPrompts::default(),
            };
            let backend = build_backend(&cfg.proposer)?;
            let report =
                run_pipeline(&store, &schedule, backend.as_ref(), &harness, &prompt_set)?;
            println!(
                "{} round(s) run, {} LLM call(s) used, {} node(s) total ({} kept, {} dropped){}",
                report.rounds_run,
                report.llm_calls_used,
                report.nodes_total,
                report.kept,
                report.dropped,
                if report.stopped_by_budget { "; stopped by budget" } else { "" },
            );
            if let Some(path) = &export {
                let graph = EditGraph::load(&store)?;
                let dataset = export_dataset(&graph, harness.version());
                export_jsonl(&dataset.examples, &dataset.manifest, path)?;
                println!("{} example(s) exported -> {}", dataset.examples.len(), path.display());
            }
            Ok(0)
        }
    }
}

fn verifier_code(v: &VerifierError) -> (i32, &'static str) {
    match v {
        VerifierError::Launch { .. } => (EXIT_VERIFIER_MISSING, "verifier-missing"),
        VerifierError::Config(_) => (EXIT_CONFIG, "config"),
        VerifierError::Staging(_) => (EXIT_INTERNAL, "internal"),
    }
}

fn proposer_code(p: &ProposerError) -> (i32, &'static str) {
    match p {
        ProposerError::Transport(_) | ProposerError::Payload(_) => (EXIT_TRANSPORT, "transport"),
        ProposerError::Script(_) => (EXIT_CONFIG, "config"),
    }
}

/// Pick the exit code of the most specific recognised cause. Module
/// errors wrap their causes with transparent sources, so the wrappers are
/// destructured directly instead of walking the source chain.
fn classify(err: &anyhow::Error) -> (i32, &'static str) {
    use scribe_core::eval::EvalError;
    use scribe_core::extract::ExtractError;
    use scribe_core::search::SearchError;
    use scribe_core::synth::SynthError;

    fn search_code(s: &SearchError) -> (i32, &'static str) {
        match s {
            SearchError::Verifier(v) => verifier_code(v),
            SearchError::Proposer(p) => proposer_code(p),
        }
    }

    if err.downcast_ref::<ConfigError>().is_some() {
        return (EXIT_CONFIG, "config");
    }
    if let Some(v) = err.downcast_ref::<VerifierError>() {
        return verifier_code(v);
    }
    if let Some(p) = err.downcast_ref::<ProposerError>() {
        return proposer_code(p);
    }
    if let Some(s) = err.downcast_ref::<SearchError>() {
        return search_code(s);
    }
    if let Some(e) = err.downcast_ref::<EvalError>() {
        return match e {
            EvalError::Verifier(v) => verifier_code(v),
            EvalError::Search(s) => search_code(s),
            EvalError::Read { .. } | EvalError::Write { .. } => (EXIT_INTERNAL, "internal"),
        };
    }
    if let Some(e) = err.downcast_ref::<ExtractError>() {
        return match e {
            ExtractError::Verifier(v) => verifier_code(v),
            _ => (EXIT_INTERNAL, "internal"),
        };
    }
    if let Some(e) = err.downcast_ref::<SynthError>() {
        return match e {
            SynthError::Verifier(v) => verifier_code(v),
            SynthError::Proposer(p) => proposer_code(p),
            SynthError::Schedule(_) | SynthError::Corrupt { .. } => (EXIT_CONFIG, "config"),
            SynthError::Io { .. } => (EXIT_INTERNAL, "internal"),
        };
    }
    (EXIT_INTERNAL, "internal")
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            let (code, category) = classify(&err);
            eprintln!("error[{category}]: {err:#}");
            std::process::exit(code);
        }
    }
}
