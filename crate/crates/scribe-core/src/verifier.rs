//! Harness around an external Dafny-style verifier executable.
//!
//! The harness writes program text to a temporary `.dfy` file, invokes the
//! verifier with a per-run time limit, and classifies the tool's output
//! into a small set of statuses. Results are cached by (program content,
//! harness configuration) and batch verification is bounded by a worker
//! cap so a search never floods the machine with verifier processes.

use std::collections::HashMap;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::text::SourceText;

/// Environment variable that overrides the configured verifier executable.
pub const VERIFIER_EXE_ENV: &str = "DAFNY_EXE";

/// How to run the verifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierConfig {
    /// Path or name of the verifier executable. The `DAFNY_EXE`
    /// environment variable takes precedence when set.
    pub executable: PathBuf,
    /// Per-run verification time limit in seconds (must be positive).
    pub time_limit_secs: u64,
    /// Extra arguments appended to every invocation.
    pub extra_args: Vec<String>,
    /// Maximum number of concurrently running verifier processes.
    pub max_workers: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            executable: PathBuf::from("minidafny"),
            time_limit_secs: 10,
            extra_args: Vec::new(),
            max_workers: 4,
        }
    }
}

impl VerifierConfig {
    /// The executable actually used, after the environment override.
    pub fn resolved_executable(&self) -> PathBuf {
        match std::env::var_os(VERIFIER_EXE_ENV) {
            Some(path) if !path.is_empty() => PathBuf::from(path),
            _ => self.executable.clone(),
        }
    }

    fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.resolved_executable().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(self.time_limit_secs.to_le_bytes());
        for a in &self.extra_args {
            h.update([0]);
            h.update(a.as_bytes());
        }
        hex(&h.finalize())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// sha256 of a program text, used as a cache key component and for
/// content-addressed storage.
pub fn content_hash(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Severity {
    Error,
    Warning,
}

/// One `file(line,col): severity: message` line of verifier output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: Option<usize>,
    pub severity: Severity,
    pub message: String,
}

/// Classification of one verifier run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerificationStatus {
    /// Summary reported zero errors and zero timeouts.
    FullyVerified,
    /// Summary reported this many errors.
    VerificationErrors(u32),
    /// The input did not get past parsing or resolution.
    ParseOrResolutionError,
    /// The verifier reported a timeout, or the process exceeded its wall
    /// clock allowance and was killed.
    Timeout,
    /// The tool produced no recognisable output (crash, missing binary…).
    ToolFailure,
}

impl VerificationStatus {
    /// Error count for statuses that have one.
    pub fn error_count(self) -> Option<u32> {
        match self {
            VerificationStatus::FullyVerified => Some(0),
            VerificationStatus::VerificationErrors(n) => Some(n),
            _ => None,
        }
    }
}

/// Outcome of one verifier run. Equality deliberately ignores `duration`
/// so a run is comparable across machines and loads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub status: VerificationStatus,
    pub diagnostics: Vec<Diagnostic>,
    /// Raw output excerpt kept for logging when the tool failed.
    pub tool_output: Option<String>,
    /// Wall time of the run in seconds. Not serialized and not part of
    /// equality: reports stay byte-identical across runs.
    #[serde(skip)]
    pub duration_secs: f64,
}

impl PartialEq for VerificationOutcome {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status
            && self.diagnostics == other.diagnostics
            && self.tool_output == other.tool_output
    }
}

impl Eq for VerificationOutcome {}

impl VerificationOutcome {
    /// Error severity diagnostics on the given 1-based line.
    pub fn errors_at_line(&self, line: usize) -> impl Iterator<Item = &Diagnostic> {
        self.diagnostics
            .iter()
            .filter(move |d| d.severity == Severity::Error && d.line == line)
    }
}

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error("verifier config invalid: {0}")]
    Config(String),
    #[error("could not launch verifier '{exe}': {source}")]
    Launch {
        exe: String,
        #[source]
        source: std::io::Error,
    },
    #[error("could not stage program text: {0}")]
    Staging(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Output classification
// ---------------------------------------------------------------------------

/// Parse raw verifier output into an outcome. Total: unrecognisable output
/// maps to `ToolFailure` with the raw text attached.
pub fn parse_verifier_output(stdout: &str, stderr: &str, _exit_code: Option<i32>) -> VerificationOutcome {
    // Built once per call; these patterns are small and the call count is
    // bounded by verifier runs, which dwarf the regex cost.
    let diag_re = regex::Regex::new(
        r"(?m)^(.*)\((\d+),(\d+)\): (Error|Warning|error|warning):? ?(.*)$",
    )
    .expect("static regex");
    let summary_re = regex::Regex::new(
        r"finished with (\d+) verified, (\d+) errors?(?:, (\d+) time outs?)?",
    )
    .expect("static regex");
    let reject_re = regex::Regex::new(
        r"(\d+) (parse errors?|resolution/type errors?) detected",
    )
    .expect("static regex");

    let combined = if stderr.trim().is_empty() {
        stdout.to_string()
    } else {
        format!("{stdout}\n{stderr}")
    };

    let mut diagnostics = Vec::new();
    for cap in diag_re.captures_iter(&combined) {
        let line: usize = cap[2].parse().unwrap_or(0);
        let column: Option<usize> = cap[3].parse().ok();
        let severity = if cap[4].eq_ignore_ascii_case("error") {
            Severity::Error
        } else {
            Severity::Warning
        };
        diagnostics.push(Diagnostic {
            line,
            column,
            severity,
            message: cap[5].trim().to_string(),
        });
    }

    if reject_re.is_match(&combined) {
        return VerificationOutcome {
            status: VerificationStatus::ParseOrResolutionError,
            diagnostics,
            tool_output: None,
            duration_secs: 0.0,
        };
    }

    if let Some(cap) = summary_re.captures(&combined) {
        let errors: u32 = cap[2].parse().unwrap_or(0);
        let timeouts: u32 = cap.get(3).map_or(0, |m| m.as_str().parse().unwrap_or(0));
        let status = if errors > 0 {
            VerificationStatus::VerificationErrors(errors)
        } else if timeouts > 0 {
            VerificationStatus::Timeout
        } else {
            VerificationStatus::FullyVerified
        };
        return VerificationOutcome { status, diagnostics, tool_output: None, duration_secs: 0.0 };
    }

    let mut excerpt = combined.trim().to_string();
    if excerpt.len() > 2000 {
        let mut end = 2000;
        while !excerpt.is_char_boundary(end) {
            end -= 1;
        }
        excerpt.truncate(end);
    }
    VerificationOutcome {
        status: VerificationStatus::ToolFailure,
        diagnostics,
        tool_output: Some(excerpt),
        duration_secs: 0.0,
    }
}

// ---------------------------------------------------------------------------
// Harness
// ---------------------------------------------------------------------------

/// Counting semaphore bounding concurrent verifier processes.
struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore { permits: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut p = self.permits.lock().unwrap();
        while *p == 0 {
            p = self.cv.wait(p).unwrap();
        }
        *p -= 1;
        SemaphoreGuard { sem: self }
    }
}

struct SemaphoreGuard<'a> {
    sem: &'a Semaphore,
}

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.sem.permits.lock().unwrap() += 1;
        self.sem.cv.notify_one();
    }
}

/// A configured verifier with a result cache and a process cap.
pub struct Harness {
    config: VerifierConfig,
    cache: Mutex<HashMap<(String, String), VerificationOutcome>>,
    semaphore: Semaphore,
    calls: Mutex<u64>,
}

impl Harness {
    pub fn new(config: VerifierConfig) -> Result<Self, VerifierError> {
        if config.time_limit_secs == 0 {
            return Err(VerifierError::Config("time_limit_secs must be positive".into()));
        }
        if config.max_workers == 0 {
            return Err(VerifierError::Config("max_workers must be at least 1".into()));
        }
        let workers = config.max_workers;
        Ok(Harness {
            config,
            cache: Mutex::new(HashMap::new()),
            semaphore: Semaphore::new(workers),
            calls: Mutex::new(0),
        })
    }

    pub fn config(&self) -> &VerifierConfig {
        &self.config
    }

    /// Number of verify requests served (cache hits included).
    pub fn calls(&self) -> u64 {
        *self.calls.lock().unwrap()
    }

    /// `--version` output of the resolved executable, trimmed; `None` when
    /// the binary cannot be run.
    pub fn version(&self) -> Option<String> {
        let out = Command::new(self.config.resolved_executable())
            .arg("--version")
            .stdin(Stdio::null())
            .output()
            .ok()?;
        let text = String::from_utf8_lossy(&out.stdout);
        let line = text.lines().next()?.trim();
        if line.is_empty() {
            None
        } else {
            Some(line.to_string())
        }
    }

    /// Verify one program text.
    pub fn verify(&self, program: &SourceText) -> Result<VerificationOutcome, VerifierError> {
        *self.calls.lock().unwrap() += 1;
        let key = (content_hash(&program.content), self.config.fingerprint());
        if let Some(hit) = self.cache.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let outcome = self.run_once(program)?;
        self.cache.lock().unwrap().insert(key, outcome.clone());
        Ok(outcome)
    }

    fn run_once(&self, program: &SourceText) -> Result<VerificationOutcome, VerifierError> {
        let _permit = self.semaphore.acquire();
        let dir = tempfile::tempdir()?;
        let file = dir.path().join("program.dfy");
        std::fs::write(&file, &program.content)?;

        let exe = self.config.resolved_executable();
        let start = Instant::now();
        let mut cmd = Command::new(&exe);
        cmd.arg("verify")
            .arg(&file)
            .arg("--verification-time-limit")
            .arg(self.config.time_limit_secs.to_string())
            .args(&self.config.extra_args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        let mut child = cmd.spawn().map_err(|source| VerifierError::Launch {
            exe: exe.display().to_string(),
            source,
        })?;

        // Drain pipes on threads so a chatty child can't dead-lock against
        // our wait below.
        let mut stdout_pipe = child.stdout.take().expect("stdout piped");
        let mut stderr_pipe = child.stderr.take().expect("stderr piped");
        let out_thread = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout_pipe.read_to_string(&mut buf);
            buf
        });
        let err_thread = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr_pipe.read_to_string(&mut buf);
            buf
        });

        // Wall-clock allowance: the verifier enforces its own limit; the
        // grace covers process startup and report generation.
        let allowance = Duration::from_secs(self.config.time_limit_secs + 2);
        let status = match child.wait_timeout(allowance) {
            Ok(Some(status)) => Some(status),
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                None
            }
            Err(_) => {
                let _ = child.kill();
                let _ = child.wait();
                None
            }
        };
        let stdout = out_thread.join().unwrap_or_default();
        let stderr = err_thread.join().unwrap_or_default();
        let duration_secs = start.elapsed().as_secs_f64();

        let mut outcome = match status {
            Some(st) => parse_verifier_output(&stdout, &stderr, st.code()),
            None => VerificationOutcome {
                status: VerificationStatus::Timeout,
                diagnostics: Vec::new(),
                tool_output: None,
                duration_secs: 0.0,
            },
        };
        outcome.duration_secs = duration_secs;
        Ok(outcome)
    }

    /// Verify many texts with at most `max_workers` concurrent processes.
    /// Results align with the input by index and match what sequential
    /// `verify` calls would produce.
    pub fn verify_batch(
        &self,
        programs: &[SourceText],
    ) -> Vec<Result<VerificationOutcome, VerifierError>> {
        if programs.len() <= 1 {
            return programs.iter().map(|p| self.verify(p)).collect();
        }
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<Mutex<Option<Result<VerificationOutcome, VerifierError>>>> =
            programs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.config.max_workers.min(programs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= programs.len() {
                        break;
                    }
                    let r = self.verify(&programs[i]);
                    *results[i].lock().unwrap() = Some(r);
                });
            }
        });
        results
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("worker filled every slot"))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Acceptance predicate
// ---------------------------------------------------------------------------

/// Decide whether an inserted annotation is kept, given the outcome before
/// the edit, the outcome after it, and the 1-based line the annotation
/// landed on.
///
/// Accepted when the after-run is a clean parse (not
/// `ParseOrResolutionError`, `Timeout` or `ToolFailure`), reports no error
/// on the inserted line, and does not increase the error count. With
/// `strict_progress` the error count must strictly decrease.
pub fn annotation_is_accepted(
    before: &VerificationOutcome,
    after: &VerificationOutcome,
    inserted_line: usize,
    strict_progress: bool,
) -> bool {
    let Some(after_errors) = after.status.error_count() else {
        return false;
    };
    if after.errors_at_line(inserted_line).next().is_some() {
        return false;
    }
    // A baseline without a countable error total (timeout, tool failure…)
    // places no ceiling on the after-count.
    let before_errors = before.status.error_count().unwrap_or(u32::MAX);
    if strict_progress {
        after_errors < before_errors
    } else {
        after_errors <= before_errors
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(status: VerificationStatus, diags: Vec<Diagnostic>) -> VerificationOutcome {
        VerificationOutcome { status, diagnostics: diags, tool_output: None, duration_secs: 0.0 }
    }

    fn err_at(line: usize) -> Diagnostic {
        Diagnostic {
            line,
            column: Some(3),
            severity: Severity::Error,
            message: "assertion might not hold".into(),
        }
    }

    #[test]
    fn parses_clean_summary() {
        let o = parse_verifier_output(
            "\nDafny program verifier finished with 2 verified, 0 errors\n",
            "",
            Some(0),
        );
        assert_eq!(o.status, VerificationStatus::FullyVerified);
        assert!(o.diagnostics.is_empty());
    }

    #[test]
    fn parses_error_summary_with_diagnostics() {
        let o = parse_verifier_output(
            "p.dfy(3,5): Error: a postcondition could not be proved on this return path\n\nDafny program verifier finished with 0 verified, 1 error\n",
            "",
            Some(4),
        );
        assert_eq!(o.status, VerificationStatus::VerificationErrors(1));
        assert_eq!(o.diagnostics.len(), 1);
        assert_eq!(o.diagnostics[0].line, 3);
        assert_eq!(o.diagnostics[0].column, Some(5));
        assert_eq!(o.diagnostics[0].severity, Severity::Error);
        assert_eq!(
            o.diagnostics[0].message,
            "a postcondition could not be proved on this return path"
        );
    }

    #[test]
    fn plural_and_singular_summaries_both_parse() {
        for line in [
            "Dafny program verifier finished with 1 verified, 2 errors",
            "Dafny program verifier finished with 1 verified, 2 errors, 1 time out",
            "Dafny program verifier finished with 0 verified, 0 errors, 3 time outs",
        ] {
            let o = parse_verifier_output(line, "", Some(0));
            assert_ne!(o.status, VerificationStatus::ToolFailure, "{line}");
        }
    }

    #[test]
    fn timeout_summary_classifies_as_timeout() {
        let o = parse_verifier_output(
            "p.dfy(1,8): Error: verification of method 'm' timed out\n\nDafny program verifier finished with 0 verified, 0 errors, 1 time out\n",
            "",
            Some(4),
        );
        assert_eq!(o.status, VerificationStatus::Timeout);
    }

    #[test]
    fn errors_take_precedence_over_timeouts() {
        let o = parse_verifier_output(
            "Dafny program verifier finished with 0 verified, 2 errors, 1 time out",
            "",
            Some(4),
        );
        assert_eq!(o.status, VerificationStatus::VerificationErrors(2));
    }

    #[test]
    fn parse_and_resolution_markers_classify() {
        let p = parse_verifier_output("p.dfy(2,1): Error: expected ';'\n1 parse error detected in p.dfy\n", "", Some(2));
        assert_eq!(p.status, VerificationStatus::ParseOrResolutionError);
        let r = parse_verifier_output("2 resolution/type errors detected in p.dfy\n", "", Some(2));
        assert_eq!(r.status, VerificationStatus::ParseOrResolutionError);
    }

    #[test]
    fn garbage_output_is_tool_failure_with_excerpt() {
        let o = parse_verifier_output("segfault lol\n", "boom\n", Some(139));
        assert_eq!(o.status, VerificationStatus::ToolFailure);
        assert!(o.tool_output.as_deref().unwrap().contains("segfault"));
    }

    #[test]
    fn outcome_equality_ignores_duration() {
        let mut a = outcome(VerificationStatus::FullyVerified, vec![]);
        let mut b = outcome(VerificationStatus::FullyVerified, vec![]);
        a.duration_secs = 0.1;
        b.duration_secs = 99.9;
        assert_eq!(a, b);
    }

    #[test]
    fn acceptance_allows_equal_count_without_new_error_on_line() {
        let before = outcome(VerificationStatus::VerificationErrors(2), vec![err_at(3), err_at(9)]);
        let after = outcome(VerificationStatus::VerificationErrors(2), vec![err_at(3), err_at(9)]);
        assert!(annotation_is_accepted(&before, &after, 5, false));
        assert!(!annotation_is_accepted(&before, &after, 3, false));
        assert!(!annotation_is_accepted(&before, &after, 5, true));
    }

    #[test]
    fn acceptance_rejects_regressions_and_broken_parses() {
        let before = outcome(VerificationStatus::VerificationErrors(1), vec![err_at(3)]);
        let worse = outcome(VerificationStatus::VerificationErrors(2), vec![err_at(3), err_at(5)]);
        assert!(!annotation_is_accepted(&before, &worse, 7, false));
        let broken = outcome(VerificationStatus::ParseOrResolutionError, vec![]);
        assert!(!annotation_is_accepted(&before, &broken, 7, false));
        let timeout = outcome(VerificationStatus::Timeout, vec![]);
        assert!(!annotation_is_accepted(&before, &timeout, 7, false));
    }

    #[test]
    fn acceptance_on_full_verification_is_strict_progress() {
        let before = outcome(VerificationStatus::VerificationErrors(1), vec![err_at(3)]);
        let after = outcome(VerificationStatus::FullyVerified, vec![]);
        assert!(annotation_is_accepted(&before, &after, 4, true));
    }

    #[test]
    fn zero_time_limit_is_rejected() {
        let cfg = VerifierConfig { time_limit_secs: 0, ..VerifierConfig::default() };
        assert!(Harness::new(cfg).is_err());
        let cfg = VerifierConfig { max_workers: 0, ..VerifierConfig::default() };
        assert!(Harness::new(cfg).is_err());
    }
}
