//! A small, deterministic stand-in for `dafny verify`.
//!
//! MiniDafny parses, resolves, and verifies a restricted subset of Dafny:
//! methods over `int`, `nat`, `bool`, and `array<int>` with `while` loops,
//! `if`, asserts, method calls, and single-variable quantifiers. Verification
//! conditions are produced by forward symbolic execution and discharged by
//! exhaustive checking over small finite domains, so results are exact within
//! those domains and fully reproducible — no solver installation, no
//! randomness, no flakiness.
//!
//! The command-line surface mirrors the real tool where it matters to
//! callers: `minidafny verify file.dfy --verification-time-limit N`, the same
//! diagnostic format (`file(line,col): Error: message`), the same summary
//! line (`Dafny program verifier finished with N verified, M errors`), and
//! the same exit codes (0 success, 2 parse/resolution errors, 4 verification
//! failures).

pub mod ast;
pub mod eval;
pub mod lexer;
pub mod locate;
pub mod parser;
pub mod report;
pub mod resolve;
pub mod vc;

use std::time::{Duration, Instant};

/// Runs the full pipeline on `source`, labelling diagnostics with `file`.
pub fn verify_source(file: &str, source: &str, time_limit: Duration) -> report::RunResult {
    let mut program = match parser::parse(source) {
        Ok(p) => p,
        Err(e) => return report::parse_failure(file, &e),
    };
    if let Err(errs) = resolve::resolve(&mut program) {
        return report::resolution_failure(file, &errs);
    }
    let deadline = Instant::now() + time_limit;
    let outcomes: Vec<eval::MethodOutcome> = vc::generate(&program)
        .iter()
        .map(|m| eval::check_method(m, deadline))
        .collect();
    report::verification(file, &outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(src: &str) -> report::RunResult {
        verify_source("test.dfy", src, Duration::from_secs(30))
    }

    #[test]
    fn success_output_and_exit_code() {
        let r = run("method m() { assert 1 + 1 == 2; }");
        assert_eq!(r.exit_code, 0);
        assert_eq!(r.stdout, "Dafny program verifier finished with 1 verified, 0 errors\n");
    }

    #[test]
    fn verification_failure_output() {
        let r = run("method m(x: int) { assert x > 0; }");
        assert_eq!(r.exit_code, 4);
        assert_eq!(
            r.stdout,
            "test.dfy(1,20): Error: assertion might not hold\n\n\
             Dafny program verifier finished with 0 verified, 1 error\n"
        );
    }

    #[test]
    fn parse_failure_output() {
        let r = run("method m() {");
        assert_eq!(r.exit_code, 2);
        assert!(r.stdout.contains("1 parse error detected in test.dfy"), "{}", r.stdout);
    }

    #[test]
    fn resolution_failure_output() {
        let r = run("method m() { x := 1; }");
        assert_eq!(r.exit_code, 2);
        assert!(
            r.stdout.contains("resolution/type error"),
            "{}",
            r.stdout
        );
        assert!(r.stdout.contains("unresolved identifier: x"), "{}", r.stdout);
    }

    #[test]
    fn mixed_methods_counted_separately() {
        let r = run(
            "method good() { assert true; }\nmethod bad() { assert false; }\nmethod ugly(x: int) { assert x == 0; }",
        );
        assert_eq!(r.exit_code, 4);
        assert!(
            r.stdout.contains("finished with 1 verified, 2 errors"),
            "{}",
            r.stdout
        );
    }
}
