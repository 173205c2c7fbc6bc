//! Output rendering and exit codes matching `dafny verify`.

use crate::eval::MethodOutcome;
use crate::lexer::Pos;
use crate::parser::ParseError;
use crate::resolve::ResolveError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PARSE_OR_RESOLVE: i32 = 2;
pub const EXIT_VERIFICATION_FAILED: i32 = 4;

pub struct RunResult {
    pub stdout: String,
    pub exit_code: i32,
}

fn diag(file: &str, pos: Pos, msg: &str) -> String {
    format!("{file}({},{}): Error: {msg}", pos.line, pos.col)
}

fn plural(n: usize) -> &'static str {
    if n == 1 {
        ""
    } else {
        "s"
    }
}

pub fn parse_failure(file: &str, err: &ParseError) -> RunResult {
    let stdout = format!(
        "{}\n1 parse error detected in {file}\n",
        diag(file, err.pos, &err.msg)
    );
    RunResult { stdout, exit_code: EXIT_PARSE_OR_RESOLVE }
}

pub fn resolution_failure(file: &str, errs: &[ResolveError]) -> RunResult {
    let mut stdout = String::new();
    for e in errs {
        stdout.push_str(&diag(file, e.pos, &e.msg));
        stdout.push('\n');
    }
    stdout.push_str(&format!(
        "{} resolution/type error{} detected in {file}\n",
        errs.len(),
        plural(errs.len())
    ));
    RunResult { stdout, exit_code: EXIT_PARSE_OR_RESOLVE }
}

pub fn verification(file: &str, outcomes: &[MethodOutcome]) -> RunResult {
    let mut lines = Vec::new();
    let mut verified = 0usize;
    let mut errors = 0usize;
    let mut timeouts = 0usize;
    for o in outcomes {
        if o.timed_out {
            timeouts += 1;
            lines.push(diag(
                file,
                o.pos,
                &format!("verification of method '{}' timed out", o.name),
            ));
        } else if o.failures.is_empty() {
            verified += 1;
        } else {
            errors += o.failures.len();
            for (pos, msg) in &o.failures {
                lines.push(diag(file, *pos, msg));
            }
        }
    }
    let mut stdout = lines.join("\n");
    if !lines.is_empty() {
        stdout.push_str("\n\n");
    }
    stdout.push_str(&format!(
        "Dafny program verifier finished with {verified} verified, {errors} error{}",
        plural(errors)
    ));
    if timeouts > 0 {
        stdout.push_str(&format!(", {timeouts} time out{}", plural(timeouts)));
    }
    stdout.push('\n');
    let exit_code = if errors == 0 && timeouts == 0 { EXIT_OK } else { EXIT_VERIFICATION_FAILED };
    RunResult { stdout, exit_code }
}
