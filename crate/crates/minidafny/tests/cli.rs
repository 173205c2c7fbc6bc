//! End-to-end tests of the `minidafny` binary: exit codes, diagnostic and
//! summary formats, time limits, and the reference programs used throughout
//! the workspace.

use std::io::Write;
use std::process::Command;

fn run(source: &str, args: &[&str]) -> (String, String, i32) {
    let mut file = tempfile::Builder::new()
        .prefix("minidafny-test-")
        .suffix(".dfy")
        .tempfile()
        .expect("create temp file");
    file.write_all(source.as_bytes()).expect("write temp file");
    file.flush().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_minidafny"))
        .arg("verify")
        .arg(file.path())
        .args(args)
        .output()
        .expect("spawn minidafny");
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.code().unwrap_or(-1),
    )
}

const MAX_ARRAY_STRIPPED: &str = "\
method maxArray(a: array<int>) returns (m: int)
  requires a.Length >= 1
  ensures forall k :: 0 <= k < a.Length ==>
    m >= a[k]
  ensures exists k :: 0 <= k < a.Length &&
    m == a[k]
{
  m := a[0];
  var index := 1;
  while (index < a.Length)
     decreases a.Length - index
  {
    m := if m>a[index] then  m else a[index];
    index := index + 1;
  }
}
";

const MAX_ARRAY_WITH_INVARIANT: &str = "\
method maxArray(a: array<int>) returns (m: int)
  requires a.Length >= 1
  ensures forall k :: 0 <= k < a.Length ==>
    m >= a[k]
  ensures exists k :: 0 <= k < a.Length &&
    m == a[k]
{
  m := a[0];
  var index := 1;
  while (index < a.Length)
     decreases a.Length - index
     invariant 0 <= index <= a.Length
  {
    m := if m>a[index] then  m else a[index];
    index := index + 1;
  }
}
";

const IS_PERFECT_SQUARE_PARTIAL: &str = "\
method IsPerfectSquare(n: nat)
    returns (result: bool)
    ensures result == (exists k: nat :: k * k == n)
{
  var k: nat := 0;
  result := false;
  while k * k <= n
    invariant 0 <= k <= n + 1
    invariant forall i: nat :: 0 <= i < k ==> i * i != n
  {
    if k * k == n {
      result := true;
      return;
    }
    k := k + 1;
  }

}
";

const IS_PERFECT_SQUARE_COMPLETE: &str = "\
method IsPerfectSquare(n: nat)
    returns (result: bool)
    ensures result == (exists k: nat :: k * k == n)
{
  var k: nat := 0;
  result := false;
  while k * k <= n
    invariant 0 <= k <= n + 1
    invariant forall i: nat :: 0 <= i < k ==> i * i != n
    invariant result == (exists i: nat :: 0 <= i < k && i * i == n)
  {
    if k * k == n {
      result := true;
      return;
    }
    k := k + 1;
  }

  assert forall i: nat :: 0 <= i < k ==> i * i != n;
}
";

#[test]
fn verifying_file_exits_zero_with_summary() {
    let (stdout, _, code) = run("method m() { assert 1 < 2; }", &[]);
    assert_eq!(code, 0);
    assert!(
        stdout.contains("Dafny program verifier finished with 1 verified, 0 errors"),
        "{stdout}"
    );
}

#[test]
fn false_assert_exits_four_with_located_diagnostic() {
    let (stdout, _, code) = run("method m() {\n  assert false;\n}\n", &[]);
    assert_eq!(code, 4);
    assert!(stdout.contains("(2,3): Error: assertion might not hold"), "{stdout}");
    assert!(
        stdout.contains("Dafny program verifier finished with 0 verified, 1 error"),
        "{stdout}"
    );
}

#[test]
fn parse_error_exits_two() {
    let (stdout, _, code) = run("method m() {", &[]);
    assert_eq!(code, 2);
    assert!(stdout.contains("1 parse error detected in"), "{stdout}");
    assert!(!stdout.contains("program verifier finished"), "{stdout}");
}

#[test]
fn resolution_error_exits_two() {
    let (stdout, _, code) = run("method m() { y := 1; }", &[]);
    assert_eq!(code, 2);
    assert!(stdout.contains("resolution/type error"), "{stdout}");
    assert!(stdout.contains("unresolved identifier: y"), "{stdout}");
}

#[test]
fn time_limit_produces_timeout_summary() {
    // Wide enough domain product (two arrays x five ints, nested foralls)
    // that exhaustive checking cannot finish within one second.
    let slow = "\
method slow(a: array<int>, b: array<int>, x: int, y: int, z: int, w: int, v: int)
  ensures forall i :: 0 <= i < a.Length ==>
    forall j :: 0 <= j < b.Length ==> a[i]*x + b[j]*y + z*w*v != 12345
{
}
";
    let (stdout, _, code) = run(slow, &["--verification-time-limit", "1"]);
    assert_eq!(code, 4);
    assert!(stdout.contains("timed out"), "{stdout}");
    assert!(stdout.contains("1 time out"), "{stdout}");
}

#[test]
fn version_reports_minidafny() {
    let out = Command::new(env!("CARGO_BIN_EXE_minidafny"))
        .arg("--version")
        .output()
        .expect("spawn minidafny");
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "MiniDafny 0.1.0");
}

#[test]
fn usage_error_exits_one() {
    let out = Command::new(env!("CARGO_BIN_EXE_minidafny"))
        .arg("frobnicate")
        .output()
        .expect("spawn minidafny");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_exits_one() {
    let out = Command::new(env!("CARGO_BIN_EXE_minidafny"))
        .args(["verify", "/nonexistent/nope.dfy"])
        .output()
        .expect("spawn minidafny");
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot read"));
}

#[test]
fn max_array_stripped_fails_and_invariant_helps() {
    let (stdout, _, code) = run(MAX_ARRAY_STRIPPED, &[]);
    assert_eq!(code, 4, "{stdout}");
    // Unbounded loop index: the body's array read is out of range, and both
    // postconditions are unprovable.
    assert!(
        stdout.contains("Dafny program verifier finished with 0 verified, 3 errors"),
        "{stdout}"
    );
    assert!(stdout.contains("index out of range"), "{stdout}");
    assert!(stdout.contains("postcondition"), "{stdout}");

    let (stdout, _, code) = run(MAX_ARRAY_WITH_INVARIANT, &[]);
    assert_eq!(code, 4, "{stdout}");
    // The bounds invariant fixes the array accesses; the postconditions still
    // need invariants about `m` itself.
    assert!(
        stdout.contains("Dafny program verifier finished with 0 verified, 2 errors"),
        "{stdout}"
    );
    assert!(!stdout.contains("index out of range"), "{stdout}");
}

#[test]
fn is_perfect_square_partial_fails_on_ensures_only() {
    let (stdout, _, code) = run(IS_PERFECT_SQUARE_PARTIAL, &[]);
    assert_eq!(code, 4, "{stdout}");
    assert!(
        stdout.contains("Dafny program verifier finished with 0 verified, 1 error"),
        "{stdout}"
    );
    // The sole failure must sit on the ensures clause, not on any invariant.
    assert!(stdout.contains("(3,5): Error: a postcondition could not be proved"), "{stdout}");
}

#[test]
fn is_perfect_square_complete_fully_verifies() {
    let (stdout, _, code) = run(IS_PERFECT_SQUARE_COMPLETE, &[]);
    assert_eq!(code, 0, "{stdout}");
    assert!(
        stdout.contains("Dafny program verifier finished with 1 verified, 0 errors"),
        "{stdout}"
    );
}

#[test]
fn diagnostics_use_file_line_col_format() {
    let (stdout, _, _) = run("method m() {\n  assert 2 + 2 == 5;\n}\n", &[]);
    // path(line,col): Error: message
    let diag = stdout.lines().next().unwrap();
    assert!(diag.ends_with("(2,3): Error: assertion might not hold"), "{diag}");
    assert!(diag.contains(".dfy("), "{diag}");
}
