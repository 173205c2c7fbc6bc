//! Bounded exhaustive checking of proof obligations.
//!
//! Instead of calling an SMT solver, every obligation is checked over a small
//! finite domain: integers range over -3..=4, booleans over both values, and
//! arrays over all lengths up to 2 with elements drawn from {-2, 0, 1, 3}.
//! An obligation holds when no valuation of its free symbols satisfies all
//! hypotheses while falsifying the goal. Within those domains the check is a
//! decision procedure; programs whose correctness depends on values outside
//! them are out of scope by design.
//!
//! Evaluation is three-valued. An undefined result (out-of-bounds index,
//! division by zero, arithmetic overflow) excludes the valuation when it
//! occurs in a hypothesis and counts as a counterexample when it occurs in
//! the goal, mirroring how guarded well-formedness conditions are assumed
//! once checked.

use std::rc::Rc;
use std::time::Instant;

use crate::ast::{BinOp, Type};
use crate::lexer::Pos;
use crate::vc::{MethodVcs, Obligation, SExpr, SymInfo};

pub const INT_MIN: i64 = -3;
pub const INT_MAX: i64 = 4;
pub const ARRAY_ELEMS: [i64; 4] = [-2, 0, 1, 3];
pub const MAX_ARRAY_LEN: usize = 2;

/// How often (in valuations) the deadline is polled.
const DEADLINE_STRIDE: u32 = 4096;

#[derive(Clone, Debug)]
enum Value {
    Int(i64),
    Bool(bool),
    Arr(Rc<Vec<i64>>),
    /// Placeholder for symbols that the current obligation never reads.
    Unset,
}

pub struct MethodOutcome {
    pub name: String,
    pub pos: Pos,
    /// Distinct failed obligations, ordered by source position.
    pub failures: Vec<(Pos, String)>,
    pub timed_out: bool,
}

struct Timeout;

pub fn check_method(vcs: &MethodVcs, deadline: Instant) -> MethodOutcome {
    let mut failures: Vec<(Pos, String)> = Vec::new();
    let mut counter = 0u32;
    let mut timed_out = false;
    for ob in &vcs.obligations {
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        match check_obligation(ob, &vcs.symbols, deadline, &mut counter) {
            Ok(true) => {}
            Ok(false) => {
                let entry = (ob.pos, ob.msg.clone());
                if !failures.contains(&entry) {
                    failures.push(entry);
                }
            }
            Err(Timeout) => {
                timed_out = true;
                break;
            }
        }
    }
    if timed_out {
        // A timed-out method reports only the timeout; partial results would
        // make the error count depend on timing.
        failures.clear();
    }
    failures.sort_by_key(|(pos, _)| (pos.line, pos.col));
    MethodOutcome { name: vcs.name.clone(), pos: vcs.pos, failures, timed_out }
}

/// `Ok(true)` if the obligation holds over the whole domain.
fn check_obligation(
    ob: &Obligation,
    symbols: &[SymInfo],
    deadline: Instant,
    counter: &mut u32,
) -> Result<bool, Timeout> {
    let mut used = vec![false; symbols.len()];
    for h in &ob.hyps {
        mark_symbols(h, &mut used);
    }
    mark_symbols(&ob.goal, &mut used);
    let free: Vec<usize> = symbols
        .iter()
        .enumerate()
        .filter(|(i, s)| !s.bound && used[*i])
        .map(|(i, _)| i)
        .collect();
    let domains: Vec<Vec<Value>> = free.iter().map(|&i| domain(symbols[i].ty)).collect();

    let mut vals = vec![Value::Unset; symbols.len()];
    let mut idx = vec![0usize; free.len()];
    loop {
        for (k, &i) in free.iter().enumerate() {
            vals[i] = domains[k][idx[k]].clone();
        }
        *counter = counter.wrapping_add(1);
        if *counter % DEADLINE_STRIDE == 0 && Instant::now() >= deadline {
            return Err(Timeout);
        }

        let mut excluded = false;
        for h in &ob.hyps {
            match eval(h, &mut vals) {
                Some(Value::Bool(true)) => {}
                _ => {
                    excluded = true;
                    break;
                }
            }
        }
        if !excluded {
            match eval(&ob.goal, &mut vals) {
                Some(Value::Bool(true)) => {}
                _ => return Ok(false),
            }
        }

        let mut k = 0;
        loop {
            if k == free.len() {
                return Ok(true);
            }
            idx[k] += 1;
            if idx[k] < domains[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

fn domain(ty: Type) -> Vec<Value> {
    match ty {
        // `nat` symbols are enumerated over the full integer domain; their
        // non-negativity arrives as a hypothesis, not a domain restriction.
        Type::Int | Type::Nat => (INT_MIN..=INT_MAX).map(Value::Int).collect(),
        Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        Type::ArrayInt => {
            let mut out = vec![Value::Arr(Rc::new(Vec::new()))];
            if MAX_ARRAY_LEN >= 1 {
                for &a in &ARRAY_ELEMS {
                    out.push(Value::Arr(Rc::new(vec![a])));
                }
            }
            if MAX_ARRAY_LEN >= 2 {
                for &a in &ARRAY_ELEMS {
                    for &b in &ARRAY_ELEMS {
                        out.push(Value::Arr(Rc::new(vec![a, b])));
                    }
                }
            }
            out
        }
    }
}

fn mark_symbols(e: &SExpr, used: &mut [bool]) {
    match e {
        SExpr::Int(_) | SExpr::Bool(_) => {}
        SExpr::Sym(i) => used[*i] = true,
        SExpr::Neg(x) | SExpr::Not(x) | SExpr::Len(x) => mark_symbols(x, used),
        SExpr::Bin(_, l, r) | SExpr::Idx(l, r) => {
            mark_symbols(l, used);
            mark_symbols(r, used);
        }
        SExpr::Ite(c, t, f) => {
            mark_symbols(c, used);
            mark_symbols(t, used);
            mark_symbols(f, used);
        }
        SExpr::Quant { body, .. } => mark_symbols(body, used),
    }
}

fn as_int(v: Value) -> Option<i64> {
    match v {
        Value::Int(n) => Some(n),
        _ => None,
    }
}

fn as_bool(v: Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(b),
        _ => None,
    }
}

/// Three-valued evaluation; `None` means undefined.
fn eval(e: &SExpr, vals: &mut Vec<Value>) -> Option<Value> {
    match e {
        SExpr::Int(n) => Some(Value::Int(*n)),
        SExpr::Bool(b) => Some(Value::Bool(*b)),
        SExpr::Sym(i) => match &vals[*i] {
            Value::Unset => panic!("evaluated a symbol with no value"),
            v => Some(v.clone()),
        },
        SExpr::Neg(x) => {
            let n = as_int(eval(x, vals)?)?;
            n.checked_neg().map(Value::Int)
        }
        SExpr::Not(x) => {
            let b = as_bool(eval(x, vals)?)?;
            Some(Value::Bool(!b))
        }
        SExpr::Bin(op, l, r) => eval_bin(*op, l, r, vals),
        SExpr::Ite(c, t, f) => {
            if as_bool(eval(c, vals)?)? {
                eval(t, vals)
            } else {
                eval(f, vals)
            }
        }
        SExpr::Len(a) => match eval(a, vals)? {
            Value::Arr(v) => Some(Value::Int(v.len() as i64)),
            _ => None,
        },
        SExpr::Idx(a, i) => {
            let arr = match eval(a, vals)? {
                Value::Arr(v) => v,
                _ => return None,
            };
            let i = as_int(eval(i, vals)?)?;
            if i < 0 || i as usize >= arr.len() {
                None
            } else {
                Some(Value::Int(arr[i as usize]))
            }
        }
        SExpr::Quant { forall, var, nonneg, body } => {
            let saved = std::mem::replace(&mut vals[*var], Value::Unset);
            let mut result = Some(Value::Bool(*forall));
            for d in INT_MIN..=INT_MAX {
                if *nonneg && d < 0 {
                    continue;
                }
                vals[*var] = Value::Int(d);
                match eval(body, vals).and_then(as_bool) {
                    None => {
                        result = None;
                        break;
                    }
                    Some(b) => {
                        if b != *forall {
                            result = Some(Value::Bool(!*forall));
                            break;
                        }
                    }
                }
            }
            vals[*var] = saved;
            result
        }
    }
}

fn eval_bin(op: BinOp, l: &SExpr, r: &SExpr, vals: &mut Vec<Value>) -> Option<Value> {
    // Short-circuit forms first: their right side may be undefined without
    // making the whole expression undefined.
    match op {
        BinOp::And => {
            return if !as_bool(eval(l, vals)?)? {
                Some(Value::Bool(false))
            } else {
                eval(r, vals)
            };
        }
        BinOp::Or => {
            return if as_bool(eval(l, vals)?)? {
                Some(Value::Bool(true))
            } else {
                eval(r, vals)
            };
        }
        BinOp::Implies => {
            return if !as_bool(eval(l, vals)?)? {
                Some(Value::Bool(true))
            } else {
                eval(r, vals)
            };
        }
        _ => {}
    }
    let lv = eval(l, vals)?;
    let rv = eval(r, vals)?;
    let v = match op {
        BinOp::Iff => Value::Bool(as_bool(lv)? == as_bool(rv)?),
        BinOp::Eq | BinOp::Ne => {
            let eq = match (lv, rv) {
                (Value::Int(a), Value::Int(b)) => a == b,
                (Value::Bool(a), Value::Bool(b)) => a == b,
                _ => return None,
            };
            Value::Bool(if op == BinOp::Eq { eq } else { !eq })
        }
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let (a, b) = (as_int(lv)?, as_int(rv)?);
            Value::Bool(match op {
                BinOp::Lt => a < b,
                BinOp::Le => a <= b,
                BinOp::Gt => a > b,
                _ => a >= b,
            })
        }
        BinOp::Add => Value::Int(as_int(lv)?.checked_add(as_int(rv)?)?),
        BinOp::Sub => Value::Int(as_int(lv)?.checked_sub(as_int(rv)?)?),
        BinOp::Mul => Value::Int(as_int(lv)?.checked_mul(as_int(rv)?)?),
        BinOp::Div => {
            let (a, b) = (as_int(lv)?, as_int(rv)?);
            if b == 0 {
                return None;
            }
            Value::Int(a.div_euclid(b))
        }
        BinOp::Mod => {
            let (a, b) = (as_int(lv)?, as_int(rv)?);
            if b == 0 {
                return None;
            }
            Value::Int(a.rem_euclid(b))
        }
        BinOp::And | BinOp::Or | BinOp::Implies => unreachable!(),
    };
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::resolve::resolve;
    use crate::vc::generate;
    use std::time::Duration;

    fn outcomes(src: &str) -> Vec<MethodOutcome> {
        let mut p = parse(src).unwrap();
        resolve(&mut p).unwrap();
        let deadline = Instant::now() + Duration::from_secs(30);
        generate(&p).iter().map(|m| check_method(m, deadline)).collect()
    }

    #[test]
    fn trivial_assert_verifies() {
        let out = outcomes("method m(x: int) { assert x == x; }");
        assert!(out[0].failures.is_empty());
        assert!(!out[0].timed_out);
    }

    #[test]
    fn false_assert_fails() {
        let out = outcomes("method m(x: int) { assert x < x; }");
        assert_eq!(out[0].failures.len(), 1);
        assert_eq!(out[0].failures[0].1, "assertion might not hold");
    }

    #[test]
    fn requires_excludes_counterexamples() {
        let out = outcomes("method m(x: int) requires x > 0 { assert x >= 1; }");
        assert!(out[0].failures.is_empty());
    }

    #[test]
    fn annotated_loop_verifies() {
        let src = "method m(n: nat) returns (r: int)\n  ensures r == n\n{\n  var i := 0;\n  r := 0;\n  while i < n\n    invariant 0 <= i <= n\n    invariant r == i\n  {\n    i := i + 1;\n    r := r + 1;\n  }\n}\n";
        let out = outcomes(src);
        assert!(out[0].failures.is_empty(), "{:?}", out[0].failures);
    }

    #[test]
    fn missing_invariant_fails_postcondition() {
        let src = "method m(n: nat) returns (r: int)\n  ensures r == n\n{\n  var i := 0;\n  r := 0;\n  while i < n\n    invariant 0 <= i <= n\n  {\n    i := i + 1;\n    r := r + 1;\n  }\n}\n";
        let out = outcomes(src);
        assert!(out[0]
            .failures
            .iter()
            .any(|(_, m)| m.contains("postcondition")));
    }

    #[test]
    fn quantifier_over_array_contents() {
        let src = "method m(a: array<int>)\n  requires forall k :: 0 <= k < a.Length ==> a[k] >= -2\n{\n  if a.Length > 0 {\n    assert a[0] >= -2;\n  }\n}\n";
        let out = outcomes(src);
        assert!(out[0].failures.is_empty(), "{:?}", out[0].failures);
    }

    #[test]
    fn guard_inferred_measure_proves_termination() {
        let src = "method m(n: nat)\n{\n  var i := 0;\n  while i < n\n    invariant 0 <= i <= n\n  {\n    i := i + 1;\n  }\n}\n";
        let out = outcomes(src);
        assert!(out[0].failures.is_empty(), "{:?}", out[0].failures);
    }

    #[test]
    fn bool_guard_needs_explicit_decreases() {
        let bad = "method m(n: nat)\n{\n  var i := n;\n  var go := i > 0;\n  while go\n    invariant 0 <= i\n  {\n    i := i - 1;\n    go := i > 0;\n  }\n}\n";
        let out = outcomes(bad);
        assert!(out[0].failures.iter().any(|(_, m)| m.contains("termination")));

        let good = "method m(n: nat)\n{\n  var i := n;\n  var go := i > 0;\n  while go\n    invariant 0 <= i\n    invariant go ==> i > 0\n    decreases i\n  {\n    i := i - 1;\n    go := i > 0;\n  }\n}\n";
        let out = outcomes(good);
        assert!(out[0].failures.is_empty(), "{:?}", out[0].failures);
    }

    #[test]
    fn division_is_euclidean() {
        let out = outcomes("method m() { assert -3 / 2 == -2; assert -3 % 2 == 1; }");
        assert!(out[0].failures.is_empty(), "{:?}", out[0].failures);
    }

    #[test]
    fn division_by_zero_is_caught() {
        let out = outcomes("method m(x: int) { var y := 4 / x; y := y; }");
        assert!(out[0]
            .failures
            .iter()
            .any(|(_, m)| m.contains("division by zero")));
    }

    #[test]
    fn call_uses_callee_contract() {
        let src = "method double(x: int) returns (r: int)\n  ensures r == 2 * x\n{\n  r := 2 * x;\n}\n\nmethod caller()\n{\n  var d := double(3);\n  assert d == 6;\n}\n";
        let out = outcomes(src);
        assert!(out.iter().all(|o| o.failures.is_empty()));
    }

    #[test]
    fn failing_precondition_is_reported_at_call() {
        let src = "method half(x: int) returns (r: int)\n  requires x % 2 == 0\n{\n  r := x / 2;\n}\n\nmethod caller()\n{\n  var h := half(3);\n  h := h;\n}\n";
        let out = outcomes(src);
        assert!(out[1]
            .failures
            .iter()
            .any(|(_, m)| m.contains("precondition")));
    }
}
