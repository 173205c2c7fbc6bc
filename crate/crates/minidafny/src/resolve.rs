//! Name resolution and type checking.
//!
//! Walks every method body, checking identifier scoping, assignment targets,
//! call signatures, and expression types. Errors are collected (rather than
//! failing fast) so a file with several problems reports them all, like the
//! full Dafny resolver. As a side effect, inferred types are written back into
//! untyped `var` declarations so later passes see a fully-typed program.
//!
//! Deliberate subset restrictions enforced here: no recursion, no assignment
//! to in-parameters, `int`/`nat` quantifier variables only.

use std::collections::{HashMap, HashSet};

use crate::ast::*;
use crate::lexer::Pos;

#[derive(Debug, Clone)]
pub struct ResolveError {
    pub pos: Pos,
    pub msg: String,
}

const MAX_ERRORS: usize = 20;

pub fn resolve(program: &mut Program) -> Result<(), Vec<ResolveError>> {
    let mut errors = Vec::new();

    let mut by_name: HashMap<String, usize> = HashMap::new();
    for (i, m) in program.methods.iter().enumerate() {
        if by_name.insert(m.name.clone(), i).is_some() {
            errors.push(ResolveError {
                pos: m.pos,
                msg: format!("duplicate method name: {}", m.name),
            });
        }
    }

    check_recursion(program, &mut errors);

    // Clone the signatures so method bodies can be checked (and mutated for
    // type inference) while callee signatures remain readable.
    let signatures: HashMap<String, (Vec<Param>, Vec<Param>)> = program
        .methods
        .iter()
        .map(|m| (m.name.clone(), (m.params.clone(), m.outs.clone())))
        .collect();

    for m in &mut program.methods {
        let mut ck = MethodChecker {
            signatures: &signatures,
            method_name: m.name.clone(),
            scopes: Vec::new(),
            mutable: HashSet::new(),
            errors: &mut errors,
        };
        ck.check_method(m);
    }

    errors.truncate(MAX_ERRORS);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

fn check_recursion(program: &Program, errors: &mut Vec<ResolveError>) {
    let mut calls: HashMap<&str, Vec<&str>> = HashMap::new();
    for m in &program.methods {
        let mut callees = Vec::new();
        collect_callees(&m.body, &mut callees);
        calls.insert(&m.name, callees);
    }
    for m in &program.methods {
        let mut seen = HashSet::new();
        let mut stack = vec![m.name.as_str()];
        let mut cyclic = false;
        while let Some(name) = stack.pop() {
            for callee in calls.get(name).into_iter().flatten() {
                if *callee == m.name {
                    cyclic = true;
                } else if seen.insert(*callee) {
                    stack.push(callee);
                }
            }
            if cyclic {
                break;
            }
        }
        if cyclic {
            errors.push(ResolveError {
                pos: m.pos,
                msg: format!("recursion involving method '{}' is not supported", m.name),
            });
        }
    }
}

fn collect_callees<'a>(block: &'a Block, out: &mut Vec<&'a str>) {
    for s in &block.stmts {
        match s {
            Stmt::Call { callee, .. } => out.push(callee),
            Stmt::If { then_block, else_block, .. } => {
                collect_callees(then_block, out);
                if let Some(e) = else_block {
                    collect_callees(e, out);
                }
            }
            Stmt::While { body, .. } => collect_callees(body, out),
            Stmt::Block(b) => collect_callees(b, out),
            _ => {}
        }
    }
}

struct MethodChecker<'a> {
    signatures: &'a HashMap<String, (Vec<Param>, Vec<Param>)>,
    method_name: String,
    /// Innermost scope last; each maps name -> declared type.
    scopes: Vec<HashMap<String, Type>>,
    /// Names that may be assigned (locals and out-parameters).
    mutable: HashSet<String>,
    errors: &'a mut Vec<ResolveError>,
}

impl<'a> MethodChecker<'a> {
    fn error(&mut self, pos: Pos, msg: String) {
        self.errors.push(ResolveError { pos, msg });
    }

    fn lookup(&self, name: &str) -> Option<Type> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }

    fn declare(&mut self, name: &str, ty: Type, pos: Pos) {
        // Shadowing across nested scopes is rejected along with same-scope
        // duplicates: later passes track variables by name, and the subset
        // loses nothing of interest.
        if self.lookup(name).is_some() {
            self.errors.push(ResolveError {
                pos,
                msg: format!("'{name}' shadows or duplicates an existing declaration"),
            });
            return;
        }
        let top = self.scopes.last_mut().expect("scope stack never empty");
        top.insert(name.to_string(), ty);
    }

    fn check_method(&mut self, m: &mut Method) {
        // requires may mention in-parameters only.
        self.scopes.push(HashMap::new());
        for p in &m.params {
            self.declare(&p.name, p.ty, p.pos);
        }
        for spec in &m.requires {
            self.expect_type(&spec.expr, Type::Bool, "requires clause");
        }
        for spec in &m.decreases {
            self.expect_type(&spec.expr, Type::Int, "decreases clause");
        }

        // ensures and the body see in- and out-parameters.
        for p in &m.outs {
            self.declare(&p.name, p.ty, p.pos);
            self.mutable.insert(p.name.clone());
        }
        for spec in &m.ensures {
            self.expect_type(&spec.expr, Type::Bool, "ensures clause");
        }

        let outs = m.outs.clone();
        self.check_block(&mut m.body, &outs, false);
        self.scopes.pop();
        self.mutable.clear();
    }

    fn check_block(&mut self, block: &mut Block, outs: &[Param], new_scope: bool) {
        if new_scope {
            self.scopes.push(HashMap::new());
        }
        // Names declared in this block become invisible again when it ends,
        // but mutability tracking can stay coarse: declarations shadowing an
        // immutable name are rejected anyway by `duplicate declaration` or
        // allowed as genuinely new mutable locals.
        let mut stmts = std::mem::take(&mut block.stmts);
        for i in 0..stmts.len() {
            // `var x := m(...);` parses as an uninitialized declaration
            // followed by a call that binds it; pull the variable's type from
            // the callee signature before the declaration is checked.
            let uninitialized = match &stmts[i] {
                Stmt::VarDecl { name, ty: None, init: None, .. } => Some(name.clone()),
                _ => None,
            };
            if let Some(name) = uninitialized {
                let inferred = match stmts.get(i + 1) {
                    Some(Stmt::Call { outs: bound, callee, .. }) => {
                        let slot = bound.iter().position(|b| *b == name);
                        match (slot, self.signatures.get(callee)) {
                            (Some(j), Some((_, callee_outs))) => {
                                callee_outs.get(j).map(|p| p.ty)
                            }
                            _ => None,
                        }
                    }
                    _ => None,
                };
                if let (Some(t), Stmt::VarDecl { ty, .. }) = (inferred, &mut stmts[i]) {
                    *ty = Some(t);
                }
            }
            self.check_stmt(&mut stmts[i], outs);
        }
        block.stmts = stmts;
        if new_scope {
            self.scopes.pop();
        }
    }

    fn check_stmt(&mut self, stmt: &mut Stmt, outs: &[Param]) {
        match stmt {
            Stmt::VarDecl { name, ty, init, pos } => {
                let declared = match (&ty, &init) {
                    (Some(t), Some(e)) => {
                        self.expect_type(e, t.base(), "initializer");
                        Some(*t)
                    }
                    (Some(t), None) => Some(*t),
                    (None, Some(e)) => self.type_of(e).ok(),
                    (None, None) => {
                        self.error(
                            *pos,
                            format!("cannot infer type of '{name}' without initializer"),
                        );
                        None
                    }
                };
                let t = declared.unwrap_or(Type::Int);
                *ty = Some(t);
                self.declare(name, t, *pos);
                self.mutable.insert(name.clone());
            }
            Stmt::Assign { name, value, pos } => {
                match self.lookup(name) {
                    None => self.error(*pos, format!("unresolved identifier: {name}")),
                    Some(t) => {
                        if !self.mutable.contains(name.as_str()) {
                            self.error(
                                *pos,
                                format!("cannot assign to in-parameter '{name}'"),
                            );
                        }
                        self.expect_type(value, t.base(), "assignment");
                    }
                }
            }
            Stmt::If { cond, then_block, else_block, .. } => {
                self.expect_type(cond, Type::Bool, "if condition");
                self.check_block(then_block, outs, true);
                if let Some(e) = else_block {
                    self.check_block(e, outs, true);
                }
            }
            Stmt::While { guard, invariants, decreases, body, .. } => {
                self.expect_type(guard, Type::Bool, "loop guard");
                for inv in invariants.iter() {
                    self.expect_type(&inv.expr, Type::Bool, "invariant clause");
                }
                for dec in decreases.iter() {
                    self.expect_type(&dec.expr, Type::Int, "decreases clause");
                }
                if decreases.len() > 1 {
                    self.error(
                        decreases[1].pos,
                        "at most one decreases clause is supported per loop".to_string(),
                    );
                }
                self.check_block(body, outs, true);
            }
            Stmt::Assert { expr, .. } => {
                self.expect_type(expr, Type::Bool, "assertion");
            }
            Stmt::Return { value, pos } => match (value, outs.len()) {
                (None, _) => {}
                (Some(e), 1) => {
                    self.expect_type(e, outs[0].ty.base(), "return value");
                }
                (Some(_), 0) => {
                    self.error(*pos, "method has no out-parameters to return".to_string());
                }
                (Some(_), _) => {
                    self.error(
                        *pos,
                        "return with a value requires exactly one out-parameter".to_string(),
                    );
                }
            },
            Stmt::Call { outs: bound, callee, args, pos } => {
                let Some((params, callee_outs)) = self.signatures.get(callee).cloned() else {
                    self.error(*pos, format!("unresolved method: {callee}"));
                    return;
                };
                if callee == &self.method_name {
                    // Already reported by the recursion check; avoid cascading.
                }
                if args.len() != params.len() {
                    self.error(
                        *pos,
                        format!(
                            "wrong number of arguments to '{callee}': expected {}, got {}",
                            params.len(),
                            args.len()
                        ),
                    );
                } else {
                    for (arg, p) in args.iter().zip(&params) {
                        self.expect_type(arg, p.ty.base(), "call argument");
                    }
                }
                if bound.is_empty() && !callee_outs.is_empty() {
                    self.error(
                        *pos,
                        format!("results of call to '{callee}' must be assigned"),
                    );
                } else if !bound.is_empty() && bound.len() != callee_outs.len() {
                    self.error(
                        *pos,
                        format!(
                            "call to '{callee}' returns {} value(s), but {} variable(s) bound",
                            callee_outs.len(),
                            bound.len()
                        ),
                    );
                } else {
                    for (name, out) in bound.iter().zip(&callee_outs) {
                        match self.lookup(name) {
                            None => self.error(*pos, format!("unresolved identifier: {name}")),
                            Some(t) => {
                                if !self.mutable.contains(name.as_str()) {
                                    self.error(
                                        *pos,
                                        format!("cannot assign to in-parameter '{name}'"),
                                    );
                                } else if t.base() != out.ty.base() {
                                    self.error(
                                        *pos,
                                        format!(
                                            "type mismatch binding result of '{callee}' to '{name}'"
                                        ),
                                    );
                                }
                            }
                        }
                    }
                }
            }
            Stmt::Block(b) => self.check_block(b, outs, true),
        }
    }

    fn expect_type(&mut self, e: &Expr, want: Type, what: &str) {
        if let Ok(t) = self.type_of(e) {
            if t.base() != want.base() {
                self.error(
                    e.pos(),
                    format!("{what} must have type {}, found {}", want.base().name(), t.name()),
                );
            }
        }
    }

    /// Infers the type of an expression, recording (and returning) the first
    /// error found inside it.
    fn type_of(&mut self, e: &Expr) -> Result<Type, ()> {
        match e {
            Expr::IntLit(..) => Ok(Type::Int),
            Expr::BoolLit(..) => Ok(Type::Bool),
            Expr::Var(name, pos) => match self.lookup(name) {
                Some(t) => Ok(t.base()),
                None => {
                    self.error(*pos, format!("unresolved identifier: {name}"));
                    Err(())
                }
            },
            Expr::Length(inner, pos) => {
                let t = self.type_of(inner)?;
                if t != Type::ArrayInt {
                    self.error(*pos, format!(".Length requires an array, found {}", t.name()));
                    return Err(());
                }
                Ok(Type::Int)
            }
            Expr::Index(arr, idx, pos) => {
                let ta = self.type_of(arr)?;
                if ta != Type::ArrayInt {
                    self.error(*pos, format!("indexing requires an array, found {}", ta.name()));
                    return Err(());
                }
                let ti = self.type_of(idx)?;
                if ti.base() != Type::Int {
                    self.error(*pos, format!("array index must be int, found {}", ti.name()));
                    return Err(());
                }
                Ok(Type::Int)
            }
            Expr::Unary(op, inner, pos) => {
                let t = self.type_of(inner)?;
                let (want, result) = match op {
                    UnOp::Neg => (Type::Int, Type::Int),
                    UnOp::Not => (Type::Bool, Type::Bool),
                };
                if t.base() != want {
                    self.error(*pos, format!("operand must be {}, found {}", want.name(), t.name()));
                    return Err(());
                }
                Ok(result)
            }
            Expr::Binary(op, lhs, rhs, pos) => {
                let tl = self.type_of(lhs)?;
                let tr = self.type_of(rhs)?;
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Mod => {
                        if tl.base() != Type::Int || tr.base() != Type::Int {
                            self.error(*pos, "arithmetic requires int operands".to_string());
                            return Err(());
                        }
                        Ok(Type::Int)
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if tl.base() != Type::Int || tr.base() != Type::Int {
                            self.error(*pos, "comparison requires int operands".to_string());
                            return Err(());
                        }
                        Ok(Type::Bool)
                    }
                    BinOp::Eq | BinOp::Ne => {
                        if tl == Type::ArrayInt || tr == Type::ArrayInt {
                            self.error(*pos, "array comparison is not supported".to_string());
                            return Err(());
                        }
                        if tl.base() != tr.base() {
                            self.error(
                                *pos,
                                format!(
                                    "cannot compare {} with {}",
                                    tl.name(),
                                    tr.name()
                                ),
                            );
                            return Err(());
                        }
                        Ok(Type::Bool)
                    }
                    BinOp::And | BinOp::Or | BinOp::Implies | BinOp::Iff => {
                        if tl.base() != Type::Bool || tr.base() != Type::Bool {
                            self.error(*pos, "logical operator requires bool operands".to_string());
                            return Err(());
                        }
                        Ok(Type::Bool)
                    }
                }
            }
            Expr::IfThenElse(c, t, f, pos) => {
                let tc = self.type_of(c)?;
                if tc.base() != Type::Bool {
                    self.error(*pos, "if-then-else condition must be bool".to_string());
                    return Err(());
                }
                let tt = self.type_of(t)?;
                let tf = self.type_of(f)?;
                if tt.base() != tf.base() {
                    self.error(*pos, "if-then-else branches must have the same type".to_string());
                    return Err(());
                }
                Ok(tt.base())
            }
            Expr::Quant { var, ty, body, pos, .. } => {
                if !matches!(ty, Type::Int | Type::Nat) {
                    self.error(
                        *pos,
                        "only int/nat quantifier variables are supported".to_string(),
                    );
                    return Err(());
                }
                if self.lookup(var).is_some() {
                    self.error(
                        *pos,
                        format!("quantifier variable '{var}' shadows an existing name"),
                    );
                    return Err(());
                }
                self.scopes.push(HashMap::new());
                self.scopes.last_mut().unwrap().insert(var.clone(), *ty);
                let tb = self.type_of(body);
                self.scopes.pop();
                let tb = tb?;
                if tb.base() != Type::Bool {
                    self.error(*pos, "quantifier body must be bool".to_string());
                    return Err(());
                }
                Ok(Type::Bool)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn resolve_src(src: &str) -> Result<(), Vec<ResolveError>> {
        let mut p = parse(src).unwrap();
        resolve(&mut p)
    }

    #[test]
    fn accepts_well_typed_method() {
        let src = "method m(n: nat) returns (s: int)\n  ensures s >= 0\n{ s := 0; var i := 0; while i < n invariant 0 <= i decreases n - i { s := s + 1; i := i + 1; } }";
        assert!(resolve_src(src).is_ok());
    }

    #[test]
    fn reports_unresolved_identifier_with_position() {
        let errs = resolve_src("method m() { x := 1; }").unwrap_err();
        assert!(errs[0].msg.contains("unresolved identifier: x"));
        assert_eq!((errs[0].pos.line, errs[0].pos.col), (1, 14));
    }

    #[test]
    fn rejects_assignment_to_in_parameter() {
        let errs = resolve_src("method m(x: int) { x := 1; }").unwrap_err();
        assert!(errs[0].msg.contains("cannot assign to in-parameter"));
    }

    #[test]
    fn rejects_type_mismatches() {
        assert!(resolve_src("method m() { var b: bool := 1; }").is_err());
        assert!(resolve_src("method m(n: int) { assert n; }").is_err());
        assert!(resolve_src("method m(a: array<int>) { var x := a + 1; }").is_err());
    }

    #[test]
    fn rejects_recursion() {
        let errs = resolve_src("method m(n: nat) { m(n); }").unwrap_err();
        assert!(errs.iter().any(|e| e.msg.contains("recursion")));
    }

    #[test]
    fn rejects_mutual_recursion() {
        let src = "method a() { b(); }\nmethod b() { a(); }";
        let errs = resolve_src(src).unwrap_err();
        assert!(errs.iter().any(|e| e.msg.contains("recursion")));
    }

    #[test]
    fn infers_var_decl_types() {
        let src = "method m(a: array<int>) { var b := a; var n := b.Length; }";
        let mut p = parse(src).unwrap();
        resolve(&mut p).unwrap();
        match &p.methods[0].body.stmts[0] {
            Stmt::VarDecl { ty: Some(Type::ArrayInt), .. } => {}
            other => panic!("expected inferred array type, got {other:?}"),
        }
    }

    #[test]
    fn collects_multiple_errors() {
        let errs = resolve_src("method m() { x := 1; y := 2; }").unwrap_err();
        assert_eq!(errs.len(), 2);
    }

    #[test]
    fn call_checks() {
        let ok = "method inc(x: int) returns (r: int) { r := x + 1; }\nmethod m() { var y: int := inc(1); y := y; }";
        assert!(resolve_src(ok).is_ok());
        let bad_arity = "method inc(x: int) returns (r: int) { r := x; }\nmethod m() { var y: int := inc(1, 2); }";
        assert!(resolve_src(bad_arity).is_err());
        let unbound = "method inc(x: int) returns (r: int) { r := x; }\nmethod m() { inc(1); }";
        assert!(resolve_src(unbound).is_err());
    }
}
