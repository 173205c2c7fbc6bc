//! Verification-condition generation by forward symbolic execution.
//!
//! Each method body is explored path by path. Loops are handled modularly, the
//! way a deductive verifier does: invariants are checked on entry, the loop
//! head state is havocked (every variable the body assigns becomes a fresh
//! symbol constrained only by the invariants), invariants are re-checked after
//! one symbolic iteration, and execution continues past the loop from the
//! havocked state plus the negated guard. Termination uses an explicit
//! `decreases` clause when present, otherwise a measure inferred from `a < b`
//! or `a <= b` shaped guards.
//!
//! Well-formedness of executable expressions (array indexing in bounds,
//! division by zero, `nat` assignments non-negative) produces its own guarded
//! obligations, with the short-circuit structure of `&&`/`||`/`==>`/if-then-else
//! taken into account. Specification clauses check their own well-formedness
//! implicitly: an evaluation that is undefined where the clause is a proof
//! goal counts as a counterexample, while hypotheses that fail to evaluate
//! simply exclude that valuation.

use std::collections::{BTreeSet, HashMap};
use std::rc::Rc;

use crate::ast::*;
use crate::lexer::Pos;

/// Symbolic expression over a method's symbol table. Program variables have
/// been substituted away; only free symbols (parameters, havocked variables)
/// and quantifier-bound symbols remain.
#[derive(Debug)]
pub enum SExpr {
    Int(i64),
    Bool(bool),
    Sym(usize),
    Neg(Rc<SExpr>),
    Not(Rc<SExpr>),
    Bin(BinOp, Rc<SExpr>, Rc<SExpr>),
    Ite(Rc<SExpr>, Rc<SExpr>, Rc<SExpr>),
    Len(Rc<SExpr>),
    Idx(Rc<SExpr>, Rc<SExpr>),
    Quant { forall: bool, var: usize, nonneg: bool, body: Rc<SExpr> },
}

#[derive(Debug)]
pub struct SymInfo {
    pub name: String,
    pub ty: Type,
    /// Bound symbols belong to quantifiers and are never enumerated as free.
    pub bound: bool,
}

/// One proof obligation: `hyps |- goal`, attributed to a source position.
pub struct Obligation {
    pub hyps: Vec<Rc<SExpr>>,
    pub goal: Rc<SExpr>,
    pub pos: Pos,
    pub msg: String,
}

pub struct MethodVcs {
    pub name: String,
    pub pos: Pos,
    pub symbols: Vec<SymInfo>,
    pub obligations: Vec<Obligation>,
}

pub fn generate(program: &Program) -> Vec<MethodVcs> {
    let by_name: HashMap<&str, &Method> =
        program.methods.iter().map(|m| (m.name.as_str(), m)).collect();
    program.methods.iter().map(|m| Gen::run(m, &by_name)).collect()
}

#[derive(Clone)]
struct State {
    env: HashMap<String, Rc<SExpr>>,
    types: HashMap<String, Type>,
    path: Vec<Rc<SExpr>>,
}

struct Gen<'a> {
    methods: &'a HashMap<&'a str, &'a Method>,
    current: &'a Method,
    symbols: Vec<SymInfo>,
    obligations: Vec<Obligation>,
}

fn rc_int(n: i64) -> Rc<SExpr> {
    Rc::new(SExpr::Int(n))
}

fn bin(op: BinOp, l: Rc<SExpr>, r: Rc<SExpr>) -> Rc<SExpr> {
    Rc::new(SExpr::Bin(op, l, r))
}

impl<'a> Gen<'a> {
    fn run(m: &'a Method, methods: &'a HashMap<&'a str, &'a Method>) -> MethodVcs {
        let mut gen = Gen { methods, current: m, symbols: Vec::new(), obligations: Vec::new() };

        let mut state =
            State { env: HashMap::new(), types: HashMap::new(), path: Vec::new() };
        for p in m.params.iter().chain(&m.outs) {
            let sym = gen.fresh(&p.name, p.ty, false);
            if p.ty == Type::Nat {
                state.path.push(bin(BinOp::Ge, Rc::new(SExpr::Sym(sym)), rc_int(0)));
            }
            state.env.insert(p.name.clone(), Rc::new(SExpr::Sym(sym)));
            state.types.insert(p.name.clone(), p.ty);
        }
        for req in &m.requires {
            let h = gen.symbolize(&req.expr, &state.env);
            state.path.push(h);
        }

        let finals = gen.exec_block(&m.body, state);
        for s in finals {
            gen.check_ensures(&s);
        }

        MethodVcs {
            name: m.name.clone(),
            pos: m.pos,
            symbols: gen.symbols,
            obligations: gen.obligations,
        }
    }

    fn fresh(&mut self, name: &str, ty: Type, bound: bool) -> usize {
        self.symbols.push(SymInfo { name: name.to_string(), ty, bound });
        self.symbols.len() - 1
    }

    fn obligation(&mut self, hyps: Vec<Rc<SExpr>>, goal: Rc<SExpr>, pos: Pos, msg: &str) {
        self.obligations.push(Obligation { hyps, goal, pos, msg: to_owned(msg) });
    }

    // ---- Translation to symbolic expressions ----------------------------

    fn symbolize(&mut self, e: &Expr, env: &HashMap<String, Rc<SExpr>>) -> Rc<SExpr> {
        match e {
            Expr::IntLit(n, _) => rc_int(*n),
            Expr::BoolLit(b, _) => Rc::new(SExpr::Bool(*b)),
            Expr::Var(name, _) => {
                env.get(name).cloned().unwrap_or_else(|| panic!("unbound variable {name}"))
            }
            Expr::Length(a, _) => Rc::new(SExpr::Len(self.symbolize(a, env))),
            Expr::Index(a, i, _) => {
                Rc::new(SExpr::Idx(self.symbolize(a, env), self.symbolize(i, env)))
            }
            Expr::Unary(UnOp::Neg, x, _) => Rc::new(SExpr::Neg(self.symbolize(x, env))),
            Expr::Unary(UnOp::Not, x, _) => Rc::new(SExpr::Not(self.symbolize(x, env))),
            Expr::Binary(op, l, r, _) => {
                bin(*op, self.symbolize(l, env), self.symbolize(r, env))
            }
            Expr::IfThenElse(c, t, f, _) => Rc::new(SExpr::Ite(
                self.symbolize(c, env),
                self.symbolize(t, env),
                self.symbolize(f, env),
            )),
            Expr::Quant { q, var, ty, body, .. } => {
                let sym = self.fresh(var, Type::Int, true);
                let mut inner = env.clone();
                inner.insert(var.clone(), Rc::new(SExpr::Sym(sym)));
                let body = self.symbolize(body, &inner);
                Rc::new(SExpr::Quant {
                    forall: *q == QKind::Forall,
                    var: sym,
                    nonneg: *ty == Type::Nat,
                    body,
                })
            }
        }
    }

    // ---- Well-formedness obligations ------------------------------------

    /// Emits guarded well-formedness obligations for an executable expression
    /// and then assumes them on the path (check-then-assume).
    fn wf_check(&mut self, e: &Expr, state: &mut State) {
        let mut atoms = Vec::new();
        let env = state.env.clone();
        self.wf_collect(e, &env, None, &mut atoms);
        for (cond, pos, msg) in atoms {
            self.obligation(state.path.clone(), cond.clone(), pos, &msg);
            state.path.push(cond);
        }
    }

    fn wf_collect(
        &mut self,
        e: &Expr,
        env: &HashMap<String, Rc<SExpr>>,
        guard: Option<Rc<SExpr>>,
        out: &mut Vec<(Rc<SExpr>, Pos, String)>,
    ) {
        let guarded = |cond: Rc<SExpr>, guard: &Option<Rc<SExpr>>| match guard {
            None => cond,
            Some(g) => bin(BinOp::Implies, g.clone(), cond),
        };
        let and = |a: Option<Rc<SExpr>>, b: Rc<SExpr>| -> Option<Rc<SExpr>> {
            Some(match a {
                None => b,
                Some(a) => bin(BinOp::And, a, b),
            })
        };
        match e {
            Expr::IntLit(..) | Expr::BoolLit(..) | Expr::Var(..) => {}
            Expr::Length(a, _) => self.wf_collect(a, env, guard, out),
            Expr::Index(a, i, pos) => {
                self.wf_collect(a, env, guard.clone(), out);
                self.wf_collect(i, env, guard.clone(), out);
                let ai = self.symbolize(i, env);
                let aa = self.symbolize(a, env);
                let in_bounds = bin(
                    BinOp::And,
                    bin(BinOp::Le, rc_int(0), ai.clone()),
                    bin(BinOp::Lt, ai, Rc::new(SExpr::Len(aa))),
                );
                out.push((guarded(in_bounds, &guard), *pos, to_owned("index out of range")));
            }
            Expr::Unary(_, x, _) => self.wf_collect(x, env, guard, out),
            Expr::Binary(op, l, r, pos) => {
                self.wf_collect(l, env, guard.clone(), out);
                let sl = self.symbolize(l, env);
                match op {
                    BinOp::And | BinOp::Implies => {
                        self.wf_collect(r, env, and(guard, sl), out);
                    }
                    BinOp::Or => {
                        self.wf_collect(r, env, and(guard, Rc::new(SExpr::Not(sl))), out);
                    }
                    BinOp::Div | BinOp::Mod => {
                        self.wf_collect(r, env, guard.clone(), out);
                        let sr = self.symbolize(r, env);
                        let nonzero = bin(BinOp::Ne, sr, rc_int(0));
                        out.push((
                            guarded(nonzero, &guard),
                            *pos,
                            to_owned("possible division by zero"),
                        ));
                    }
                    _ => self.wf_collect(r, env, guard, out),
                }
            }
            Expr::IfThenElse(c, t, f, _) => {
                self.wf_collect(c, env, guard.clone(), out);
                let sc = self.symbolize(c, env);
                self.wf_collect(t, env, and(guard.clone(), sc.clone()), out);
                self.wf_collect(f, env, and(guard, Rc::new(SExpr::Not(sc))), out);
            }
            Expr::Quant { var, ty, body, .. } => {
                let sym = self.fresh(var, Type::Int, true);
                let mut inner_env = env.clone();
                inner_env.insert(var.clone(), Rc::new(SExpr::Sym(sym)));
                let mut inner = Vec::new();
                self.wf_collect(body, &inner_env, None, &mut inner);
                for (cond, pos, msg) in inner {
                    let wrapped = Rc::new(SExpr::Quant {
                        forall: true,
                        var: sym,
                        nonneg: *ty == Type::Nat,
                        body: cond,
                    });
                    out.push((guarded(wrapped, &guard), pos, msg));
                }
            }
        }
    }

    /// Obligation that a value flowing into a `nat`-typed location is
    /// non-negative, followed by the corresponding assumption.
    fn nat_check(&mut self, value: &Rc<SExpr>, pos: Pos, state: &mut State) {
        let cond = bin(BinOp::Ge, value.clone(), rc_int(0));
        self.obligation(state.path.clone(), cond.clone(), pos, "value assigned to a nat might be negative");
        state.path.push(cond);
    }

    // ---- Statement execution --------------------------------------------

    fn exec_block(&mut self, block: &Block, state: State) -> Vec<State> {
        let mut states = vec![state];
        for stmt in &block.stmts {
            let mut next = Vec::new();
            for s in states {
                next.extend(self.exec_stmt(stmt, s));
            }
            states = next;
            if states.is_empty() {
                break; // every path returned
            }
        }
        states
    }

    fn exec_stmt(&mut self, stmt: &Stmt, mut state: State) -> Vec<State> {
        match stmt {
            Stmt::VarDecl { name, ty, init, pos } => {
                let ty = ty.unwrap_or(Type::Int);
                let value = match init {
                    Some(e) => {
                        self.wf_check(e, &mut state);
                        let v = self.symbolize(e, &state.env);
                        if ty == Type::Nat {
                            self.nat_check(&v, *pos, &mut state);
                        }
                        v
                    }
                    None => {
                        let sym = self.fresh(name, ty, false);
                        if ty == Type::Nat {
                            state.path.push(bin(BinOp::Ge, Rc::new(SExpr::Sym(sym)), rc_int(0)));
                        }
                        Rc::new(SExpr::Sym(sym))
                    }
                };
                state.env.insert(name.clone(), value);
                state.types.insert(name.clone(), ty);
                vec![state]
            }
            Stmt::Assign { name, value, pos } => {
                self.wf_check(value, &mut state);
                let v = self.symbolize(value, &state.env);
                if state.types.get(name) == Some(&Type::Nat) {
                    self.nat_check(&v, *pos, &mut state);
                }
                state.env.insert(name.clone(), v);
                vec![state]
            }
            Stmt::If { cond, then_block, else_block, .. } => {
                self.wf_check(cond, &mut state);
                let c = self.symbolize(cond, &state.env);
                let mut then_state = state.clone();
                then_state.path.push(c.clone());
                let mut out = self.exec_block(then_block, then_state);
                let mut else_state = state;
                else_state.path.push(Rc::new(SExpr::Not(c)));
                match else_block {
                    Some(b) => out.extend(self.exec_block(b, else_state)),
                    None => out.push(else_state),
                }
                out
            }
            Stmt::While { guard, invariants, decreases, body, pos } => {
                self.exec_while(guard, invariants, decreases, body, *pos, state)
            }
            Stmt::Assert { expr, pos } => {
                self.wf_check(expr, &mut state);
                let g = self.symbolize(expr, &state.env);
                self.obligation(state.path.clone(), g.clone(), *pos, "assertion might not hold");
                state.path.push(g);
                vec![state]
            }
            Stmt::Return { value, pos } => {
                if let Some(e) = value {
                    self.wf_check(e, &mut state);
                    let v = self.symbolize(e, &state.env);
                    let out = &self.current.outs[0];
                    if out.ty == Type::Nat {
                        self.nat_check(&v, *pos, &mut state);
                    }
                    state.env.insert(out.name.clone(), v);
                }
                self.check_ensures(&state);
                Vec::new()
            }
            Stmt::Call { outs, callee, args, pos } => {
                let callee = *self.methods.get(callee.as_str()).expect("resolved callee");
                let mut arg_vals = Vec::new();
                for (arg, param) in args.iter().zip(&callee.params) {
                    self.wf_check(arg, &mut state);
                    let v = self.symbolize(arg, &state.env);
                    if param.ty == Type::Nat {
                        self.nat_check(&v, *pos, &mut state);
                    }
                    arg_vals.push(v);
                }
                // Callee's requires, under the argument substitution.
                let mut callee_env: HashMap<String, Rc<SExpr>> = callee
                    .params
                    .iter()
                    .map(|p| p.name.clone())
                    .zip(arg_vals)
                    .collect();
                for req in &callee.requires {
                    let g = self.symbolize(&req.expr, &callee_env);
                    self.obligation(
                        state.path.clone(),
                        g.clone(),
                        *pos,
                        "a precondition for this call could not be proved",
                    );
                    state.path.push(g);
                }
                // Havoc the results and assume the callee's ensures.
                for out_param in &callee.outs {
                    let sym = self.fresh(&out_param.name, out_param.ty, false);
                    if out_param.ty == Type::Nat {
                        state.path.push(bin(BinOp::Ge, Rc::new(SExpr::Sym(sym)), rc_int(0)));
                    }
                    callee_env.insert(out_param.name.clone(), Rc::new(SExpr::Sym(sym)));
                }
                for ens in &callee.ensures {
                    let h = self.symbolize(&ens.expr, &callee_env);
                    state.path.push(h);
                }
                for (name, out_param) in outs.iter().zip(&callee.outs) {
                    let v = callee_env[&out_param.name].clone();
                    if state.types.get(name) == Some(&Type::Nat) && out_param.ty != Type::Nat {
                        self.nat_check(&v, *pos, &mut state);
                    }
                    state.env.insert(name.clone(), v);
                }
                vec![state]
            }
            Stmt::Block(b) => self.exec_block(b, state),
        }
    }

    fn exec_while(
        &mut self,
        guard: &Expr,
        invariants: &[Spec],
        decreases: &[Spec],
        body: &Block,
        pos: Pos,
        mut state: State,
    ) -> Vec<State> {
        // Invariants hold on entry; each clause may assume the ones before it.
        let mut entry_hyps = state.path.clone();
        for inv in invariants {
            let g = self.symbolize(&inv.expr, &state.env);
            self.obligation(
                entry_hyps.clone(),
                g.clone(),
                inv.pos,
                "this loop invariant could not be proved on entry",
            );
            entry_hyps.push(g);
        }
        state.path = entry_hyps;
        self.wf_check(guard, &mut state);

        // Havoc everything the body can assign.
        let mut assigned = BTreeSet::new();
        assigned_vars(body, &mut assigned);
        let mut head = state.clone();
        for var in &assigned {
            if let Some(ty) = head.types.get(var).copied() {
                let sym = self.fresh(var, ty, false);
                if ty == Type::Nat {
                    head.path.push(bin(BinOp::Ge, Rc::new(SExpr::Sym(sym)), rc_int(0)));
                }
                head.env.insert(var.clone(), Rc::new(SExpr::Sym(sym)));
            }
        }
        for inv in invariants {
            let h = self.symbolize(&inv.expr, &head.env);
            head.path.push(h);
        }
        self.wf_check(guard, &mut head);
        let guard_h = self.symbolize(guard, &head.env);

        // Termination measure: explicit clause, else inferred from the guard.
        enum Measure<'e> {
            Explicit(&'e Expr, Pos),
            Inferred(Expr),
            None,
        }
        let measure = if let Some(dec) = decreases.first() {
            Measure::Explicit(&dec.expr, dec.pos)
        } else {
            match infer_measure(guard) {
                Some(m) => Measure::Inferred(m),
                None => Measure::None,
            }
        };

        // One symbolic iteration.
        let mut iter_state = head.clone();
        iter_state.path.push(guard_h.clone());
        if let Measure::Explicit(m, _) = &measure {
            self.wf_check(m, &mut iter_state);
        }
        let measure_before = match &measure {
            Measure::Explicit(m, _) => Some(self.symbolize(m, &iter_state.env)),
            Measure::Inferred(m) => Some(self.symbolize(&m.clone(), &iter_state.env)),
            Measure::None => None,
        };
        let body_states = self.exec_block(body, iter_state);
        for s in body_states {
            let mut prior = s.path.clone();
            for inv in invariants {
                let g = self.symbolize(&inv.expr, &s.env);
                self.obligation(
                    prior.clone(),
                    g.clone(),
                    inv.pos,
                    "this loop invariant might not be maintained by the loop",
                );
                prior.push(g);
            }
            match (&measure, &measure_before) {
                (Measure::Explicit(m, mpos), Some(before)) => {
                    let after = self.symbolize(m, &s.env);
                    self.obligation(
                        s.path.clone(),
                        bin(BinOp::Lt, after, before.clone()),
                        *mpos,
                        "decreases expression might not decrease",
                    );
                    self.obligation(
                        s.path.clone(),
                        bin(BinOp::Ge, before.clone(), rc_int(0)),
                        *mpos,
                        "decreases expression might become negative",
                    );
                }
                (Measure::Inferred(m), Some(before)) => {
                    let after = self.symbolize(&m.clone(), &s.env);
                    let ok = bin(
                        BinOp::And,
                        bin(BinOp::Lt, after, before.clone()),
                        bin(BinOp::Ge, before.clone(), rc_int(0)),
                    );
                    self.obligation(
                        s.path.clone(),
                        ok,
                        pos,
                        "cannot prove termination; try supplying a decreases clause for the loop",
                    );
                }
                _ => {
                    self.obligation(
                        s.path.clone(),
                        Rc::new(SExpr::Bool(false)),
                        pos,
                        "cannot prove termination; try supplying a decreases clause for the loop",
                    );
                }
            }
        }

        // Exit: havocked state, invariants, negated guard.
        let mut exit = head;
        exit.path.push(Rc::new(SExpr::Not(guard_h)));
        vec![exit]
    }

    fn check_ensures(&mut self, state: &State) {
        let ensures = self.current.ensures.clone();
        let mut hyps = state.path.clone();
        for ens in &ensures {
            let g = self.symbolize(&ens.expr, &state.env);
            self.obligation(
                hyps.clone(),
                g.clone(),
                ens.pos,
                "a postcondition could not be proved on this return path",
            );
            hyps.push(g);
        }
    }
}

/// Variables assigned anywhere inside a block (including nested statements).
fn assigned_vars(block: &Block, out: &mut BTreeSet<String>) {
    for stmt in &block.stmts {
        match stmt {
            Stmt::Assign { name, .. } => {
                out.insert(name.clone());
            }
            Stmt::Call { outs, .. } => {
                out.extend(outs.iter().cloned());
            }
            Stmt::Return { .. } | Stmt::Assert { .. } | Stmt::VarDecl { .. } => {}
            Stmt::If { then_block, else_block, .. } => {
                assigned_vars(then_block, out);
                if let Some(e) = else_block {
                    assigned_vars(e, out);
                }
            }
            Stmt::While { body, .. } => assigned_vars(body, out),
            Stmt::Block(b) => assigned_vars(b, out),
        }
    }
}

/// Guard-derived termination measure: `a < b` / `a <= b` yield `b - a`,
/// `a > b` / `a >= b` yield `a - b`. For conjunctions (including desugared
/// comparison chains) the rightmost usable conjunct wins.
fn infer_measure(guard: &Expr) -> Option<Expr> {
    match guard {
        Expr::Binary(BinOp::Lt | BinOp::Le, a, b, pos) => {
            Some(Expr::Binary(BinOp::Sub, b.clone(), a.clone(), *pos))
        }
        Expr::Binary(BinOp::Gt | BinOp::Ge, a, b, pos) => {
            Some(Expr::Binary(BinOp::Sub, a.clone(), b.clone(), *pos))
        }
        Expr::Binary(BinOp::And, l, r, _) => infer_measure(r).or_else(|| infer_measure(l)),
        _ => None,
    }
}

fn to_owned(s: &str) -> String {
    s.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::resolve::resolve;

    fn vcs(src: &str) -> Vec<MethodVcs> {
        let mut p = parse(src).unwrap();
        resolve(&mut p).unwrap();
        generate(&p)
    }

    #[test]
    fn assert_generates_an_obligation() {
        let v = vcs("method m(x: int) { assert x == x; }");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].obligations.len(), 1);
        assert_eq!(v[0].obligations[0].msg, "assertion might not hold");
    }

    #[test]
    fn loop_generates_entry_maintenance_and_termination() {
        let src = "method m(n: nat) { var i := 0; while i < n invariant 0 <= i { i := i + 1; } }";
        let v = vcs(src);
        let msgs: Vec<&str> = v[0].obligations.iter().map(|o| o.msg.as_str()).collect();
        assert!(msgs.contains(&"this loop invariant could not be proved on entry"));
        assert!(msgs.contains(&"this loop invariant might not be maintained by the loop"));
        assert!(msgs
            .iter()
            .any(|m| m.contains("cannot prove termination")));
    }

    #[test]
    fn explicit_decreases_replaces_inference() {
        let src = "method m(n: nat) { var i := 0; while i < n invariant 0 <= i decreases n - i { i := i + 1; } }";
        let v = vcs(src);
        let msgs: Vec<&str> = v[0].obligations.iter().map(|o| o.msg.as_str()).collect();
        assert!(msgs.contains(&"decreases expression might not decrease"));
        assert!(!msgs.iter().any(|m| m.contains("cannot prove termination")));
    }

    #[test]
    fn indexing_emits_bounds_obligation() {
        let v = vcs("method m(a: array<int>) { var x := a[0]; x := x; }");
        assert!(v[0].obligations.iter().any(|o| o.msg == "index out of range"));
    }

    #[test]
    fn boolean_guard_without_decreases_has_no_measure() {
        let src = "method m(b: bool) { var c := b; while c { c := false; } }";
        let v = vcs(src);
        assert!(v[0]
            .obligations
            .iter()
            .any(|o| o.msg.contains("cannot prove termination")));
    }

    #[test]
    fn obligation_positions_point_at_clauses() {
        let src = "method m(n: nat)\n  ensures n >= 0\n{\n}";
        let v = vcs(src);
        let ob = &v[0].obligations[0];
        assert_eq!((ob.pos.line, ob.pos.col), (2, 3));
    }
}
