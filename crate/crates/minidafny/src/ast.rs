//! Abstract syntax for the supported Dafny subset.
//!
//! The subset covers first-order methods over `int`/`nat`/`bool`/`array<int>`:
//! assignments, `if`/`else`, `while` with `invariant`/`decreases` clauses,
//! `assert`, `return`, and calls to other methods in the same file. Quantifiers
//! (`forall`/`exists`) and chained comparisons are supported in expressions.

use crate::lexer::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Type {
    Int,
    Nat,
    Bool,
    ArrayInt,
}

impl Type {
    pub fn name(self) -> &'static str {
        match self {
            Type::Int => "int",
            Type::Nat => "nat",
            Type::Bool => "bool",
            Type::ArrayInt => "array<int>",
        }
    }

    /// `nat` values are `int` values with a non-negativity constraint.
    pub fn base(self) -> Type {
        match self {
            Type::Nat => Type::Int,
            other => other,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Program {
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone)]
pub struct Method {
    pub name: String,
    pub pos: Pos,
    pub params: Vec<Param>,
    pub outs: Vec<Param>,
    pub requires: Vec<Spec>,
    pub ensures: Vec<Spec>,
    /// Method-level decreases clauses are parsed but not checked: the subset
    /// rejects recursion outright, which makes them vacuous.
    pub decreases: Vec<Spec>,
    pub body: Block,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub ty: Type,
    pub pos: Pos,
}

/// A single `requires`/`ensures`/`invariant`/`decreases` clause.
#[derive(Debug, Clone)]
pub struct Spec {
    pub expr: Expr,
    /// Position of the clause keyword, used for diagnostics.
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum Stmt {
    VarDecl { name: String, ty: Option<Type>, init: Option<Expr>, pos: Pos },
    Assign { name: String, value: Expr, pos: Pos },
    If { cond: Expr, then_block: Block, else_block: Option<Block>, pos: Pos },
    While { guard: Expr, invariants: Vec<Spec>, decreases: Vec<Spec>, body: Block, pos: Pos },
    Assert { expr: Expr, pos: Pos },
    Return { value: Option<Expr>, pos: Pos },
    /// `outs := callee(args);` — `outs` is empty for `callee(args);`.
    Call { outs: Vec<String>, callee: String, args: Vec<Expr>, pos: Pos },
    Block(Block),
}

impl Stmt {
    pub fn pos(&self) -> Pos {
        match self {
            Stmt::VarDecl { pos, .. }
            | Stmt::Assign { pos, .. }
            | Stmt::If { pos, .. }
            | Stmt::While { pos, .. }
            | Stmt::Assert { pos, .. }
            | Stmt::Return { pos, .. }
            | Stmt::Call { pos, .. } => *pos,
            Stmt::Block(b) => b.pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    Implies,
    Iff,
}

impl BinOp {
    pub fn is_cmp(self) -> bool {
        matches!(self, BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QKind {
    Forall,
    Exists,
}

#[derive(Debug, Clone)]
pub enum Expr {
    IntLit(i64, Pos),
    BoolLit(bool, Pos),
    Var(String, Pos),
    /// `e.Length`
    Length(Box<Expr>, Pos),
    /// `e[i]`
    Index(Box<Expr>, Box<Expr>, Pos),
    Unary(UnOp, Box<Expr>, Pos),
    Binary(BinOp, Box<Expr>, Box<Expr>, Pos),
    /// `if c then a else b`
    IfThenElse(Box<Expr>, Box<Expr>, Box<Expr>, Pos),
    /// `forall x: T :: body` / `exists x: T :: body`
    Quant { q: QKind, var: String, ty: Type, body: Box<Expr>, pos: Pos },
}

impl Expr {
    pub fn pos(&self) -> Pos {
        match self {
            Expr::IntLit(_, p)
            | Expr::BoolLit(_, p)
            | Expr::Var(_, p)
            | Expr::Length(_, p)
            | Expr::Index(_, _, p)
            | Expr::Unary(_, _, p)
            | Expr::Binary(_, _, _, p)
            | Expr::IfThenElse(_, _, _, p)
            | Expr::Quant { pos: p, .. } => *p,
        }
    }
}
