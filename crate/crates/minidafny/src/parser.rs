//! Recursive-descent parser for the supported Dafny subset.
//!
//! Parsing is strict: anything outside the subset produces a parse error with
//! a precise position, mirroring how the full Dafny front end rejects files it
//! cannot read. The first error aborts parsing.

use crate::ast::*;
use crate::lexer::{lex, Pos, Tok, Token};

#[derive(Debug, Clone)]
pub struct ParseError {
    pub pos: Pos,
    pub msg: String,
}

pub fn parse(src: &str) -> Result<Program, ParseError> {
    let tokens = lex(src).map_err(|e| ParseError { pos: e.pos, msg: e.msg })?;
    Parser { toks: tokens, i: 0 }.program()
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek2(&self) -> &Tok {
        let j = (self.i + 1).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, want: &Tok) -> bool {
        if self.peek() == want {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, want: Tok) -> Result<Pos, ParseError> {
        if self.peek() == &want {
            Ok(self.bump().pos)
        } else {
            Err(self.err(format!("expected {}, found {}", want.describe(), self.peek().describe())))
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Pos), ParseError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.bump().pos;
                Ok((name, pos))
            }
            other => Err(self.err(format!("expected identifier, found {}", other.describe()))),
        }
    }

    fn err(&self, msg: String) -> ParseError {
        ParseError { pos: self.pos(), msg }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut methods = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(Program { methods }),
                Tok::Method => methods.push(self.method()?),
                other => {
                    return Err(self.err(format!(
                        "expected 'method' declaration, found {} (only methods are supported)",
                        other.describe()
                    )))
                }
            }
        }
    }

    fn method(&mut self) -> Result<Method, ParseError> {
        self.expect(Tok::Method)?;
        if matches!(self.peek(), Tok::LBrace) {
            return Err(self.err("attributes on methods are not supported".to_string()));
        }
        let (name, pos) = self.expect_ident()?;
        let params = self.param_list()?;
        let outs = if self.eat(&Tok::Returns) { self.param_list()? } else { Vec::new() };

        let mut requires = Vec::new();
        let mut ensures = Vec::new();
        let mut decreases = Vec::new();
        loop {
            match self.peek() {
                Tok::Requires => {
                    let kw = self.bump().pos;
                    requires.push(Spec { expr: self.expr()?, pos: kw });
                }
                Tok::Ensures => {
                    let kw = self.bump().pos;
                    ensures.push(Spec { expr: self.expr()?, pos: kw });
                }
                Tok::Decreases => {
                    let kw = self.bump().pos;
                    decreases.push(Spec { expr: self.expr()?, pos: kw });
                }
                _ => break,
            }
        }

        let body = self.block()?;
        Ok(Method { name, pos, params, outs, requires, ensures, decreases, body })
    }

    fn param_list(&mut self) -> Result<Vec<Param>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let (name, pos) = self.expect_ident()?;
                self.expect(Tok::Colon)?;
                let ty = self.ty()?;
                params.push(Param { name, ty, pos });
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(params)
    }

    fn ty(&mut self) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::IntTy => {
                self.bump();
                Ok(Type::Int)
            }
            Tok::NatTy => {
                self.bump();
                Ok(Type::Nat)
            }
            Tok::BoolTy => {
                self.bump();
                Ok(Type::Bool)
            }
            Tok::ArrayTy => {
                self.bump();
                self.expect(Tok::Lt)?;
                self.expect(Tok::IntTy)?;
                self.expect(Tok::Gt)?;
                Ok(Type::ArrayInt)
            }
            other => Err(self.err(format!(
                "expected type (int, nat, bool, array<int>), found {}",
                other.describe()
            ))),
        }
    }

    fn block(&mut self) -> Result<Block, ParseError> {
        let pos = self.expect(Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if matches!(self.peek(), Tok::Eof) {
                return Err(self.err("expected '}', found end of file".to_string()));
            }
            self.stmt_into(&mut stmts)?;
        }
        Ok(Block { stmts, pos })
    }

    /// Parses one statement. A declaration with a call initializer
    /// (`var x: T := m(..);`) expands to two statements, hence the out-vec.
    fn stmt_into(&mut self, out: &mut Vec<Stmt>) -> Result<(), ParseError> {
        match self.peek().clone() {
            Tok::Var => {
                let pos = self.bump().pos;
                let (name, _) = self.expect_ident()?;
                let ty = if self.eat(&Tok::Colon) { Some(self.ty()?) } else { None };
                if self.eat(&Tok::Assign) {
                    if let (Tok::Ident(callee), Tok::LParen) = (self.peek().clone(), self.peek2()) {
                        let call_pos = self.pos();
                        self.bump();
                        let args = self.call_args()?;
                        self.expect(Tok::Semi)?;
                        out.push(Stmt::VarDecl { name: name.clone(), ty, init: None, pos });
                        out.push(Stmt::Call { outs: vec![name], callee, args, pos: call_pos });
                        return Ok(());
                    }
                    let init = self.expr()?;
                    self.expect(Tok::Semi)?;
                    out.push(Stmt::VarDecl { name, ty, init: Some(init), pos });
                } else {
                    self.expect(Tok::Semi)?;
                    out.push(Stmt::VarDecl { name, ty, init: None, pos });
                }
            }
            Tok::If => {
                out.push(self.if_stmt()?);
            }
            Tok::While => {
                out.push(self.while_stmt()?);
            }
            Tok::Assert => {
                let pos = self.bump().pos;
                let expr = self.expr()?;
                if let Tok::Ident(w) = self.peek() {
                    if w == "by" {
                        return Err(self.err("'assert ... by' blocks are not supported".to_string()));
                    }
                }
                self.expect(Tok::Semi)?;
                out.push(Stmt::Assert { expr, pos });
            }
            Tok::Return => {
                let pos = self.bump().pos;
                let value = if self.peek() == &Tok::Semi { None } else { Some(self.expr()?) };
                if self.peek() == &Tok::Comma {
                    return Err(self.err("multi-value return is not supported".to_string()));
                }
                self.expect(Tok::Semi)?;
                out.push(Stmt::Return { value, pos });
            }
            Tok::LBrace => {
                out.push(Stmt::Block(self.block()?));
            }
            Tok::Ident(first) => {
                let pos = self.pos();
                // Possibilities: `x := e;`, `x := m(..);`, `m(..);`,
                // `a, b := m(..);`, or the unsupported `a[i] := e;`.
                self.bump();
                match self.peek().clone() {
                    Tok::LParen => {
                        let args = self.call_args()?;
                        self.expect(Tok::Semi)?;
                        out.push(Stmt::Call { outs: Vec::new(), callee: first, args, pos });
                    }
                    Tok::LBracket => {
                        return Err(
                            self.err("array element assignment is not supported".to_string())
                        );
                    }
                    Tok::Comma => {
                        let mut lhs = vec![first];
                        while self.eat(&Tok::Comma) {
                            lhs.push(self.expect_ident()?.0);
                        }
                        self.expect(Tok::Assign)?;
                        let (callee, _) = self.expect_ident()?;
                        if self.peek() != &Tok::LParen {
                            return Err(
                                self.err("parallel assignment requires a method call".to_string())
                            );
                        }
                        let args = self.call_args()?;
                        self.expect(Tok::Semi)?;
                        out.push(Stmt::Call { outs: lhs, callee, args, pos });
                    }
                    Tok::Assign => {
                        self.bump();
                        if let (Tok::Ident(callee), Tok::LParen) =
                            (self.peek().clone(), self.peek2())
                        {
                            self.bump();
                            let args = self.call_args()?;
                            self.expect(Tok::Semi)?;
                            out.push(Stmt::Call { outs: vec![first], callee, args, pos });
                            return Ok(());
                        }
                        let value = self.expr()?;
                        self.expect(Tok::Semi)?;
                        out.push(Stmt::Assign { name: first, value, pos });
                    }
                    other => {
                        return Err(self.err(format!(
                            "expected ':=' or '(' after identifier, found {}",
                            other.describe()
                        )))
                    }
                }
            }
            other => {
                return Err(self.err(format!("expected statement, found {}", other.describe())))
            }
        }
        Ok(())
    }

    fn call_args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect(Tok::LParen)?;
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                args.push(self.expr()?);
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(Tok::Comma)?;
            }
        }
        Ok(args)
    }

    fn if_stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.expect(Tok::If)?;
        let cond = self.expr()?;
        let then_block = self.block()?;
        let else_block = if self.eat(&Tok::Else) {
            if self.peek() == &Tok::If {
                let nested = self.if_stmt()?;
                let nested_pos = nested.pos();
                Some(Block { stmts: vec![nested], pos: nested_pos })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt::If { cond, then_block, else_block, pos })
    }

    fn while_stmt(&mut self) -> Result<Stmt, ParseError> {
        let pos = self.expect(Tok::While)?;
        let guard = self.expr()?;
        let mut invariants = Vec::new();
        let mut decreases = Vec::new();
        loop {
            match self.peek() {
                Tok::Invariant => {
                    let kw = self.bump().pos;
                    invariants.push(Spec { expr: self.expr()?, pos: kw });
                }
                Tok::Decreases => {
                    let kw = self.bump().pos;
                    decreases.push(Spec { expr: self.expr()?, pos: kw });
                }
                Tok::LBrace => break,
                other => {
                    return Err(self.err(format!(
                        "expected 'invariant', 'decreases', or loop body, found {}",
                        other.describe()
                    )))
                }
            }
        }
        let body = self.block()?;
        Ok(Stmt::While { guard, invariants, decreases, body, pos })
    }

    // ---- Expressions ----------------------------------------------------
    //
    // Precedence, loosest first: <==>  ==>  ||  &&  (comparisons, chainable)
    // + -  * / %  unary  postfix ([..], .Length)  atoms. Quantifier bodies
    // extend as far right as possible.

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.iff_expr()
    }

    fn iff_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.implies_expr()?;
        while self.peek() == &Tok::Iff {
            let pos = self.bump().pos;
            let rhs = self.implies_expr()?;
            lhs = Expr::Binary(BinOp::Iff, Box::new(lhs), Box::new(rhs), pos);
        }
        Ok(lhs)
    }

    fn implies_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.or_expr()?;
        if self.peek() == &Tok::Implies {
            let pos = self.bump().pos;
            // Right-associative.
            let rhs = self.implies_expr()?;
            return Ok(Expr::Binary(BinOp::Implies, Box::new(lhs), Box::new(rhs), pos));
        }
        Ok(lhs)
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == &Tok::OrOr {
            let pos = self.bump().pos;
            let rhs = self.and_expr()?;
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs), pos);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.cmp_expr()?;
        while self.peek() == &Tok::AndAnd {
            let pos = self.bump().pos;
            let rhs = self.cmp_expr()?;
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs), pos);
        }
        Ok(lhs)
    }

    /// Comparisons, including chains like `0 <= i < n` which conjoin pairwise.
    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let first = self.add_expr()?;
        let mut operands = vec![first];
        let mut ops: Vec<(BinOp, Pos)> = Vec::new();
        loop {
            let op = match self.peek() {
                Tok::Lt => BinOp::Lt,
                Tok::Le => BinOp::Le,
                Tok::Gt => BinOp::Gt,
                Tok::Ge => BinOp::Ge,
                Tok::EqEq => BinOp::Eq,
                Tok::Neq => BinOp::Ne,
                _ => break,
            };
            let pos = self.bump().pos;
            ops.push((op, pos));
            operands.push(self.add_expr()?);
        }
        match ops.len() {
            0 => Ok(operands.pop().unwrap()),
            1 => {
                let (op, pos) = ops[0];
                let rhs = operands.pop().unwrap();
                let lhs = operands.pop().unwrap();
                Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs), pos))
            }
            _ => {
                let ascending = ops.iter().all(|(op, _)| matches!(op, BinOp::Lt | BinOp::Le | BinOp::Eq));
                let descending = ops.iter().all(|(op, _)| matches!(op, BinOp::Gt | BinOp::Ge | BinOp::Eq));
                if !ascending && !descending {
                    return Err(ParseError {
                        pos: ops[1].1,
                        msg: "comparison chain mixes directions".to_string(),
                    });
                }
                // a op1 b op2 c  =>  (a op1 b) && (b op2 c)
                let mut conj: Option<Expr> = None;
                for (k, (op, pos)) in ops.iter().enumerate() {
                    let link = Expr::Binary(
                        *op,
                        Box::new(operands[k].clone()),
                        Box::new(operands[k + 1].clone()),
                        *pos,
                    );
                    conj = Some(match conj {
                        None => link,
                        Some(acc) => Expr::Binary(BinOp::And, Box::new(acc), Box::new(link), *pos),
                    });
                }
                Ok(conj.unwrap())
            }
        }
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            let pos = self.bump().pos;
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), pos);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Mod,
                _ => break,
            };
            let pos = self.bump().pos;
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs), pos);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Minus => {
                let pos = self.bump().pos;
                let e = self.unary_expr()?;
                Ok(Expr::Unary(UnOp::Neg, Box::new(e), pos))
            }
            Tok::Not => {
                let pos = self.bump().pos;
                let e = self.unary_expr()?;
                Ok(Expr::Unary(UnOp::Not, Box::new(e), pos))
            }
            _ => self.postfix_expr(),
        }
    }

    fn postfix_expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom()?;
        loop {
            match self.peek() {
                Tok::LBracket => {
                    let pos = self.bump().pos;
                    let idx = self.expr()?;
                    self.expect(Tok::RBracket)?;
                    e = Expr::Index(Box::new(e), Box::new(idx), pos);
                }
                Tok::Dot => {
                    let pos = self.bump().pos;
                    let (field, _) = self.expect_ident()?;
                    if field != "Length" {
                        return Err(ParseError {
                            pos,
                            msg: format!("unknown member '.{field}' (only '.Length' is supported)"),
                        });
                    }
                    e = Expr::Length(Box::new(e), pos);
                }
                _ => return Ok(e),
            }
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                let pos = self.bump().pos;
                Ok(Expr::IntLit(n, pos))
            }
            Tok::True => {
                let pos = self.bump().pos;
                Ok(Expr::BoolLit(true, pos))
            }
            Tok::False => {
                let pos = self.bump().pos;
                Ok(Expr::BoolLit(false, pos))
            }
            Tok::Ident(name) => {
                let pos = self.bump().pos;
                if self.peek() == &Tok::LParen {
                    return Err(self.err(
                        "function calls in expressions are not supported (methods may only be \
                         called as statements)"
                            .to_string(),
                    ));
                }
                Ok(Expr::Var(name, pos))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Tok::If => {
                let pos = self.bump().pos;
                let cond = self.expr()?;
                self.expect(Tok::Then)?;
                let t = self.expr()?;
                self.expect(Tok::Else)?;
                let f = self.expr()?;
                Ok(Expr::IfThenElse(Box::new(cond), Box::new(t), Box::new(f), pos))
            }
            Tok::Forall | Tok::Exists => {
                let q = if self.peek() == &Tok::Forall { QKind::Forall } else { QKind::Exists };
                let pos = self.bump().pos;
                let (var, _) = self.expect_ident()?;
                if self.peek() == &Tok::Comma {
                    return Err(
                        self.err("only single-variable quantifiers are supported".to_string())
                    );
                }
                let ty = if self.eat(&Tok::Colon) { self.ty()? } else { Type::Int };
                self.expect(Tok::ColonColon)?;
                let body = self.expr()?;
                Ok(Expr::Quant { q, var, ty, body: Box::new(body), pos })
            }
            Tok::New => Err(self.err("allocation with 'new' is not supported".to_string())),
            Tok::Old => Err(self.err("'old' expressions are not supported".to_string())),
            other => Err(self.err(format!("expected expression, found {}", other.describe()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_empty_method() {
        let p = parse("method m() { }").unwrap();
        assert_eq!(p.methods.len(), 1);
        assert_eq!(p.methods[0].name, "m");
    }

    #[test]
    fn parses_signature_and_specs() {
        let src = "method Sum(n: nat) returns (s: int)\n  requires n >= 0\n  ensures s >= 0\n{ s := 0; }";
        let m = &parse(src).unwrap().methods[0];
        assert_eq!(m.params.len(), 1);
        assert_eq!(m.outs.len(), 1);
        assert_eq!(m.requires.len(), 1);
        assert_eq!(m.ensures.len(), 1);
    }

    #[test]
    fn parses_while_with_clauses() {
        let src = "method m(n: nat) { var i := 0; while i < n invariant 0 <= i <= n decreases n - i { i := i + 1; } }";
        let m = &parse(src).unwrap().methods[0];
        match &m.body.stmts[1] {
            Stmt::While { invariants, decreases, .. } => {
                assert_eq!(invariants.len(), 1);
                assert_eq!(decreases.len(), 1);
            }
            other => panic!("expected while, got {other:?}"),
        }
    }

    #[test]
    fn chained_comparison_desugars_to_conjunction() {
        let src = "method m(i: int, n: int) { assert 0 <= i < n; }";
        let m = &parse(src).unwrap().methods[0];
        match &m.body.stmts[0] {
            Stmt::Assert { expr: Expr::Binary(BinOp::And, ..), .. } => {}
            other => panic!("expected conjunction, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mixed_chain() {
        assert!(parse("method m(i: int) { assert 0 <= i > 2; }").is_err());
    }

    #[test]
    fn parses_quantifiers_and_ite() {
        let src = "method m(a: array<int>) returns (x: int) {\n  x := if a.Length > 0 then a[0] else 0;\n  assert forall k :: 0 <= k < a.Length ==> a[k] == a[k];\n}";
        assert!(parse(src).is_ok());
    }

    #[test]
    fn parses_calls() {
        let src = "method helper() returns (r: int) { r := 1; }\nmethod m() { var x: int := helper(); x := x + 1; }";
        let p = parse(src).unwrap();
        let stmts = &p.methods[1].body.stmts;
        assert!(matches!(stmts[0], Stmt::VarDecl { .. }));
        assert!(matches!(stmts[1], Stmt::Call { .. }));
    }

    #[test]
    fn error_positions_point_at_problem() {
        let err = parse("method m() { x ; }").unwrap_err();
        assert_eq!((err.pos.line, err.pos.col), (1, 16));
    }

    #[test]
    fn rejects_functions() {
        let err = parse("function F(x: int): int { x }").unwrap_err();
        assert!(err.msg.contains("only methods are supported"));
    }

    #[test]
    fn rejects_array_store() {
        let err = parse("method m(a: array<int>) { a[0] := 1; }").unwrap_err();
        assert!(err.msg.contains("array element assignment"));
    }

    #[test]
    fn parses_else_if_chain() {
        let src = "method m(x: int) returns (s: int) { if x > 0 { s := 1; } else if x < 0 { s := -1; } else { s := 0; } }";
        assert!(parse(src).is_ok());
    }
}
