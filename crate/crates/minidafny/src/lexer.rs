//! Tokenizer for the supported Dafny subset.
//!
//! Tracks 1-based line/column positions for every token so downstream
//! diagnostics can point at the exact source location. Line comments (`//`),
//! nested block comments (`/* /* */ */`) and whitespace are skipped.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    // Declaration / statement keywords.
    Method,
    Returns,
    Requires,
    Ensures,
    Invariant,
    Decreases,
    Assert,
    While,
    If,
    Then,
    Else,
    Var,
    Return,
    True,
    False,
    Forall,
    Exists,
    // Type keywords.
    IntTy,
    NatTy,
    BoolTy,
    ArrayTy,
    // Recognized-but-unsupported keywords, kept distinct for good error messages.
    New,
    Old,
    // Punctuation.
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Semi,
    Assign,     // :=
    ColonColon, // ::
    Dot,
    // Operators.
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Neq,
    AndAnd,
    OrOr,
    Not,
    Implies, // ==>
    Iff,     // <==>
    Eof,
}

impl Tok {
    /// Short human-readable rendering used in "expected X, found Y" messages.
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::Int(n) => format!("literal {n}"),
            Tok::Eof => "end of file".to_string(),
            other => format!("'{}'", other.lexeme()),
        }
    }

    fn lexeme(&self) -> &'static str {
        match self {
            Tok::Method => "method",
            Tok::Returns => "returns",
            Tok::Requires => "requires",
            Tok::Ensures => "ensures",
            Tok::Invariant => "invariant",
            Tok::Decreases => "decreases",
            Tok::Assert => "assert",
            Tok::While => "while",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::Var => "var",
            Tok::Return => "return",
            Tok::True => "true",
            Tok::False => "false",
            Tok::Forall => "forall",
            Tok::Exists => "exists",
            Tok::IntTy => "int",
            Tok::NatTy => "nat",
            Tok::BoolTy => "bool",
            Tok::ArrayTy => "array",
            Tok::New => "new",
            Tok::Old => "old",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Semi => ";",
            Tok::Assign => ":=",
            Tok::ColonColon => "::",
            Tok::Dot => ".",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Neq => "!=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::Not => "!",
            Tok::Implies => "==>",
            Tok::Iff => "<==>",
            Tok::Ident(_) | Tok::Int(_) | Tok::Eof => unreachable!(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub pos: Pos,
    pub msg: String,
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { chars: src.chars().peekable(), line: 1, col: 1 }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn eat(&mut self, want: char) -> bool {
        if self.peek() == Some(want) {
            self.bump();
            true
        } else {
            false
        }
    }
}

fn keyword(word: &str) -> Option<Tok> {
    Some(match word {
        "method" => Tok::Method,
        "returns" => Tok::Returns,
        "requires" => Tok::Requires,
        "ensures" => Tok::Ensures,
        "invariant" => Tok::Invariant,
        "decreases" => Tok::Decreases,
        "assert" => Tok::Assert,
        "while" => Tok::While,
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "var" => Tok::Var,
        "return" => Tok::Return,
        "true" => Tok::True,
        "false" => Tok::False,
        "forall" => Tok::Forall,
        "exists" => Tok::Exists,
        "int" => Tok::IntTy,
        "nat" => Tok::NatTy,
        "bool" => Tok::BoolTy,
        "array" => Tok::ArrayTy,
        "new" => Tok::New,
        "old" => Tok::Old,
        _ => return None,
    })
}

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor::new(src);
    let mut out = Vec::new();

    loop {
        // Skip whitespace and comments.
        loop {
            match cur.peek() {
                Some(c) if c.is_whitespace() => {
                    cur.bump();
                }
                Some('/') => {
                    // Look ahead without committing: clone the iterator state cheaply
                    // by probing the next char after '/'.
                    let mut probe = cur.chars.clone();
                    probe.next();
                    match probe.peek() {
                        Some('/') => {
                            while let Some(c) = cur.peek() {
                                if c == '\n' {
                                    break;
                                }
                                cur.bump();
                            }
                        }
                        Some('*') => {
                            let start = cur.pos();
                            cur.bump(); // '/'
                            cur.bump(); // '*'
                            let mut depth = 1u32;
                            loop {
                                match cur.bump() {
                                    Some('*') if cur.peek() == Some('/') => {
                                        cur.bump();
                                        depth -= 1;
                                        if depth == 0 {
                                            break;
                                        }
                                    }
                                    Some('/') if cur.peek() == Some('*') => {
                                        cur.bump();
                                        depth += 1;
                                    }
                                    Some(_) => {}
                                    None => {
                                        return Err(LexError {
                                            pos: start,
                                            msg: "unterminated block comment".to_string(),
                                        })
                                    }
                                }
                            }
                        }
                        _ => break,
                    }
                }
                _ => break,
            }
        }

        let pos = cur.pos();
        let c = match cur.peek() {
            Some(c) => c,
            None => {
                out.push(Token { tok: Tok::Eof, pos });
                return Ok(out);
            }
        };

        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let mut word = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_alphanumeric() || c == '_' || c == '\'' {
                    word.push(c);
                    cur.bump();
                } else {
                    break;
                }
            }
            keyword(&word).unwrap_or(Tok::Ident(word))
        } else if c.is_ascii_digit() {
            let mut num = String::new();
            while let Some(c) = cur.peek() {
                if c.is_ascii_digit() || c == '_' {
                    if c != '_' {
                        num.push(c);
                    }
                    cur.bump();
                } else {
                    break;
                }
            }
            match num.parse::<i64>() {
                Ok(n) => Tok::Int(n),
                Err(_) => {
                    return Err(LexError { pos, msg: format!("integer literal too large: {num}") })
                }
            }
        } else {
            cur.bump();
            match c {
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '[' => Tok::LBracket,
                ']' => Tok::RBracket,
                ',' => Tok::Comma,
                ';' => Tok::Semi,
                '.' => Tok::Dot,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '%' => Tok::Percent,
                ':' => {
                    if cur.eat('=') {
                        Tok::Assign
                    } else if cur.eat(':') {
                        Tok::ColonColon
                    } else {
                        Tok::Colon
                    }
                }
                '<' => {
                    if cur.eat('=') {
                        if cur.eat('=') {
                            if cur.eat('>') {
                                Tok::Iff
                            } else {
                                return Err(LexError {
                                    pos,
                                    msg: "malformed operator; expected '<==>'".to_string(),
                                });
                            }
                        } else {
                            Tok::Le
                        }
                    } else {
                        Tok::Lt
                    }
                }
                '>' => {
                    if cur.eat('=') {
                        Tok::Ge
                    } else {
                        Tok::Gt
                    }
                }
                '=' => {
                    if cur.eat('=') {
                        if cur.eat('>') {
                            Tok::Implies
                        } else {
                            Tok::EqEq
                        }
                    } else {
                        return Err(LexError {
                            pos,
                            msg: "'=' is not an operator; use ':=' or '=='".to_string(),
                        });
                    }
                }
                '!' => {
                    if cur.eat('=') {
                        Tok::Neq
                    } else {
                        Tok::Not
                    }
                }
                '&' => {
                    if cur.eat('&') {
                        Tok::AndAnd
                    } else {
                        return Err(LexError { pos, msg: "expected '&&'".to_string() });
                    }
                }
                '|' => {
                    if cur.eat('|') {
                        Tok::OrOr
                    } else {
                        return Err(LexError { pos, msg: "expected '||'".to_string() });
                    }
                }
                '"' | '\'' => {
                    return Err(LexError {
                        pos,
                        msg: "string and character literals are not supported".to_string(),
                    })
                }
                other => {
                    return Err(LexError { pos, msg: format!("unexpected character '{other}'") })
                }
            }
        };

        out.push(Token { tok, pos });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn lexes_operators_and_keywords() {
        let toks = kinds("while k * k <= n invariant 0 <= k ==> true <==> false");
        assert!(toks.contains(&Tok::While));
        assert!(toks.contains(&Tok::Le));
        assert!(toks.contains(&Tok::Implies));
        assert!(toks.contains(&Tok::Iff));
        assert_eq!(toks.last(), Some(&Tok::Eof));
    }

    #[test]
    fn positions_are_one_based() {
        let toks = lex("method m()\n{ }\n").unwrap();
        assert_eq!(toks[0].pos, Pos { line: 1, col: 1 });
        assert_eq!(toks[1].pos, Pos { line: 1, col: 8 });
        assert_eq!(toks[3].pos, Pos { line: 1, col: 10 });
        assert_eq!(toks[4].pos, Pos { line: 2, col: 1 });
    }

    #[test]
    fn nested_block_comments() {
        let toks = kinds("method /* outer /* inner */ still comment */ m() { }");
        assert_eq!(toks[0], Tok::Method);
        assert_eq!(toks[1], Tok::Ident("m".to_string()));
    }

    #[test]
    fn line_comments_skip_to_eol() {
        let toks = kinds("// while if else\nassert true;");
        assert_eq!(toks[0], Tok::Assert);
    }

    #[test]
    fn rejects_unterminated_comment() {
        let err = lex("method m() { /* oops").unwrap_err();
        assert!(err.msg.contains("unterminated"));
    }

    #[test]
    fn rejects_strings() {
        assert!(lex("var s := \"hi\";").is_err());
    }

    #[test]
    fn assign_vs_colon() {
        assert_eq!(kinds(":= :: :")[..3], [Tok::Assign, Tok::ColonColon, Tok::Colon]);
    }
}
