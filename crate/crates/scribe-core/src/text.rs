//! Structural model of Dafny source text.
//!
//! This module provides a *tolerant* scanner: it never fails on arbitrary
//! input, it only degrades. It recognises enough structure — methods,
//! loops, statement boundaries, and the three annotation forms
//! (`invariant`, `assert`, `decreases`) — to support inserting and
//! removing annotations byte-precisely, without pretty-printing or
//! otherwise disturbing the surrounding text.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A piece of Dafny source text, optionally tagged with its origin path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceText {
    pub content: String,
    pub path: Option<String>,
}

impl SourceText {
    pub fn new(content: impl Into<String>) -> Self {
        SourceText { content: content.into(), path: None }
    }

    pub fn with_path(content: impl Into<String>, path: impl Into<String>) -> Self {
        SourceText { content: content.into(), path: Some(path.into()) }
    }
}

/// The three annotation forms the pipeline proposes and manipulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnnotationKind {
    Invariant,
    Assert,
    Decreases,
}

impl AnnotationKind {
    pub fn keyword(self) -> &'static str {
        match self {
            AnnotationKind::Invariant => "invariant",
            AnnotationKind::Assert => "assert",
            AnnotationKind::Decreases => "decreases",
        }
    }
}

/// A single annotation clause, independent of any particular program text.
///
/// `text` always begins with the kind's keyword. Assertions carry their
/// trailing `;`; `invariant` and `decreases` clauses carry no terminator.
/// `normalized` is `text` with every whitespace run collapsed to a single
/// space, used for duplicate detection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub text: String,
    pub normalized: String,
}

impl Annotation {
    fn from_clause(kind: AnnotationKind, text: String) -> Self {
        let normalized = normalize_whitespace(&text);
        Annotation { kind, text, normalized }
    }
}

/// Collapse each whitespace run to a single space and trim the ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Classify one line of raw model output as an annotation, or reject it.
///
/// Only the first non-empty line of `raw` is considered. The line must
/// start with one of the three keywords at a word boundary. Terminators
/// are normalised: assertions gain a missing `;`, the other kinds drop a
/// stray one.
pub fn classify_annotation(raw: &str) -> Option<Annotation> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    for kind in [AnnotationKind::Invariant, AnnotationKind::Assert, AnnotationKind::Decreases] {
        let kw = kind.keyword();
        if let Some(rest) = line.strip_prefix(kw) {
            let boundary_ok = match rest.chars().next() {
                None => false, // bare keyword with no operand
                Some(c) => c.is_whitespace() || c == '(',
            };
            if !boundary_ok {
                continue;
            }
            if rest.trim().trim_end_matches(';').trim().is_empty() {
                return None; // keyword with an empty operand
            }
            let mut text = line.trim_end().to_string();
            match kind {
                AnnotationKind::Assert => {
                    if !text.ends_with(';') {
                        text.push(';');
                    }
                }
                AnnotationKind::Invariant | AnnotationKind::Decreases => {
                    while text.ends_with(';') {
                        text.pop();
                        text.truncate(text.trim_end().len());
                    }
                }
            }
            return Some(Annotation::from_clause(kind, text));
        }
    }
    None
}

/// An annotation as it occurs in a particular program text.
///
/// `span` is the byte range the annotation *owns*: removing exactly that
/// range yields clean source. A clause alone on its line(s) owns the whole
/// line including indentation and the trailing newline; a clause embedded
/// in a line owns its own bytes plus one trailing space when present.
/// `ordinal` is the index in textual order within the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationInstance {
    pub annotation: Annotation,
    pub span: Range<usize>,
    /// The exact owned bytes, kept so a stripped text plus its recorded
    /// instances can be reassembled into the original.
    pub owned_text: String,
    pub ordinal: usize,
}

/// Where an insertion point attaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PointKind {
    /// In a loop's specification region, after any existing clauses and
    /// before the body `{`. Accepts `invariant` and `decreases`.
    LoopSpec { loop_id: usize },
    /// Immediately after a statement, on a fresh line. Accepts `assert`.
    AfterStatement { statement_id: usize },
}

/// How the splice is performed at the offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertionStyle {
    /// `offset` is a line start; splice `indent + clause + "\n"`.
    OwnLine,
    /// `offset` is a loop-body `{` on the guard's line; splice `clause + " "`.
    InlineBeforeBrace,
}

/// A concrete place where an annotation of a matching kind may be spliced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertionPoint {
    pub kind: PointKind,
    pub style: InsertionStyle,
    /// Byte offset in the source where the splice happens.
    pub offset: usize,
    /// Leading whitespace for `OwnLine` splices.
    pub indent: String,
}

/// A method (or function/lemma) found in the text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpan {
    pub name: String,
    /// From the introducing keyword to the end of the body (or header).
    pub span: Range<usize>,
    /// The braced body, including both braces, when one was found.
    pub body: Option<Range<usize>>,
}

/// A `while` or `for` loop found inside a method body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopSpan {
    /// Index into [`ParsedUnit::methods`].
    pub method: usize,
    /// From the loop keyword to the closing `}` of the loop body.
    pub span: Range<usize>,
    /// Offset of the `{` opening the loop body.
    pub body_open: usize,
}

/// One statement inside a method body. Compound statements (`if`,
/// `while`, …) span up to and including their closing `}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatementSpan {
    /// Index into [`ParsedUnit::methods`].
    pub method: usize,
    pub span: Range<usize>,
}

/// The result of scanning a source text. Scanning is total: any input
/// produces a `ParsedUnit`; inputs the scanner cannot make sense of yield
/// fewer recognised elements and set `malformed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedUnit {
    pub source: SourceText,
    pub methods: Vec<MethodSpan>,
    pub loops: Vec<LoopSpan>,
    pub statements: Vec<StatementSpan>,
    pub annotations: Vec<AnnotationInstance>,
    /// Set when brace matching failed somewhere; recognised structure is
    /// still usable but may be incomplete.
    pub malformed: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TextError {
    #[error("no method with id {0} in this unit")]
    UnknownMethod(usize),
    #[error("annotation kind {kind:?} does not fit this insertion point")]
    KindMismatch { kind: AnnotationKind },
    #[error("insertion point is stale for this text (offset {offset})")]
    StalePoint { offset: usize },
    #[error("annotation instance is stale for this text (span {start}..{end})")]
    StaleInstance { start: usize, end: usize },
}

// ---------------------------------------------------------------------------
// Scanner
// ---------------------------------------------------------------------------

/// Copy of the source with comments and string/char literals blanked to
/// spaces (newlines preserved), so structural scanning can ignore them
/// while keeping every byte offset aligned with the original.
fn blank_non_code(src: &str) -> String {
    let b = src.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    #[derive(PartialEq)]
    enum Mode {
        Code,
        Line,
        Block(u32),
        Str,
        Verbatim,
        Char,
    }
    let mut mode = Mode::Code;
    let blank = |c: u8| if c == b'\n' { b'\n' } else { b' ' };
    while i < b.len() {
        let c = b[i];
        match mode {
            Mode::Code => match c {
                b'/' if b.get(i + 1) == Some(&b'/') => {
                    mode = Mode::Line;
                    out.extend_from_slice(b"  ");
                    i += 2;
                }
                b'/' if b.get(i + 1) == Some(&b'*') => {
                    mode = Mode::Block(1);
                    out.extend_from_slice(b"  ");
                    i += 2;
                }
                b'@' if b.get(i + 1) == Some(&b'"') => {
                    mode = Mode::Verbatim;
                    out.extend_from_slice(b"  ");
                    i += 2;
                }
                b'"' => {
                    mode = Mode::Str;
                    out.push(b' ');
                    i += 1;
                }
                b'\'' => {
                    // `'` is an identifier character in Dafny (x'), so only
                    // treat it as a char literal when it cannot continue an
                    // identifier.
                    let prev_ident = i > 0
                        && (b[i - 1].is_ascii_alphanumeric() || b[i - 1] == b'_' || b[i - 1] == b'\'');
                    if prev_ident {
                        out.push(c);
                        i += 1;
                    } else {
                        mode = Mode::Char;
                        out.push(b' ');
                        i += 1;
                    }
                }
                _ => {
                    out.push(c);
                    i += 1;
                }
            },
            Mode::Line => {
                if c == b'\n' {
                    mode = Mode::Code;
                    out.push(b'\n');
                } else {
                    out.push(b' ');
                }
                i += 1;
            }
            Mode::Block(depth) => {
                if c == b'*' && b.get(i + 1) == Some(&b'/') {
                    out.extend_from_slice(b"  ");
                    i += 2;
                    if depth == 1 {
                        mode = Mode::Code;
                    } else {
                        mode = Mode::Block(depth - 1);
                    }
                } else if c == b'/' && b.get(i + 1) == Some(&b'*') {
                    out.extend_from_slice(b"  ");
                    i += 2;
                    mode = Mode::Block(depth + 1);
                } else {
                    out.push(blank(c));
                    i += 1;
                }
            }
            Mode::Str => {
                if c == b'\\' && i + 1 < b.len() {
                    out.extend_from_slice(b"  ");
                    i += 2;
                } else {
                    if c == b'"' || c == b'\n' {
                        mode = Mode::Code;
                    }
                    out.push(blank(c));
                    i += 1;
                }
            }
            Mode::Verbatim => {
                if c == b'"' {
                    if b.get(i + 1) == Some(&b'"') {
                        out.extend_from_slice(b"  ");
                        i += 2;
                    } else {
                        mode = Mode::Code;
                        out.push(b' ');
                        i += 1;
                    }
                } else {
                    out.push(blank(c));
                    i += 1;
                }
            }
            Mode::Char => {
                if c == b'\\' && i + 1 < b.len() {
                    out.extend_from_slice(b"  ");
                    i += 2;
                } else {
                    if c == b'\'' || c == b'\n' {
                        mode = Mode::Code;
                    }
                    out.push(blank(c));
                    i += 1;
                }
            }
        }
    }
    // The scanner only blanks ASCII bytes, so the result stays valid UTF-8.
    String::from_utf8(out).expect("blanking preserves UTF-8")
}

fn is_ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b'\''
}

/// Iterator over identifier words in `code[range]`, yielding (start, word).
struct Words<'a> {
    code: &'a [u8],
    pos: usize,
    end: usize,
}

impl<'a> Words<'a> {
    fn new(code: &'a str, range: Range<usize>) -> Self {
        Words { code: code.as_bytes(), pos: range.start, end: range.end }
    }
}

impl<'a> Iterator for Words<'a> {
    type Item = (usize, &'a str);

    fn next(&mut self) -> Option<Self::Item> {
        while self.pos < self.end {
            let c = self.code[self.pos];
            if is_ident_start(c) && (self.pos == 0 || !is_ident_char(self.code[self.pos - 1])) {
                let start = self.pos;
                let mut end = start + 1;
                while end < self.end && is_ident_char(self.code[end]) {
                    end += 1;
                }
                self.pos = end;
                let word = std::str::from_utf8(&self.code[start..end]).ok()?;
                return Some((start, word));
            }
            self.pos += 1;
        }
        None
    }
}

/// Find the matching `}` for the `{` at `open`, or `None` when unbalanced.
fn match_brace(code: &[u8], open: usize, limit: usize) -> Option<usize> {
    debug_assert_eq!(code[open], b'{');
    let mut depth = 0usize;
    let mut i = open;
    while i < limit {
        match code[i] {
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// First `{` at or after `from` that does not open an attribute (`{:`).
fn next_body_brace(code: &[u8], from: usize, limit: usize) -> Option<usize> {
    let mut i = from;
    while i < limit {
        if code[i] == b'{' {
            if code.get(i + 1) == Some(&b':') {
                // skip the attribute block
                match match_brace(code, i, limit) {
                    Some(close) => i = close + 1,
                    None => return None,
                }
            } else {
                return Some(i);
            }
        } else {
            i += 1;
        }
    }
    None
}

const METHOD_KEYWORDS: [&str; 5] = ["method", "function", "lemma", "predicate", "constructor"];
const METHOD_MODIFIERS: [&str; 5] = ["ghost", "static", "twostate", "opaque", "by"];
const SPEC_KEYWORDS: [&str; 5] = ["invariant", "decreases", "modifies", "requires", "ensures"];
const RECURSE_KEYWORDS: [&str; 4] = ["if", "while", "for", "else"];
const OPAQUE_KEYWORDS: [&str; 3] = ["match", "calc", "forall"];

struct Scanner<'a> {
    original: &'a str,
    code: String,
    methods: Vec<MethodSpan>,
    loops: Vec<LoopSpan>,
    statements: Vec<StatementSpan>,
    annotations: Vec<AnnotationInstance>,
    malformed: bool,
}

impl<'a> Scanner<'a> {
    fn run(source: &'a SourceText) -> ParsedUnit {
        let mut s = Scanner {
            original: &source.content,
            code: blank_non_code(&source.content),
            methods: Vec::new(),
            loops: Vec::new(),
            statements: Vec::new(),
            annotations: Vec::new(),
            malformed: false,
        };
        s.scan_methods();
        for m in 0..s.methods.len() {
            if let Some(body) = s.methods[m].body.clone() {
                s.scan_block(m, body.start + 1..body.end.saturating_sub(1));
            }
        }
        s.annotations.sort_by_key(|a| a.span.start);
        for (i, a) in s.annotations.iter_mut().enumerate() {
            a.ordinal = i;
        }
        ParsedUnit {
            source: source.clone(),
            methods: s.methods,
            loops: s.loops,
            statements: s.statements,
            annotations: s.annotations,
            malformed: s.malformed,
        }
    }

    fn scan_methods(&mut self) {
        let code = self.code.clone();
        let bytes = code.as_bytes();
        let len = bytes.len();
        let mut words = Words::new(&code, 0..len).peekable();
        while let Some((at, word)) = words.next() {
            if !METHOD_KEYWORDS.contains(&word) {
                continue;
            }
            // `by method` inside a function-by-method body is not a new
            // declaration; requiring a following identifier filters most
            // accidents, and tolerance covers the rest.
            let mut name = None;
            for (_, w) in words.by_ref() {
                if METHOD_MODIFIERS.contains(&w) || METHOD_KEYWORDS.contains(&w) {
                    continue;
                }
                name = Some(w.to_string());
                break;
            }
            let Some(name) = name else { continue };
            // Header ends at the first non-attribute `{` (the body) or at
            // the next method keyword (body-less declaration).
            let next_decl = Words::new(&code, at + word.len()..len)
                .find(|(_, w)| METHOD_KEYWORDS.contains(w))
                .map(|(p, _)| p)
                .unwrap_or(len);
            match next_body_brace(bytes, at, next_decl.max(at)) {
                Some(open) => match match_brace(bytes, open, len) {
                    Some(close) => {
                        self.methods.push(MethodSpan {
                            name,
                            span: at..close + 1,
                            body: Some(open..close + 1),
                        });
                    }
                    None => {
                        self.malformed = true;
                        self.methods.push(MethodSpan { name, span: at..len, body: None });
                    }
                },
                None => {
                    self.methods.push(MethodSpan { name, span: at..next_decl, body: None });
                }
            }
        }
        // Bodies found inside another method's body (e.g. a mis-scan) are
        // kept; overlapping spans are harmless for our uses.
    }

    /// Scan the statements directly inside `range` (a brace-free slice of a
    /// body), recursing into nested statement blocks.
    fn scan_block(&mut self, method: usize, range: Range<usize>) {
        let code = self.code.clone();
        let bytes = code.as_bytes();
        let mut i = range.start;
        while i < range.end {
            while i < range.end && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            if i >= range.end {
                break;
            }
            if bytes[i] == b'}' || bytes[i] == b';' {
                // stray terminator; skip
                i += 1;
                continue;
            }
            let start = i;
            let leading = if is_ident_start(bytes[i]) {
                let mut e = i + 1;
                while e < range.end && is_ident_char(bytes[e]) {
                    e += 1;
                }
                &code[i..e]
            } else {
                ""
            };
            if leading == "while" || leading == "for" {
                i = self.scan_loop(method, start, range.end);
                continue;
            }
            let opaque = OPAQUE_KEYWORDS.contains(&leading) || leading == "assert";
            let bare_block = bytes[i] == b'{';
            // Generic statement: runs to a `;` at depth 0 or through its
            // braced block(s).
            let mut j = if bare_block { i } else { i + leading.len() };
            let mut end = None;
            let mut paren = 0i32;
            while j < range.end {
                match bytes[j] {
                    b'(' | b'[' => paren += 1,
                    b')' | b']' => paren -= 1,
                    b';' if paren <= 0 => {
                        end = Some(j + 1);
                        break;
                    }
                    b'{' if paren <= 0 => {
                        let Some(close) = match_brace(bytes, j, range.end) else {
                            self.malformed = true;
                            break;
                        };
                        let recurse = !opaque
                            && (bare_block || RECURSE_KEYWORDS.contains(&leading));
                        if recurse {
                            self.scan_block(method, j + 1..close);
                        }
                        // `else` continues the same statement.
                        let mut k = close + 1;
                        while k < range.end && bytes[k].is_ascii_whitespace() {
                            k += 1;
                        }
                        if code[k..range.end.min(k + 4)].starts_with("else") {
                            j = k + 4;
                            continue;
                        }
                        end = Some(close + 1);
                        break;
                    }
                    b'}' if paren <= 0 => {
                        // block closed before the statement did
                        end = Some(j);
                        break;
                    }
                    _ => {}
                }
                j += 1;
            }
            let end = end.unwrap_or(range.end);
            if end > start {
                self.statements.push(StatementSpan { method, span: start..end });
                if leading == "assert" {
                    self.record_assert(start, end);
                }
                i = end;
            } else {
                i = start + 1;
            }
        }
    }

    /// Scan a loop starting at `start` (`while`/`for` keyword). Records the
    /// loop, its spec-region clauses, the loop statement itself, and the
    /// statements of its body. Returns the offset just past the loop.
    fn scan_loop(&mut self, method: usize, start: usize, limit: usize) -> usize {
        let code = self.code.clone();
        let bytes = code.as_bytes();
        let Some(open) = next_body_brace(bytes, start, limit) else {
            self.malformed = true;
            return limit;
        };
        let Some(close) = match_brace(bytes, open, limit) else {
            self.malformed = true;
            return limit;
        };
        self.loops.push(LoopSpan { method, span: start..close + 1, body_open: open });
        self.statements.push(StatementSpan { method, span: start..close + 1 });
        self.scan_spec_region(start, open);
        self.scan_block(method, open + 1..close);
        close + 1
    }

    /// Extract `invariant`/`decreases` clauses between a loop keyword and
    /// its body `{`.
    fn scan_spec_region(&mut self, start: usize, open: usize) {
        let code = self.code.clone();
        let clause_starts: Vec<(usize, &str)> = Words::new(&code, start..open)
            .filter(|(_, w)| SPEC_KEYWORDS.contains(w))
            .collect();
        for (idx, (at, word)) in clause_starts.iter().enumerate() {
            let kind = match *word {
                "invariant" => AnnotationKind::Invariant,
                "decreases" => AnnotationKind::Decreases,
                _ => continue,
            };
            let clause_end_limit =
                clause_starts.get(idx + 1).map(|(p, _)| *p).unwrap_or(open);
            // Trim trailing whitespace (in the original text) off the clause.
            let mut end = clause_end_limit;
            let ob = self.original.as_bytes();
            while end > *at && ob[end - 1].is_ascii_whitespace() {
                end -= 1;
            }
            if end <= at + word.len() {
                continue; // empty operand; not a recognisable clause
            }
            self.record_clause(kind, *at, end);
        }
    }

    fn record_assert(&mut self, start: usize, end: usize) {
        // Trim trailing whitespace; keep the `;` (or `}` of an
        // `assert … by { … }` block) inside the clause text.
        let ob = self.original.as_bytes();
        let mut e = end;
        while e > start && ob[e - 1].is_ascii_whitespace() {
            e -= 1;
        }
        if e > start {
            self.record_clause(AnnotationKind::Assert, start, e);
        }
    }

    /// Record an annotation whose clause text occupies `original[start..end]`,
    /// computing the owned span per the line-ownership rules.
    fn record_clause(&mut self, kind: AnnotationKind, start: usize, end: usize) {
        let text = self.original[start..end].to_string();
        let span = owned_span(self.original, start..end);
        self.annotations.push(AnnotationInstance {
            annotation: Annotation::from_clause(kind, text),
            owned_text: self.original[span.clone()].to_string(),
            span,
            ordinal: 0, // assigned after sorting
        });
    }
}

/// The byte range a clause at `clause` owns, per the ownership rules: a
/// clause with only whitespace before it on its first line and after it on
/// its last line owns the full lines including the trailing newline;
/// otherwise it owns its own bytes plus one trailing space if present.
fn owned_span(src: &str, clause: Range<usize>) -> Range<usize> {
    let b = src.as_bytes();
    let line_start = src[..clause.start].rfind('\n').map(|p| p + 1).unwrap_or(0);
    let prefix_ws = src[line_start..clause.start].chars().all(|c| c == ' ' || c == '\t');
    let line_end = src[clause.end..]
        .find('\n')
        .map(|p| clause.end + p)
        .unwrap_or(src.len());
    let suffix_ws = src[clause.end..line_end].chars().all(|c| c == ' ' || c == '\t');
    if prefix_ws && suffix_ws {
        let end = if line_end < src.len() { line_end + 1 } else { line_end };
        line_start..end
    } else {
        let end = if b.get(clause.end) == Some(&b' ') { clause.end + 1 } else { clause.end };
        clause.start..end
    }
}

/// Scan a source text. Total: any input yields a unit.
pub fn parse(source: &SourceText) -> ParsedUnit {
    Scanner::run(source)
}

/// The annotations of a unit in textual order.
pub fn list_annotations(unit: &ParsedUnit) -> &[AnnotationInstance] {
    &unit.annotations
}

// ---------------------------------------------------------------------------
// Insertion points
// ---------------------------------------------------------------------------

fn line_start_of(src: &str, offset: usize) -> usize {
    src[..offset].rfind('\n').map(|p| p + 1).unwrap_or(0)
}

fn line_indent_at(src: &str, offset: usize) -> String {
    let ls = line_start_of(src, offset);
    src[ls..]
        .chars()
        .take_while(|c| *c == ' ' || *c == '\t')
        .collect()
}

/// 1-based line number of a byte offset.
pub fn line_of_offset(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Enumerate the insertion points of `kind` available in `method_id`
/// (index into `unit.methods`), in strictly increasing offset order.
///
/// `Invariant` and `Decreases` yield one `LoopSpec` point per loop of the
/// method; `Assert` yields one `AfterStatement` point per statement.
pub fn enumerate_insertion_points(
    unit: &ParsedUnit,
    method_id: usize,
    kind: AnnotationKind,
) -> Result<Vec<InsertionPoint>, TextError> {
    if method_id >= unit.methods.len() {
        return Err(TextError::UnknownMethod(method_id));
    }
    let src = &unit.source.content;
    let mut points = Vec::new();
    match kind {
        AnnotationKind::Invariant | AnnotationKind::Decreases => {
            for (loop_id, lp) in unit.loops.iter().enumerate() {
                if lp.method != method_id {
                    continue;
                }
                let guard_line_start = line_start_of(src, lp.span.start);
                let brace_line_start = line_start_of(src, lp.body_open);
                if brace_line_start > guard_line_start {
                    // `{` on its own line: insert at that line's start.
                    let region = &src[lp.span.start..lp.body_open];
                    let indent = last_clause_indent(src, lp.span.start, region)
                        .unwrap_or_else(|| line_indent_at(src, lp.span.start) + "  ");
                    points.push(InsertionPoint {
                        kind: PointKind::LoopSpec { loop_id },
                        style: InsertionStyle::OwnLine,
                        offset: brace_line_start,
                        indent,
                    });
                } else {
                    // `{` on the guard line: splice the clause inline.
                    points.push(InsertionPoint {
                        kind: PointKind::LoopSpec { loop_id },
                        style: InsertionStyle::InlineBeforeBrace,
                        offset: lp.body_open,
                        indent: String::new(),
                    });
                }
            }
        }
        AnnotationKind::Assert => {
            for (statement_id, st) in unit.statements.iter().enumerate() {
                if st.method != method_id {
                    continue;
                }
                let end = st.span.end;
                let after_line = src[end..].find('\n').map(|p| end + p + 1).unwrap_or(src.len());
                points.push(InsertionPoint {
                    kind: PointKind::AfterStatement { statement_id },
                    style: InsertionStyle::OwnLine,
                    offset: after_line,
                    indent: line_indent_at(src, st.span.start),
                });
            }
        }
    }
    points.sort_by_key(|p| p.offset);
    points.dedup_by_key(|p| p.offset);
    Ok(points)
}

/// Indent of the last existing full-line spec clause in a loop's spec
/// region, if any.
fn last_clause_indent(src: &str, region_start: usize, region: &str) -> Option<String> {
    let mut last = None;
    for (at, w) in Words::new(region, 0..region.len()) {
        if SPEC_KEYWORDS.contains(&w) {
            last = Some(region_start + at);
        }
    }
    let at = last?;
    let ls = line_start_of(src, at);
    let indent: String = src[ls..at].chars().collect();
    if indent.chars().all(|c| c == ' ' || c == '\t') {
        Some(indent)
    } else {
        None
    }
}

/// Splice `ann` into `source` at `point`. The result differs from the
/// input only by the inserted bytes; removing the inserted instance
/// restores the input exactly.
pub fn insert_annotation(
    source: &SourceText,
    point: &InsertionPoint,
    ann: &Annotation,
) -> Result<SourceText, TextError> {
    let kind_ok = match point.kind {
        PointKind::LoopSpec { .. } => {
            matches!(ann.kind, AnnotationKind::Invariant | AnnotationKind::Decreases)
        }
        PointKind::AfterStatement { .. } => ann.kind == AnnotationKind::Assert,
    };
    if !kind_ok {
        return Err(TextError::KindMismatch { kind: ann.kind });
    }
    let src = &source.content;
    if point.offset > src.len() {
        return Err(TextError::StalePoint { offset: point.offset });
    }
    let inserted = match point.style {
        InsertionStyle::OwnLine => {
            let at_line_start = point.offset == 0
                || src.as_bytes().get(point.offset - 1) == Some(&b'\n');
            if at_line_start {
                format!("{}{}\n", point.indent, ann.text)
            } else if point.offset == src.len() {
                // text without a final newline: open a fresh last line
                format!("\n{}{}", point.indent, ann.text)
            } else {
                return Err(TextError::StalePoint { offset: point.offset });
            }
        }
        InsertionStyle::InlineBeforeBrace => {
            if src.as_bytes().get(point.offset) != Some(&b'{') {
                return Err(TextError::StalePoint { offset: point.offset });
            }
            format!("{} ", ann.text)
        }
    };
    let mut content = String::with_capacity(src.len() + inserted.len());
    content.push_str(&src[..point.offset]);
    content.push_str(&inserted);
    content.push_str(&src[point.offset..]);
    Ok(SourceText { content, path: source.path.clone() })
}

/// Delete the bytes owned by `instance` from `source`.
pub fn remove_annotation(
    source: &SourceText,
    instance: &AnnotationInstance,
) -> Result<SourceText, TextError> {
    let src = &source.content;
    let span = instance.span.clone();
    let stale = || TextError::StaleInstance { start: span.start, end: span.end };
    if span.end > src.len() || span.start >= span.end {
        return Err(stale());
    }
    let slice = src.get(span.start..span.end).ok_or_else(stale)?;
    if !slice.trim_start().starts_with(instance.annotation.kind.keyword()) {
        return Err(stale());
    }
    let mut content = String::with_capacity(src.len() - slice.len());
    content.push_str(&src[..span.start]);
    content.push_str(&src[span.end..]);
    Ok(SourceText { content, path: source.path.clone() })
}

/// Remove every annotation from `source`, last first so earlier spans stay
/// valid. The returned instances carry their spans in the *original* text,
/// in textual order; only instances actually removed are returned, so
/// `reinsert_all` on the pair always reproduces the input.
pub fn strip_all_annotations(source: &SourceText) -> (SourceText, Vec<AnnotationInstance>) {
    let unit = parse(source);
    let mut current = source.clone();
    let mut removed = Vec::new();
    for inst in unit.annotations.iter().rev() {
        match remove_annotation(&current, inst) {
            Ok(next) => {
                current = next;
                removed.push(inst.clone());
            }
            Err(_) => continue, // overlapping spans; leave the earlier one
        }
    }
    removed.reverse();
    (current, removed)
}

/// Inverse of `strip_all_annotations`: splice every recorded instance back
/// into the stripped text, byte-for-byte reproducing the text the
/// instances were recorded from.
pub fn reinsert_all(stripped: &SourceText, instances: &[AnnotationInstance]) -> SourceText {
    let mut ordered: Vec<&AnnotationInstance> = instances.iter().collect();
    ordered.sort_by_key(|i| i.span.start);
    let src = &stripped.content;
    let mut content = String::with_capacity(
        src.len() + ordered.iter().map(|i| i.owned_text.len()).sum::<usize>(),
    );
    let mut consumed = 0; // bytes of the stripped text already copied
    let mut restored = 0; // owned bytes spliced back so far
    for inst in ordered {
        let at = (inst.span.start - restored).min(src.len());
        content.push_str(&src[consumed..at]);
        content.push_str(&inst.owned_text);
        consumed = at;
        restored += inst.owned_text.len();
    }
    content.push_str(&src[consumed..]);
    SourceText { content, path: stripped.path.clone() }
}

/// Convenience: the normalized texts of every annotation in `source`.
pub fn normalized_annotation_set(source: &SourceText) -> BTreeSet<String> {
    parse(source)
        .annotations
        .iter()
        .map(|a| a.annotation.normalized.clone())
        .collect()
}
