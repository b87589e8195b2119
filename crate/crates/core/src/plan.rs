//! Plan language: AST, parser with error recovery, canonical printer.
//!
//! Grammar:
//!
//!   plan   := (step sep)* step?
//!   step   := NAME '(' (STRING (',' STRING)*)? ')'
//!   sep    := ',' | newline
//!   STRING := single-quoted, escapes `\'` and `\\`
//!
//! Whitespace between tokens is ignored; newlines separate steps at the
//! top level only. A whitespace-only string literal (the dataset's `' '`
//! idiom for an omitted argument) normalizes to the empty string.

use crate::schema;
use std::fmt;

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }
}

/// One parsed action invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCall {
    pub name: String,
    pub args: Vec<String>,
    pub span: Span,
}

impl ActionCall {
    pub fn new(name: impl Into<String>, args: &[&str]) -> Self {
        ActionCall {
            name: name.into(),
            args: args.iter().map(|a| a.to_string()).collect(),
            span: Span::new(0, 0),
        }
    }

    /// Canonical single-call rendering, casing fixed via the registry.
    pub fn print_canonical(&self) -> String {
        let name = match schema::registry().lookup(&self.name) {
            Some(s) => s.canonical_name.to_string(),
            None => self.name.clone(),
        };
        let args: Vec<String> = self.args.iter().map(|a| quote(a)).collect();
        format!("{}({})", name, args.join(", "))
    }
}

/// Structural equality ignores spans.
impl ActionCall {
    pub fn same_call(&self, other: &ActionCall) -> bool {
        self.name == other.name && self.args == other.args
    }
}

/// An ordered sequence of action calls. The empty plan is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Plan {
    pub steps: Vec<ActionCall>,
}

impl Plan {
    pub fn new(steps: Vec<ActionCall>) -> Self {
        Plan { steps }
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    /// Structural equality ignoring spans.
    pub fn same_plan(&self, other: &Plan) -> bool {
        self.steps.len() == other.steps.len()
            && self.steps.iter().zip(&other.steps).all(|(a, b)| a.same_call(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    UnexpectedToken,
    UnterminatedString,
    MissingParen,
    TrailingGarbage,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ParseErrorKind::UnexpectedToken => "unexpected token",
            ParseErrorKind::UnterminatedString => "unterminated string",
            ParseErrorKind::MissingParen => "missing parenthesis",
            ParseErrorKind::TrailingGarbage => "trailing garbage",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub span: Span,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}..{}: {}", self.kind, self.span.start, self.span.end, self.message)
    }
}

/// 1-based line and column of a byte offset, for diagnostics.
pub fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let mut line = 1;
    let mut col = 1;
    for (i, ch) in text.char_indices() {
        if i >= offset {
            break;
        }
        if ch == '\n' {
            line += 1;
            col = 1;
        } else {
            col += 1;
        }
    }
    (line, col)
}

// ── Lexer ──────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Str(String),
    LParen,
    RParen,
    Comma,
    Newline,
    Bad(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    span: Span,
}

fn lex(text: &str) -> (Vec<Token>, Vec<ParseError>) {
    let mut toks = Vec::new();
    let mut errs = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let c = text[i..].chars().next().unwrap();
        match c {
            ' ' | '\t' | '\r' => i += 1,
            '\n' => {
                toks.push(Token { tok: Tok::Newline, span: Span::new(i, i + 1) });
                i += 1;
            }
            '(' => {
                toks.push(Token { tok: Tok::LParen, span: Span::new(i, i + 1) });
                i += 1;
            }
            ')' => {
                toks.push(Token { tok: Tok::RParen, span: Span::new(i, i + 1) });
                i += 1;
            }
            ',' => {
                toks.push(Token { tok: Tok::Comma, span: Span::new(i, i + 1) });
                i += 1;
            }
            '\'' => {
                i += 1;
                let mut value = String::new();
                let mut closed = false;
                while i < bytes.len() {
                    let ch = text[i..].chars().next().unwrap();
                    match ch {
                        '\\' => {
                            i += 1;
                            if i < bytes.len() {
                                let esc = text[i..].chars().next().unwrap();
                                match esc {
                                    '\'' | '\\' => value.push(esc),
                                    other => {
                                        // unknown escape kept verbatim
                                        value.push('\\');
                                        value.push(other);
                                    }
                                }
                                i += esc.len_utf8();
                            }
                        }
                        '\'' => {
                            i += 1;
                            closed = true;
                            break;
                        }
                        other => {
                            value.push(other);
                            i += other.len_utf8();
                        }
                    }
                }
                if closed {
                    // whitespace-only literal means "argument omitted"
                    if value.trim().is_empty() {
                        value.clear();
                    }
                    toks.push(Token { tok: Tok::Str(value), span: Span::new(start, i) });
                } else {
                    errs.push(ParseError {
                        kind: ParseErrorKind::UnterminatedString,
                        message: "string literal is never closed".into(),
                        span: Span::new(start, i),
                    });
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut end = i;
                for ch in text[i..].chars() {
                    if ch.is_ascii_alphanumeric() || ch == '_' {
                        end += ch.len_utf8();
                    } else {
                        break;
                    }
                }
                toks.push(Token {
                    tok: Tok::Ident(text[i..end].to_string()),
                    span: Span::new(i, end),
                });
                i = end;
            }
            other => {
                toks.push(Token { tok: Tok::Bad(other), span: Span::new(i, i + other.len_utf8()) });
                i += other.len_utf8();
            }
        }
    }
    (toks, errs)
}

// ── Parser ─────────────────────────────────────────────────────────────

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    errors: Vec<ParseError>,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> Span {
        self.peek().map(|t| t.span).unwrap_or(Span::new(self.end, self.end))
    }

    fn error(&mut self, kind: ParseErrorKind, message: impl Into<String>, span: Span) {
        self.errors.push(ParseError { kind, message: message.into(), span });
    }

    /// Skip to the next top-level separator so later steps still get parsed.
    fn recover(&mut self) {
        let mut depth = 0i32;
        while let Some(t) = self.peek() {
            match t.tok {
                Tok::LParen => depth += 1,
                Tok::RParen => depth -= 1,
                Tok::Newline if depth <= 0 => return,
                Tok::Comma if depth <= 0 => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn skip_separators(&mut self) {
        while let Some(t) = self.peek() {
            match t.tok {
                Tok::Newline | Tok::Comma => {
                    self.pos += 1;
                }
                _ => return,
            }
        }
    }

    fn parse_step(&mut self) -> Option<ActionCall> {
        let first = self.bump()?;
        let name = match first.tok {
            Tok::Ident(name) => name,
            ref other => {
                let msg = match other {
                    Tok::Bad('"') => "double-quoted strings are not valid; use single quotes".to_string(),
                    _ => "expected an action name".to_string(),
                };
                self.error(ParseErrorKind::UnexpectedToken, msg, first.span);
                self.recover();
                return None;
            }
        };
        let start = first.span.start;

        match self.peek().map(|t| &t.tok) {
            Some(Tok::LParen) => {
                self.pos += 1;
            }
            _ => {
                self.error(
                    ParseErrorKind::MissingParen,
                    format!("expected '(' after action name `{name}`"),
                    self.here(),
                );
                self.recover();
                return None;
            }
        }

        let mut args = Vec::new();
        // inside the argument list, newlines are plain whitespace
        self.skip_newlines();
        match self.peek().map(|t| t.tok.clone()) {
            Some(Tok::RParen) => {
                let close = self.bump().unwrap();
                return Some(ActionCall { name, args, span: Span::new(start, close.span.end) });
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                args.push(s);
            }
            Some(_) => {
                let span = self.here();
                self.error(
                    ParseErrorKind::UnexpectedToken,
                    "expected a quoted string argument or ')'",
                    span,
                );
                self.recover();
                return None;
            }
            None => {
                self.error(
                    ParseErrorKind::MissingParen,
                    format!("argument list of `{name}` is never closed"),
                    Span::new(self.end, self.end),
                );
                return None;
            }
        }
        loop {
            self.skip_newlines();
            match self.peek().map(|t| t.tok.clone()) {
                Some(Tok::RParen) => {
                    let close = self.bump().unwrap();
                    return Some(ActionCall { name, args, span: Span::new(start, close.span.end) });
                }
                Some(Tok::Comma) => {
                    self.pos += 1;
                    self.skip_newlines();
                    match self.peek().map(|t| t.tok.clone()) {
                        Some(Tok::Str(s)) => {
                            self.pos += 1;
                            args.push(s);
                        }
                        _ => {
                            let span = self.here();
                            self.error(
                                ParseErrorKind::UnexpectedToken,
                                "expected a quoted string argument after ','",
                                span,
                            );
                            self.recover();
                            return None;
                        }
                    }
                }
                Some(_) => {
                    let span = self.here();
                    self.error(
                        ParseErrorKind::UnexpectedToken,
                        "expected ',' or ')' in argument list",
                        span,
                    );
                    self.recover();
                    return None;
                }
                None => {
                    self.error(
                        ParseErrorKind::MissingParen,
                        format!("argument list of `{name}` is never closed"),
                        Span::new(self.end, self.end),
                    );
                    return None;
                }
            }
        }
    }

    fn skip_newlines(&mut self) {
        while matches!(self.peek().map(|t| &t.tok), Some(Tok::Newline)) {
            self.pos += 1;
        }
    }
}

/// Parse plan text. Returns every diagnosable error, not just the first.
pub fn parse_plan(text: &str) -> Result<Plan, Vec<ParseError>> {
    let (toks, lex_errs) = lex(text);
    let mut parser = Parser { toks, pos: 0, errors: lex_errs, end: text.len() };
    let mut steps = Vec::new();
    loop {
        parser.skip_separators();
        if parser.peek().is_none() {
            break;
        }
        if let Some(step) = parser.parse_step() {
            steps.push(step);
            // a completed step must be followed by a separator or EOF
            match parser.peek().map(|t| t.tok.clone()) {
                None | Some(Tok::Newline) | Some(Tok::Comma) => {}
                Some(_) => {
                    let span = parser.here();
                    parser.error(
                        ParseErrorKind::TrailingGarbage,
                        "expected a separator (',' or newline) between steps",
                        span,
                    );
                    parser.recover();
                }
            }
        }
    }
    if parser.errors.is_empty() {
        Ok(Plan::new(steps))
    } else {
        Err(parser.errors)
    }
}

fn quote(arg: &str) -> String {
    let mut out = String::with_capacity(arg.len() + 2);
    out.push('\'');
    for c in arg.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            other => out.push(other),
        }
    }
    out.push('\'');
    out
}

/// Canonical rendering: one step per line, schema casing, single quotes,
/// empty arguments printed as `''`, no trailing separator.
pub fn print_canonical(plan: &Plan) -> String {
    plan.steps
        .iter()
        .map(|s| s.print_canonical())
        .collect::<Vec<_>>()
        .join("\n")
}
