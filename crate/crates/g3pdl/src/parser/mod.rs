//! Concrete syntax: lexer, recursive-descent parser, and renderer.
//!
//! Grammar (binding tightness increasing downwards; `->` is right
//! associative, `&` and `|` and `;` and `+` are left associative):
//!
//! ```text
//! formula  := imp
//! imp      := or ('->' imp)?
//! or       := and ('|' and)*
//! and      := unary ('&' unary)*
//! unary    := 'false' | ident | '[' program ']' unary | '(' imp ')'
//! program  := choice
//! choice   := seqp ('+' seqp)*
//! seqp     := postfix (';' postfix)*
//! postfix  := primary '*'*
//! primary  := testable '?' | ident | '(' program ')'
//! testable := 'false' | ident | '[' program ']' testable | '(' formula ')'
//! sequent  := items? '|-' items?
//! items    := item (',' item)*
//! item     := ident ':' formula | ident '-' ident '->' ident
//! ```
//!
//! Proposition names, program names, and labels share one identifier
//! namespace and are told apart by position. The renderer emits minimal
//! parentheses and round-trips: parsing a rendered term yields the term back.

mod files;

pub use files::{parse_model, parse_proof, render_model, render_proof, FileError};

use crate::syntax::{Formula, Item, Label, Program, ProgName, Sequent};
use std::fmt;
use thiserror::Error;

/// Byte range of a token in the input, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub start: usize,
    pub end: usize,
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("parse error at {span}: {message}")]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    False,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Amp,
    Pipe,
    Arrow,
    Minus,
    Star,
    Plus,
    Semi,
    Question,
    Comma,
    Colon,
    Turnstile,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Tok::Ident(i) => return write!(f, "identifier `{i}`"),
            Tok::False => "`false`",
            Tok::LBracket => "`[`",
            Tok::RBracket => "`]`",
            Tok::LParen => "`(`",
            Tok::RParen => "`)`",
            Tok::Amp => "`&`",
            Tok::Pipe => "`|`",
            Tok::Arrow => "`->`",
            Tok::Minus => "`-`",
            Tok::Star => "`*`",
            Tok::Plus => "`+`",
            Tok::Semi => "`;`",
            Tok::Question => "`?`",
            Tok::Comma => "`,`",
            Tok::Colon => "`:`",
            Tok::Turnstile => "`|-`",
            Tok::Eof => "end of input",
        };
        f.write_str(s)
    }
}

fn lex(input: &str) -> Result<Vec<(Tok, SourceSpan)>, ParseError> {
    let bytes = input.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '[' => toks.push((Tok::LBracket, SourceSpan { start, end: i + 1 })),
            ']' => toks.push((Tok::RBracket, SourceSpan { start, end: i + 1 })),
            '(' => toks.push((Tok::LParen, SourceSpan { start, end: i + 1 })),
            ')' => toks.push((Tok::RParen, SourceSpan { start, end: i + 1 })),
            '&' => toks.push((Tok::Amp, SourceSpan { start, end: i + 1 })),
            '*' => toks.push((Tok::Star, SourceSpan { start, end: i + 1 })),
            '+' => toks.push((Tok::Plus, SourceSpan { start, end: i + 1 })),
            ';' => toks.push((Tok::Semi, SourceSpan { start, end: i + 1 })),
            '?' => toks.push((Tok::Question, SourceSpan { start, end: i + 1 })),
            ',' => toks.push((Tok::Comma, SourceSpan { start, end: i + 1 })),
            ':' => toks.push((Tok::Colon, SourceSpan { start, end: i + 1 })),
            '|' => {
                if bytes.get(i + 1) == Some(&b'-') {
                    toks.push((Tok::Turnstile, SourceSpan { start, end: i + 2 }));
                    i += 2;
                    continue;
                }
                toks.push((Tok::Pipe, SourceSpan { start, end: i + 1 }));
            }
            '-' => {
                if bytes.get(i + 1) == Some(&b'>') {
                    toks.push((Tok::Arrow, SourceSpan { start, end: i + 2 }));
                    i += 2;
                    continue;
                }
                toks.push((Tok::Minus, SourceSpan { start, end: i + 1 }));
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i + 1;
                while j < bytes.len() {
                    let d = bytes[j] as char;
                    if d.is_ascii_alphanumeric() || d == '_' {
                        j += 1;
                    } else {
                        break;
                    }
                }
                let word = &input[i..j];
                let span = SourceSpan { start, end: j };
                if word == "false" {
                    toks.push((Tok::False, span));
                } else {
                    toks.push((Tok::Ident(word.to_string()), span));
                }
                i = j;
                continue;
            }
            _ => {
                return Err(ParseError {
                    span: SourceSpan { start, end: i + 1 },
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
        i += 1;
    }
    let end = input.len();
    toks.push((Tok::Eof, SourceSpan { start: end, end }));
    Ok(toks)
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
}

impl Parser {
    fn new(input: &str) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: lex(input)?,
            pos: 0,
        })
    }

    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].0.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: &Tok) -> Result<(), ParseError> {
        if self.peek() == want {
            self.bump();
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected {want}")))
        }
    }

    fn unexpected(&self, message: &str) -> ParseError {
        ParseError {
            span: self.span(),
            message: format!("{message}, found {}", self.peek()),
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            _ => Err(self.unexpected(&format!("expected {what}"))),
        }
    }

    fn formula(&mut self) -> Result<Formula, ParseError> {
        let lhs = self.formula_or()?;
        if *self.peek() == Tok::Arrow {
            self.bump();
            let rhs = self.formula()?;
            Ok(Formula::imp(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn formula_or(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.formula_and()?;
        while *self.peek() == Tok::Pipe {
            self.bump();
            let rhs = self.formula_and()?;
            acc = Formula::or(acc, rhs);
        }
        Ok(acc)
    }

    fn formula_and(&mut self) -> Result<Formula, ParseError> {
        let mut acc = self.formula_unary()?;
        while *self.peek() == Tok::Amp {
            self.bump();
            let rhs = self.formula_unary()?;
            acc = Formula::and(acc, rhs);
        }
        Ok(acc)
    }

    fn formula_unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::False => {
                self.bump();
                Ok(Formula::Bot)
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Formula::atom(name))
            }
            Tok::LBracket => {
                self.bump();
                let prog = self.program()?;
                self.expect(&Tok::RBracket)?;
                let body = self.formula_unary()?;
                Ok(Formula::Box(prog, Box::new(body)))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.formula()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.unexpected("expected a formula")),
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut acc = self.program_seq()?;
        while *self.peek() == Tok::Plus {
            self.bump();
            let rhs = self.program_seq()?;
            acc = Program::choice(acc, rhs);
        }
        Ok(acc)
    }

    fn program_seq(&mut self) -> Result<Program, ParseError> {
        let mut acc = self.program_postfix()?;
        while *self.peek() == Tok::Semi {
            self.bump();
            let rhs = self.program_postfix()?;
            acc = Program::seq(acc, rhs);
        }
        Ok(acc)
    }

    fn program_postfix(&mut self) -> Result<Program, ParseError> {
        let mut acc = self.program_primary()?;
        while *self.peek() == Tok::Star {
            self.bump();
            acc = Program::star(acc);
        }
        Ok(acc)
    }

    fn program_primary(&mut self) -> Result<Program, ParseError> {
        // A test is a restricted formula followed by `?`; try that first and
        // backtrack if it does not pan out.
        let save = self.pos;
        if let Ok(phi) = self.testable_formula() {
            if *self.peek() == Tok::Question {
                self.bump();
                return Ok(Program::test(phi));
            }
        }
        self.pos = save;
        match self.peek().clone() {
            Tok::Ident(name) => {
                self.bump();
                Ok(Program::atom(name))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.program()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.unexpected("expected a program")),
        }
    }

    fn testable_formula(&mut self) -> Result<Formula, ParseError> {
        match self.peek().clone() {
            Tok::False => {
                self.bump();
                Ok(Formula::Bot)
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Formula::atom(name))
            }
            Tok::LBracket => {
                self.bump();
                let prog = self.program()?;
                self.expect(&Tok::RBracket)?;
                let body = self.testable_formula()?;
                Ok(Formula::Box(prog, Box::new(body)))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.formula()?;
                self.expect(&Tok::RParen)?;
                Ok(inner)
            }
            _ => Err(self.unexpected("expected a formula")),
        }
    }

    fn item(&mut self) -> Result<Item, ParseError> {
        let first = self.ident("a label")?;
        match self.peek() {
            Tok::Colon => {
                self.bump();
                let phi = self.formula()?;
                Ok(Item::fml(Label::new(first), phi))
            }
            Tok::Minus => {
                self.bump();
                let prog = self.ident("an atomic program name")?;
                self.expect(&Tok::Arrow)?;
                let dst = self.ident("a label")?;
                Ok(Item::rel(
                    Label::new(first),
                    ProgName::new(prog),
                    Label::new(dst),
                ))
            }
            _ => Err(self.unexpected("expected `:` or `-` after label")),
        }
    }

    fn items_until_turnstile_or_eof(&mut self) -> Result<Vec<Item>, ParseError> {
        let mut out = Vec::new();
        if matches!(self.peek(), Tok::Turnstile | Tok::Eof) {
            return Ok(out);
        }
        out.push(self.item()?);
        while *self.peek() == Tok::Comma {
            self.bump();
            out.push(self.item()?);
        }
        Ok(out)
    }

    fn sequent(&mut self) -> Result<Sequent, ParseError> {
        let ant = self.items_until_turnstile_or_eof()?;
        self.expect(&Tok::Turnstile)?;
        let con = self.items_until_turnstile_or_eof()?;
        Ok(Sequent::new(ant, con))
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        if *self.peek() == Tok::Eof {
            Ok(())
        } else {
            Err(self.unexpected("expected end of input"))
        }
    }
}

/// Parse a formula from text.
pub fn parse_formula(input: &str) -> Result<Formula, ParseError> {
    let mut p = Parser::new(input)?;
    let phi = p.formula()?;
    p.finish()?;
    Ok(phi)
}

/// Parse a program from text.
pub fn parse_program(input: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(input)?;
    let alpha = p.program()?;
    p.finish()?;
    Ok(alpha)
}

/// Parse a sequent `Gamma |- Delta` from text. Either side may be empty.
pub fn parse_sequent(input: &str) -> Result<Sequent, ParseError> {
    let mut p = Parser::new(input)?;
    let s = p.sequent()?;
    p.finish()?;
    Ok(s)
}

/// Parse a single sequent item (labelled formula or relational atom).
pub fn parse_item(input: &str) -> Result<Item, ParseError> {
    let mut p = Parser::new(input)?;
    let it = p.item()?;
    p.finish()?;
    Ok(it)
}

// ---------------------------------------------------------------------------
// Rendering. Levels encode binding tightness; a subterm is parenthesized
// when its own level is looser than the context demands.
// ---------------------------------------------------------------------------

fn fmt_formula(phi: &Formula, level: u8, out: &mut String) {
    match phi {
        Formula::Bot => out.push_str("false"),
        Formula::Atom(p) => out.push_str(p.as_str()),
        Formula::Imp(a, b) => {
            let parens = level > 0;
            if parens {
                out.push('(');
            }
            fmt_formula(a, 1, out);
            out.push_str(" -> ");
            fmt_formula(b, 0, out);
            if parens {
                out.push(')');
            }
        }
        Formula::Or(a, b) => {
            let parens = level > 1;
            if parens {
                out.push('(');
            }
            fmt_formula(a, 1, out);
            out.push_str(" | ");
            fmt_formula(b, 2, out);
            if parens {
                out.push(')');
            }
        }
        Formula::And(a, b) => {
            let parens = level > 2;
            if parens {
                out.push('(');
            }
            fmt_formula(a, 2, out);
            out.push_str(" & ");
            fmt_formula(b, 3, out);
            if parens {
                out.push(')');
            }
        }
        Formula::Box(alpha, body) => {
            out.push('[');
            fmt_program(alpha, 0, out);
            out.push(']');
            fmt_formula(body, 3, out);
        }
    }
}

fn fmt_program(alpha: &Program, level: u8, out: &mut String) {
    match alpha {
        Program::Atom(a) => out.push_str(a.as_str()),
        Program::Choice(a, b) => {
            let parens = level > 0;
            if parens {
                out.push('(');
            }
            fmt_program(a, 0, out);
            out.push_str(" + ");
            fmt_program(b, 1, out);
            if parens {
                out.push(')');
            }
        }
        Program::Seq(a, b) => {
            let parens = level > 1;
            if parens {
                out.push('(');
            }
            fmt_program(a, 1, out);
            out.push_str(" ; ");
            fmt_program(b, 2, out);
            if parens {
                out.push(')');
            }
        }
        Program::Star(a) => {
            fmt_program(a, 2, out);
            out.push('*');
        }
        Program::Test(phi) => {
            fmt_testable(phi, out);
            out.push('?');
        }
    }
}

fn fmt_testable(phi: &Formula, out: &mut String) {
    match phi {
        Formula::Bot => out.push_str("false"),
        Formula::Atom(p) => out.push_str(p.as_str()),
        Formula::Box(alpha, body) => {
            out.push('[');
            fmt_program(alpha, 0, out);
            out.push(']');
            fmt_testable(body, out);
        }
        _ => {
            out.push('(');
            fmt_formula(phi, 0, out);
            out.push(')');
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        fmt_formula(self, 0, &mut s);
        f.write_str(&s)
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        fmt_program(self, 0, &mut s);
        f.write_str(&s)
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Item::Fml(lf) => write!(f, "{}: {}", lf.label, lf.formula),
            Item::Rel(r) => write!(f, "{} -{}-> {}", r.src, r.prog, r.dst),
        }
    }
}

impl fmt::Display for Sequent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let side = |items: &std::collections::BTreeSet<Item>| {
            items
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let ant = side(&self.ant);
        let con = side(&self.con);
        match (ant.is_empty(), con.is_empty()) {
            (true, true) => f.write_str("|-"),
            (true, false) => write!(f, "|- {con}"),
            (false, true) => write!(f, "{ant} |-"),
            (false, false) => write!(f, "{ant} |- {con}"),
        }
    }
}
