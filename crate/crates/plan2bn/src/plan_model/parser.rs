//! Lexer and recursive-descent parser for the plan-file syntax.
//!
//! ```text
//! library := ka+
//! ka      := "ka" IDENT "achieves" "!" IDENT ("context" IDENT ("," IDENT)*)? "{" body "}"
//! body    := (step | branch)*
//! branch  := ("and" | "or") "{" "{" body "}" ("{" body "}")+ "}"
//! step    := ("*" | "!" | "#" | "?" | "^" | "->" | "<-") IDENT
//! ```
//!
//! `#` starts a comment running to end of line unless it is immediately
//! followed by an identifier character, in which case it is the maintain
//! sigil. Keywords are ordinary identifiers recognized by position.

use super::{Body, BodyElem, Branch, BranchKind, Ka, PlanLibrary, Step, StepKind};
use std::collections::BTreeSet;
use thiserror::Error;

/// Syntax error with source position. Column counts are 1-based characters.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, col {col}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LBrace,
    RBrace,
    Comma,
    Sigil(StepKind),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier '{s}'"),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Comma => "','".into(),
            Tok::Sigil(k) => format!("'{}'", k.sigil()),
        }
    }
}

struct Lexed {
    tok: Tok,
    line: usize,
    col: usize,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn lex(text: &str) -> Result<Vec<Lexed>, ParseError> {
    let mut toks = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut col) = (1usize, 1usize);

    macro_rules! bump {
        () => {{
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                col = 1;
            } else if c.is_some() {
                col += 1;
            }
            c
        }};
    }

    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, col);
        match c {
            ' ' | '\t' | '\r' | '\n' => {
                bump!();
            }
            '#' => {
                bump!();
                match chars.peek() {
                    Some(&n) if is_ident_char(n) => {
                        toks.push(Lexed { tok: Tok::Sigil(StepKind::Maintain), line: tline, col: tcol });
                    }
                    _ => {
                        while let Some(&n) = chars.peek() {
                            if n == '\n' {
                                break;
                            }
                            bump!();
                        }
                    }
                }
            }
            '{' => {
                bump!();
                toks.push(Lexed { tok: Tok::LBrace, line: tline, col: tcol });
            }
            '}' => {
                bump!();
                toks.push(Lexed { tok: Tok::RBrace, line: tline, col: tcol });
            }
            ',' => {
                bump!();
                toks.push(Lexed { tok: Tok::Comma, line: tline, col: tcol });
            }
            '*' => {
                bump!();
                toks.push(Lexed { tok: Tok::Sigil(StepKind::Primitive), line: tline, col: tcol });
            }
            '!' => {
                bump!();
                toks.push(Lexed { tok: Tok::Sigil(StepKind::Achieve), line: tline, col: tcol });
            }
            '?' => {
                bump!();
                toks.push(Lexed { tok: Tok::Sigil(StepKind::Test), line: tline, col: tcol });
            }
            '^' => {
                bump!();
                toks.push(Lexed { tok: Tok::Sigil(StepKind::Wait), line: tline, col: tcol });
            }
            '-' => {
                bump!();
                if chars.peek() == Some(&'>') {
                    bump!();
                    toks.push(Lexed { tok: Tok::Sigil(StepKind::Assert), line: tline, col: tcol });
                } else {
                    return Err(ParseError {
                        line: tline,
                        col: tcol,
                        message: "expected '->' after '-'".into(),
                    });
                }
            }
            '<' => {
                bump!();
                if chars.peek() == Some(&'-') {
                    bump!();
                    toks.push(Lexed { tok: Tok::Sigil(StepKind::Retract), line: tline, col: tcol });
                } else {
                    return Err(ParseError {
                        line: tline,
                        col: tcol,
                        message: "expected '<-' after '<'".into(),
                    });
                }
            }
            c if is_ident_start(c) => {
                let mut s = String::new();
                while let Some(&n) = chars.peek() {
                    if is_ident_char(n) {
                        s.push(n);
                        bump!();
                    } else {
                        break;
                    }
                }
                toks.push(Lexed { tok: Tok::Ident(s), line: tline, col: tcol });
            }
            other => {
                return Err(ParseError {
                    line: tline,
                    col: tcol,
                    message: format!("unexpected character '{other}'"),
                });
            }
        }
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Lexed>,
    pos: usize,
    end_line: usize,
    end_col: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos)
            .map(|l| (l.line, l.col))
            .unwrap_or((self.end_line, self.end_col))
    }

    fn err(&self, expected: &str) -> ParseError {
        let (line, col) = self.here();
        let found = match self.peek() {
            Some(t) => t.describe(),
            None => "end of input".into(),
        };
        ParseError {
            line,
            col,
            message: format!("expected {expected}, found {found}"),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect_ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let Some(Tok::Ident(s)) = self.next() else { unreachable!() };
                Ok(s)
            }
            _ => Err(self.err(what)),
        }
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == kw => {
                self.next();
                Ok(())
            }
            _ => Err(self.err(&format!("'{kw}'"))),
        }
    }

    fn expect_tok(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.next();
            Ok(())
        } else {
            Err(self.err(what))
        }
    }

    fn parse_library(&mut self) -> Result<PlanLibrary, ParseError> {
        let mut kas = Vec::new();
        let mut names = BTreeSet::new();
        while self.peek().is_some() {
            let ka = self.parse_ka()?;
            if !names.insert(ka.name.clone()) {
                let (line, col) = self.here();
                return Err(ParseError {
                    line,
                    col,
                    message: format!("duplicate ka name '{}'", ka.name),
                });
            }
            kas.push(ka);
        }
        if kas.is_empty() {
            return Err(ParseError {
                line: self.end_line,
                col: self.end_col,
                message: "a plan library needs at least one ka".into(),
            });
        }

        // Top-level goals: purposes never named by an achieve step, in
        // declaration order.
        let mut referenced = BTreeSet::new();
        for ka in &kas {
            for sub in ka.body.subgoals() {
                referenced.insert(sub);
            }
        }
        let mut top_level_goals = Vec::new();
        for ka in &kas {
            if !referenced.contains(&ka.purpose) && !top_level_goals.contains(&ka.purpose) {
                top_level_goals.push(ka.purpose.clone());
            }
        }

        Ok(PlanLibrary { kas, top_level_goals })
    }

    fn parse_ka(&mut self) -> Result<Ka, ParseError> {
        self.expect_keyword("ka")?;
        let name = self.expect_ident("ka name")?;
        self.expect_keyword("achieves")?;
        self.expect_tok(Tok::Sigil(StepKind::Achieve), "'!' before the goal name")?;
        let purpose = self.expect_ident("goal name")?;

        let mut context = Vec::new();
        if let Some(Tok::Ident(s)) = self.peek() {
            if s == "context" {
                self.next();
                context.push(self.expect_ident("context condition")?);
                while self.peek() == Some(&Tok::Comma) {
                    self.next();
                    context.push(self.expect_ident("context condition")?);
                }
            }
        }

        self.expect_tok(Tok::LBrace, "'{' opening the ka body")?;
        let body = self.parse_body()?;
        if body.elements.is_empty() {
            return Err(self.err("at least one step in the ka body"));
        }
        self.expect_tok(Tok::RBrace, "'}' closing the ka body")?;
        Ok(Ka { name, purpose, context, body })
    }

    fn parse_body(&mut self) -> Result<Body, ParseError> {
        let mut elements = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Sigil(_)) => {
                    let Some(Tok::Sigil(kind)) = self.next() else { unreachable!() };
                    let target = self.expect_ident("step target")?;
                    elements.push(BodyElem::Step(Step { kind, target }));
                }
                Some(Tok::Ident(s)) if s == "and" || s == "or" => {
                    let kind = if s == "and" { BranchKind::And } else { BranchKind::Or };
                    self.next();
                    elements.push(BodyElem::Branch(self.parse_branch(kind)?));
                }
                _ => break,
            }
        }
        Ok(Body { elements })
    }

    fn parse_branch(&mut self, kind: BranchKind) -> Result<Branch, ParseError> {
        self.expect_tok(Tok::LBrace, "'{' opening the branch")?;
        let mut branches = Vec::new();
        while self.peek() == Some(&Tok::LBrace) {
            self.next();
            let arm = self.parse_body()?;
            if arm.elements.is_empty() {
                return Err(self.err("at least one step in the branch arm"));
            }
            self.expect_tok(Tok::RBrace, "'}' closing the branch arm")?;
            branches.push(arm);
        }
        self.expect_tok(Tok::RBrace, "'}' closing the branch")?;
        if branches.len() < 2 {
            let (line, col) = self.here();
            return Err(ParseError {
                line,
                col,
                message: format!(
                    "a branch needs at least two arms, found {}",
                    branches.len()
                ),
            });
        }
        Ok(Branch { kind, branches })
    }
}

/// Parse a complete plan file.
pub fn parse_plan_file(text: &str) -> Result<PlanLibrary, ParseError> {
    let toks = lex(text)?;
    let end_line = text.lines().count().max(1);
    let end_col = text.lines().last().map(|l| l.chars().count() + 1).unwrap_or(1);
    let mut parser = Parser { toks, pos: 0, end_line, end_col };
    parser.parse_library()
}
