//! Surface syntax for sketches.
//!
//! ```text
//! SELECT ??c_name:column
//! FROM (??t:table {(contains ??c_name:column ".*Church.*")
//!                  AND (1900 <= ??c_year:column <= 2020)})
//! WHERE ??c_year:column = 1948
//! ```
//!
//! Keywords are case-insensitive. Columns are written `table.column`, or bare
//! when the name is unique in the catalog. Holes are `??name:column` and
//! `??name:table`. A chain `lo <= c <= hi` inside a soft block means
//! `(c >= lo) AND (c <= hi)` with `>=`/`<=` read as the soft ≳/≲.

use std::collections::HashMap;
use std::fmt;

use regex::Regex;
use thiserror::Error;

use super::ast::*;
use crate::catalog::{Catalog, ColumnName};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{at}: syntax error: {message}")]
    Syntax { at: Location, message: String },
    #[error("{at}: unknown column {name}")]
    UnknownColumnConstant { at: Location, name: String },
    #[error("{at}: unknown table {name}")]
    UnknownTable { at: Location, name: String },
    #[error("{at}: column {name} is ambiguous, qualify it with its table")]
    AmbiguousColumn { at: Location, name: String },
    #[error("{at}: hole {name} is used both as a table and as a column")]
    HoleKindConflict { at: Location, name: String },
    #[error("{at}: hole {name} cannot appear here")]
    HoleAtForbiddenPosition { at: Location, name: String },
    #[error("{at}: invalid regular expression {pattern:?}: {message}")]
    InvalidRegex {
        at: Location,
        pattern: String,
        message: String,
    },
}

impl ParseError {
    pub fn location(&self) -> Location {
        match self {
            ParseError::Syntax { at, .. }
            | ParseError::UnknownColumnConstant { at, .. }
            | ParseError::UnknownTable { at, .. }
            | ParseError::AmbiguousColumn { at, .. }
            | ParseError::HoleKindConflict { at, .. }
            | ParseError::HoleAtForbiddenPosition { at, .. }
            | ParseError::InvalidRegex { at, .. } => *at,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Hole(String, HoleKind),
    Int(i64),
    Float(f64),
    Str(String),
    Regex(String),
    Sym(&'static str),
    Eof,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Hole(n, k) => format!("`??{n}:{k}`"),
            Tok::Int(v) => format!("`{v}`"),
            Tok::Float(v) => format!("`{v}`"),
            Tok::Str(s) => format!("{s:?}"),
            Tok::Regex(s) => format!("r{s:?}"),
            Tok::Sym(s) => format!("`{s}`"),
            Tok::Eof => "end of input".to_string(),
        }
    }
}

const SYMBOLS: [&str; 12] = ["<=", ">=", "~=", "(", ")", "{", "}", ",", "=", "<", ">", "."];

fn lex(text: &str) -> Result<Vec<(Tok, Location)>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let advance = |i: &mut usize, line: &mut usize, col: &mut usize, n: usize| {
        for _ in 0..n {
            if chars[*i] == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
            *i += 1;
        }
    };
    let is_ident_start = |c: char| c.is_alphabetic() || c == '_';
    let is_ident = |c: char| c.is_alphanumeric() || c == '_';
    while i < chars.len() {
        let c = chars[i];
        let at = Location { line, column: col };
        let syntax = |message: String| ParseError::Syntax { at, message };
        if c.is_whitespace() {
            advance(&mut i, &mut line, &mut col, 1);
            continue;
        }
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                advance(&mut i, &mut line, &mut col, 1);
            }
            continue;
        }
        if c == '?' {
            if chars.get(i + 1) != Some(&'?') {
                return Err(syntax("expected `??` to start a hole".into()));
            }
            let mut j = i + 2;
            while j < chars.len() && is_ident(chars[j]) {
                j += 1;
            }
            let name: String = chars[i + 2..j].iter().collect();
            if name.is_empty() || chars.get(j) != Some(&':') {
                return Err(syntax("holes are written ??name:column or ??name:table".into()));
            }
            let mut k = j + 1;
            while k < chars.len() && is_ident(chars[k]) {
                k += 1;
            }
            let kind_text: String = chars[j + 1..k].iter().collect();
            let kind = match kind_text.to_ascii_lowercase().as_str() {
                "column" => HoleKind::Column,
                "table" => HoleKind::Table,
                _ => return Err(syntax(format!("unknown hole kind `{kind_text}`"))),
            };
            out.push((Tok::Hole(name, kind), at));
            let n = k - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        if c == '"' || (c == 'r' && chars.get(i + 1) == Some(&'"')) {
            let raw = c == 'r';
            let mut j = if raw { i + 2 } else { i + 1 };
            let mut s = String::new();
            loop {
                match chars.get(j) {
                    None => return Err(syntax("unterminated string".into())),
                    Some('"') => break,
                    Some('\\') if chars.get(j + 1) == Some(&'"') => {
                        s.push('"');
                        j += 2;
                    }
                    Some('\\') if !raw && chars.get(j + 1) == Some(&'\\') => {
                        s.push('\\');
                        j += 2;
                    }
                    Some(&ch) => {
                        s.push(ch);
                        j += 1;
                    }
                }
            }
            out.push((if raw { Tok::Regex(s) } else { Tok::Str(s) }, at));
            let n = j + 1 - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        let starts_number = c.is_ascii_digit()
            || (c == '-' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()));
        if starts_number {
            let mut j = i + 1;
            let mut float = false;
            while j < chars.len() {
                let d = chars[j];
                if d.is_ascii_digit() {
                    j += 1;
                } else if d == '.' && chars.get(j + 1).is_some_and(|x| x.is_ascii_digit()) && !float {
                    float = true;
                    j += 1;
                } else if (d == 'e' || d == 'E')
                    && (chars.get(j + 1).is_some_and(|x| x.is_ascii_digit())
                        || (matches!(chars.get(j + 1), Some('-') | Some('+'))
                            && chars.get(j + 2).is_some_and(|x| x.is_ascii_digit())))
                {
                    float = true;
                    j += 2;
                } else {
                    break;
                }
            }
            let text: String = chars[i..j].iter().collect();
            let tok = if float {
                match text.parse::<f64>() {
                    Ok(v) if v.is_finite() => Tok::Float(v),
                    _ => return Err(syntax(format!("bad number `{text}`"))),
                }
            } else {
                Tok::Int(text.parse().map_err(|_| syntax(format!("integer `{text}` out of range")))?)
            };
            out.push((tok, at));
            let n = j - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        if is_ident_start(c) {
            let mut j = i;
            while j < chars.len() && is_ident(chars[j]) {
                j += 1;
            }
            let mut word: String = chars[i..j].iter().collect();
            // INNER-JOIN is a single keyword.
            if word.eq_ignore_ascii_case("inner") && chars.get(j) == Some(&'-') {
                let rest: String = chars[j + 1..chars.len().min(j + 5)].iter().collect();
                let boundary = chars.get(j + 5).is_none_or(|&x| !is_ident(x));
                if rest.eq_ignore_ascii_case("join") && boundary {
                    word = "INNER-JOIN".into();
                    j += 5;
                }
            }
            out.push((Tok::Ident(word), at));
            let n = j - i;
            advance(&mut i, &mut line, &mut col, n);
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                out.push((Tok::Sym(sym), at));
                advance(&mut i, &mut line, &mut col, sym.len());
            }
            None => return Err(syntax(format!("unexpected character `{c}`"))),
        }
    }
    out.push((Tok::Eof, Location { line, column: col }));
    Ok(out)
}

const KEYWORDS: [&str; 10] = [
    "SELECT", "FROM", "WHERE", "INNER-JOIN", "ON", "AND", "OR", "TRUE", "IN", "CONTAINS",
];

struct Parser<'a> {
    toks: Vec<(Tok, Location)>,
    pos: usize,
    catalog: &'a Catalog,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn loc(&self) -> Location {
        self.toks[self.pos].1
    }

    fn next(&mut self) -> (Tok, Location) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError::Syntax {
            at: self.loc(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Tok::Sym(s) if *s == sym)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> PResult<()> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            self.error(&format!("`{sym}`"))
        }
    }

    fn forbidden_hole<T>(&self, name: &str, at: Location) -> PResult<T> {
        Err(ParseError::HoleAtForbiddenPosition {
            at,
            name: name.to_string(),
        })
    }

    fn query(&mut self) -> PResult<Sketch> {
        self.expect_kw("SELECT")?;
        let mut project = vec![self.column()?];
        while self.eat_sym(",") {
            project.push(self.column()?);
        }
        self.expect_kw("FROM")?;
        let source = if self.is_sym("(") {
            self.next();
            let node = self.inode()?;
            self.expect_sym(")")?;
            node
        } else {
            self.inode()?
        };
        let mut predicate = Predicate::True;
        let mut select_soft = SoftConstraint::default();
        if self.eat_kw("WHERE") {
            predicate = self.predicate()?;
            if self.is_sym("{") {
                select_soft = self.soft_block()?;
            }
        }
        let soft = if self.is_sym("{") {
            self.soft_block()?
        } else {
            SoftConstraint::default()
        };
        if *self.peek() != Tok::Eof {
            return self.error("end of input");
        }
        Ok(Sketch {
            project,
            select: SelectNode {
                predicate,
                source,
                soft: select_soft,
            },
            soft,
        })
    }

    fn table_constant(&mut self) -> PResult<String> {
        match self.next() {
            (Tok::Ident(name), at) if !is_keyword(&name) => {
                if self.catalog.table_id(&name).is_none() {
                    return Err(ParseError::UnknownTable { at, name });
                }
                Ok(name)
            }
            (Tok::Hole(name, _), at) => self.forbidden_hole(&name, at),
            _ => {
                self.pos -= 1;
                self.error("a table name")
            }
        }
    }

    /// `T [INNER-JOIN right ON c = c] [{soft}]` or a table hole.
    fn inode(&mut self) -> PResult<TableNode> {
        let expr = match self.peek().clone() {
            Tok::Hole(name, kind) => {
                let at = self.loc();
                self.next();
                if kind != HoleKind::Table || self.is_kw("INNER-JOIN") {
                    return self.forbidden_hole(&name, at);
                }
                TableExpr::Hole(name)
            }
            _ => {
                let left = self.table_constant()?;
                if self.eat_kw("INNER-JOIN") {
                    let right = self.right_operand()?;
                    self.expect_kw("ON")?;
                    let left_column = self.column()?;
                    self.expect_sym("=")?;
                    let right_column = self.column()?;
                    TableExpr::Join {
                        left,
                        left_column,
                        right_column,
                        right: Box::new(right),
                    }
                } else {
                    TableExpr::Base(left)
                }
            }
        };
        let soft = if self.is_sym("{") {
            self.soft_block()?
        } else {
            SoftConstraint::default()
        };
        Ok(TableNode { expr, soft })
    }

    fn right_operand(&mut self) -> PResult<TableNode> {
        if self.eat_sym("(") {
            let node = self.inode()?;
            self.expect_sym(")")?;
            return Ok(node);
        }
        let expr = match self.peek().clone() {
            Tok::Hole(name, HoleKind::Table) => {
                self.next();
                TableExpr::Hole(name)
            }
            Tok::Hole(name, HoleKind::Column) => return self.forbidden_hole(&name, self.loc()),
            _ => TableExpr::Base(self.table_constant()?),
        };
        Ok(TableNode::new(expr))
    }

    fn column(&mut self) -> PResult<ColumnExpr> {
        let at = self.loc();
        match self.next().0 {
            Tok::Hole(name, HoleKind::Column) => Ok(ColumnExpr::Hole(name)),
            Tok::Hole(name, HoleKind::Table) => self.forbidden_hole(&name, at),
            Tok::Ident(first) if !is_keyword(&first) => {
                if self.is_sym(".") {
                    self.next();
                    let second = match self.next().0 {
                        Tok::Ident(s) => s,
                        _ => {
                            self.pos -= 1;
                            return self.error("a column name after `.`");
                        }
                    };
                    let name = ColumnName::new(first, second);
                    if self.catalog.column_id(&name).is_none() {
                        return Err(ParseError::UnknownColumnConstant {
                            at,
                            name: name.to_string(),
                        });
                    }
                    Ok(ColumnExpr::Const(name))
                } else {
                    match self.catalog.columns_named(&first) {
                        [] => Err(ParseError::UnknownColumnConstant { at, name: first }),
                        [id] => Ok(ColumnExpr::Const(self.catalog.column(*id).qualified())),
                        _ => Err(ParseError::AmbiguousColumn { at, name: first }),
                    }
                }
            }
            _ => {
                self.pos -= 1;
                self.error("a column")
            }
        }
    }

    fn literal(&mut self) -> PResult<Literal> {
        let at = self.loc();
        match self.next().0 {
            Tok::Int(v) => Ok(Literal::Int(v)),
            Tok::Float(v) => Ok(Literal::Float(v)),
            Tok::Str(s) => Ok(Literal::Str(s)),
            Tok::Regex(s) => {
                check_regex(&s, at)?;
                Ok(Literal::Regex(s))
            }
            Tok::Hole(name, _) => self.forbidden_hole(&name, at),
            _ => {
                self.pos -= 1;
                self.error("a literal")
            }
        }
    }

    fn starts_literal(&self) -> bool {
        matches!(self.peek(), Tok::Int(_) | Tok::Float(_) | Tok::Str(_) | Tok::Regex(_))
    }

    fn predicate(&mut self) -> PResult<Predicate> {
        let mut left = self.conjunction()?;
        while self.eat_kw("OR") {
            let right = self.conjunction()?;
            left = Predicate::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn conjunction(&mut self) -> PResult<Predicate> {
        let mut left = self.pred_atom()?;
        while self.eat_kw("AND") {
            let right = self.pred_atom()?;
            left = Predicate::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn pred_atom(&mut self) -> PResult<Predicate> {
        if self.eat_kw("TRUE") {
            return Ok(Predicate::True);
        }
        if self.eat_sym("(") {
            let p = self.predicate()?;
            self.expect_sym(")")?;
            return Ok(p);
        }
        let column = self.column()?;
        let op = match self.next().0 {
            Tok::Sym("<") => RelOp::Lt,
            Tok::Sym("<=") => RelOp::Le,
            Tok::Sym("=") => RelOp::Eq,
            Tok::Sym(">=") => RelOp::Ge,
            Tok::Sym(">") => RelOp::Gt,
            _ => {
                self.pos -= 1;
                return self.error("a comparison operator");
            }
        };
        let at = self.loc();
        let value = self.literal()?;
        if value.is_regex() {
            return Err(ParseError::Syntax {
                at,
                message: "regular expressions are only allowed in soft constraints".into(),
            });
        }
        Ok(Predicate::Compare { column, op, value })
    }

    fn soft_block(&mut self) -> PResult<SoftConstraint> {
        self.expect_sym("{")?;
        let mut conjuncts = Vec::new();
        self.soft_item(&mut conjuncts)?;
        while self.eat_kw("AND") {
            self.soft_item(&mut conjuncts)?;
        }
        self.expect_sym("}")?;
        Ok(SoftConstraint { conjuncts })
    }

    fn soft_item(&mut self, out: &mut Vec<Primitive>) -> PResult<()> {
        // `(` opens a parenthesized primitive unless it is `contains(`.
        if self.is_sym("(") {
            self.next();
            self.soft_item(out)?;
            while self.eat_kw("AND") {
                self.soft_item(out)?;
            }
            return self.expect_sym(")");
        }
        if self.eat_kw("TRUE") {
            return Ok(());
        }
        if self.is_kw("CONTAINS") {
            self.next();
            let parenthesized = self.eat_sym("(");
            let column = self.column()?;
            if parenthesized {
                self.expect_sym(",")?;
            }
            let at = self.loc();
            let pattern = match self.next().0 {
                Tok::Str(s) | Tok::Regex(s) => s,
                _ => {
                    self.pos -= 1;
                    return self.error("a pattern string");
                }
            };
            check_regex(&pattern, at)?;
            if parenthesized {
                self.expect_sym(")")?;
            }
            out.push(Primitive::Contains { column, pattern });
            return Ok(());
        }
        if self.starts_literal() {
            let at = self.loc();
            let value = self.literal()?;
            if self.eat_kw("IN") {
                if value.is_regex() {
                    return Err(ParseError::Syntax {
                        at,
                        message: "a regular expression cannot be used with `in`".into(),
                    });
                }
                let column = self.column()?;
                out.push(Primitive::In { value, column });
                return Ok(());
            }
            let op = match self.next().0 {
                Tok::Sym("<=") => SoftOp::Ge,
                Tok::Sym(">=") => SoftOp::Le,
                Tok::Sym("~=") => SoftOp::Approx,
                _ => {
                    self.pos -= 1;
                    return self.error("`<=`, `>=`, `~=` or `in`");
                }
            };
            self.reject_regex(&value, op, at)?;
            let column = self.column()?;
            out.push(Primitive::Compare {
                column: column.clone(),
                op,
                value,
            });
            let upper = match self.peek() {
                Tok::Sym("<=") if op == SoftOp::Ge => Some(SoftOp::Le),
                Tok::Sym(">=") if op == SoftOp::Le => Some(SoftOp::Ge),
                _ => None,
            };
            if let Some(op) = upper {
                self.next();
                let at = self.loc();
                let value = self.literal()?;
                self.reject_regex(&value, op, at)?;
                out.push(Primitive::Compare { column, op, value });
            }
            return Ok(());
        }
        let column = self.column()?;
        let op = match self.next().0 {
            Tok::Sym("<=") => SoftOp::Le,
            Tok::Sym(">=") => SoftOp::Ge,
            Tok::Sym("~=") | Tok::Sym("=") => SoftOp::Approx,
            _ => {
                self.pos -= 1;
                return self.error("`<=`, `>=` or `~=`");
            }
        };
        let at = self.loc();
        let value = self.literal()?;
        self.reject_regex(&value, op, at)?;
        out.push(Primitive::Compare { column, op, value });
        Ok(())
    }

    fn reject_regex(&self, value: &Literal, op: SoftOp, at: Location) -> PResult<()> {
        if value.is_regex() && op != SoftOp::Approx {
            return Err(ParseError::Syntax {
                at,
                message: "a regular expression can only be compared with `~=`".into(),
            });
        }
        Ok(())
    }
}

fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

fn check_regex(pattern: &str, at: Location) -> PResult<()> {
    Regex::new(pattern).map(|_| ()).map_err(|e| ParseError::InvalidRegex {
        at,
        pattern: pattern.to_string(),
        message: e.to_string(),
    })
}

/// Parses a sketch, resolving column and table constants against `catalog`.
pub fn parse_sketch(text: &str, catalog: &Catalog) -> Result<Sketch, ParseError> {
    let toks = lex(text)?;
    let mut kinds: HashMap<&str, HoleKind> = HashMap::new();
    for (tok, at) in &toks {
        if let Tok::Hole(name, kind) = tok {
            if let Some(prev) = kinds.insert(name, *kind) {
                if prev != *kind {
                    return Err(ParseError::HoleKindConflict {
                        at: *at,
                        name: name.clone(),
                    });
                }
            }
        }
    }
    let mut parser = Parser {
        toks,
        pos: 0,
        catalog,
    };
    parser.query()
}

/// Parses a hole-free query.
pub fn parse_completion(text: &str, catalog: &Catalog) -> Result<Completion, ParseError> {
    let sketch = parse_sketch(text, catalog)?;
    let holes = sketch.holes();
    match holes.first() {
        None => Ok(Completion::try_from(sketch).expect("no holes")),
        Some(h) => Err(ParseError::HoleAtForbiddenPosition {
            at: Location { line: 1, column: 1 },
            name: h.name.clone(),
        }),
    }
}
