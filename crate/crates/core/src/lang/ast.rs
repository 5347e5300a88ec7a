use std::fmt;
use std::hash::{Hash, Hasher};
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnName, ValueType};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HoleKind {
    Table,
    Column,
}

impl fmt::Display for HoleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HoleKind::Table => "table",
            HoleKind::Column => "column",
        })
    }
}

/// A C position: either a named hole or a column constant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ColumnExpr {
    Hole(String),
    Const(ColumnName),
}

impl ColumnExpr {
    pub fn as_const(&self) -> Option<&ColumnName> {
        match self {
            ColumnExpr::Const(c) => Some(c),
            ColumnExpr::Hole(_) => None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Literal {
    Int(i64),
    Float(f64),
    Str(String),
    Regex(String),
}

impl Literal {
    /// Cell type this literal compares against; regexes match strings.
    pub fn value_type(&self) -> ValueType {
        match self {
            Literal::Int(_) => ValueType::Int,
            Literal::Float(_) => ValueType::Float,
            Literal::Str(_) | Literal::Regex(_) => ValueType::String,
        }
    }

    pub fn is_regex(&self) -> bool {
        matches!(self, Literal::Regex(_))
    }

    fn key(&self) -> (u8, i64, u64, &str) {
        match self {
            Literal::Int(v) => (0, *v, 0, ""),
            Literal::Float(v) => (1, 0, v.to_bits(), ""),
            Literal::Str(s) => (2, 0, 0, s),
            Literal::Regex(s) => (3, 0, 0, s),
        }
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Literal {}

impl Hash for Literal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.key().hash(state)
    }
}

/// Relational operator R of a hard predicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelOp {
    Lt,
    Le,
    Eq,
    Ge,
    Gt,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Eq => "=",
            RelOp::Ge => ">=",
            RelOp::Gt => ">",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Predicate {
    True,
    Compare {
        column: ColumnExpr,
        op: RelOp,
        value: Literal,
    },
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

/// Soft comparison U: ≲, ≃, ≳.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SoftOp {
    Le,
    Approx,
    Ge,
}

impl SoftOp {
    pub fn symbol(self) -> &'static str {
        match self {
            SoftOp::Le => "<=",
            SoftOp::Approx => "~=",
            SoftOp::Ge => ">=",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Primitive {
    In { value: Literal, column: ColumnExpr },
    Contains { column: ColumnExpr, pattern: String },
    Compare {
        column: ColumnExpr,
        op: SoftOp,
        value: Literal,
    },
}

impl Primitive {
    pub fn column(&self) -> &ColumnExpr {
        match self {
            Primitive::In { column, .. }
            | Primitive::Contains { column, .. }
            | Primitive::Compare { column, .. } => column,
        }
    }

    pub fn column_mut(&mut self) -> &mut ColumnExpr {
        match self {
            Primitive::In { column, .. }
            | Primitive::Contains { column, .. }
            | Primitive::Compare { column, .. } => column,
        }
    }
}

/// Conjunction of soft primitives; empty means `true`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SoftConstraint {
    pub conjuncts: Vec<Primitive>,
}

impl SoftConstraint {
    pub fn is_true(&self) -> bool {
        self.conjuncts.is_empty()
    }
}

/// An I position together with its attached soft constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TableNode {
    pub expr: TableExpr,
    pub soft: SoftConstraint,
}

impl TableNode {
    pub fn new(expr: TableExpr) -> Self {
        TableNode {
            expr,
            soft: SoftConstraint::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TableExpr {
    Hole(String),
    Base(String),
    /// `left ⋈_{left_column, right_column} right`
    Join {
        left: String,
        left_column: ColumnExpr,
        right_column: ColumnExpr,
        right: Box<TableNode>,
    },
}

impl TableExpr {
    pub fn join(left: &str, left_column: ColumnExpr, right_column: ColumnExpr, right: TableExpr) -> Self {
        TableExpr::Join {
            left: left.to_string(),
            left_column,
            right_column,
            right: Box::new(TableNode::new(right)),
        }
    }

    /// Table constants of the chain, outermost first.
    pub fn tables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                TableExpr::Hole(_) => break,
                TableExpr::Base(t) => {
                    out.push(t.as_str());
                    break;
                }
                TableExpr::Join { left, right, .. } => {
                    out.push(left.as_str());
                    cur = &right.expr;
                }
            }
        }
        out
    }

    pub fn head_table(&self) -> Option<&str> {
        match self {
            TableExpr::Hole(_) => None,
            TableExpr::Base(t) => Some(t),
            TableExpr::Join { left, .. } => Some(left),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectNode {
    pub predicate: Predicate,
    pub source: TableNode,
    pub soft: SoftConstraint,
}

/// A query derivation `Π_{cols}(σ_ψ(I){Φ}){Φ}`, possibly with holes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sketch {
    pub project: Vec<ColumnExpr>,
    pub select: SelectNode,
    pub soft: SoftConstraint,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HoleRef {
    pub name: String,
    pub kind: HoleKind,
    /// Pre-order index of the hole node.
    pub position: usize,
}

// Node counts. A column constant is C plus its terminal, a hole is the bare
// nonterminal leaf; a base table is I, T and the terminal.
const COLUMN_HOLE: usize = 1;
const COLUMN_CONST: usize = 2;

/// Size of a hole-free chain of `len` tables replacing a table hole's
/// expression, with both join columns of every link constant.
pub fn chain_expr_size(len: usize) -> usize {
    debug_assert!(len >= 1);
    3 + 9 * (len - 1)
}

struct Walker<'a> {
    counter: usize,
    holes: Option<&'a mut Vec<HoleRef>>,
}

impl Walker<'_> {
    fn bump(&mut self, n: usize) {
        self.counter += n;
    }

    fn column(&mut self, c: &ColumnExpr) {
        match c {
            ColumnExpr::Hole(name) => {
                self.hole(name, HoleKind::Column);
                self.bump(COLUMN_HOLE);
            }
            ColumnExpr::Const(_) => self.bump(COLUMN_CONST),
        }
    }

    fn hole(&mut self, name: &str, kind: HoleKind) {
        let position = self.counter;
        if let Some(out) = self.holes.as_deref_mut() {
            out.push(HoleRef {
                name: name.to_string(),
                kind,
                position,
            });
        }
    }

    fn predicate(&mut self, p: &Predicate) {
        self.bump(1);
        match p {
            Predicate::True => {}
            Predicate::Compare { column, .. } => {
                self.column(column);
                self.bump(2);
            }
            Predicate::And(l, r) | Predicate::Or(l, r) => {
                self.predicate(l);
                self.predicate(r);
            }
        }
    }

    fn soft(&mut self, s: &SoftConstraint) {
        if s.conjuncts.is_empty() {
            self.bump(1);
            return;
        }
        self.bump(s.conjuncts.len() - 1);
        for prim in &s.conjuncts {
            self.bump(1);
            match prim {
                Primitive::In { column, .. } => {
                    self.bump(1);
                    self.column(column);
                }
                Primitive::Contains { column, .. } => {
                    self.column(column);
                    self.bump(1);
                }
                Primitive::Compare { column, .. } => {
                    self.column(column);
                    self.bump(2);
                }
            }
        }
    }

    fn table_node(&mut self, node: &TableNode) {
        match &node.expr {
            TableExpr::Hole(name) => {
                self.hole(name, HoleKind::Table);
                self.bump(1);
            }
            TableExpr::Base(_) => self.bump(3),
            TableExpr::Join {
                left_column,
                right_column,
                right,
                ..
            } => {
                self.bump(4);
                self.column(left_column);
                self.column(right_column);
                self.table_node(right);
            }
        }
        self.soft(&node.soft);
    }

    fn sketch(&mut self, s: &Sketch) {
        self.bump(1);
        for c in &s.project {
            self.column(c);
        }
        self.bump(1);
        self.predicate(&s.select.predicate);
        self.table_node(&s.select.source);
        self.soft(&s.select.soft);
        self.soft(&s.soft);
    }
}

impl Sketch {
    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        let mut w = Walker {
            counter: 0,
            holes: None,
        };
        w.sketch(self);
        w.counter
    }

    /// Every hole occurrence in pre-order.
    pub fn holes(&self) -> Vec<HoleRef> {
        let mut out = Vec::new();
        let mut w = Walker {
            counter: 0,
            holes: Some(&mut out),
        };
        w.sketch(self);
        out
    }

    /// Distinct hole names in first-occurrence order.
    pub fn hole_names(&self) -> Vec<(String, HoleKind)> {
        let mut out: Vec<(String, HoleKind)> = Vec::new();
        for h in self.holes() {
            if !out.iter().any(|(n, _)| *n == h.name) {
                out.push((h.name, h.kind));
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.holes().is_empty()
    }

    /// Visits every column position.
    pub fn for_each_column<'a>(&'a self, mut f: impl FnMut(&'a ColumnExpr)) {
        for c in &self.project {
            f(c);
        }
        visit_pred_columns(&self.select.predicate, &mut f);
        let mut node = &self.select.source;
        loop {
            for p in &node.soft.conjuncts {
                f(p.column());
            }
            match &node.expr {
                TableExpr::Join {
                    left_column,
                    right_column,
                    right,
                    ..
                } => {
                    f(left_column);
                    f(right_column);
                    node = right;
                }
                _ => break,
            }
        }
        for p in self.select.soft.conjuncts.iter().chain(&self.soft.conjuncts) {
            f(p.column());
        }
    }

    /// Rewrites every column position.
    pub fn map_columns(&mut self, f: &mut impl FnMut(&mut ColumnExpr)) {
        for c in &mut self.project {
            f(c);
        }
        map_pred_columns(&mut self.select.predicate, f);
        let mut node = &mut self.select.source;
        loop {
            for p in &mut node.soft.conjuncts {
                f(p.column_mut());
            }
            match &mut node.expr {
                TableExpr::Join {
                    left_column,
                    right_column,
                    right,
                    ..
                } => {
                    f(left_column);
                    f(right_column);
                    node = right;
                }
                _ => break,
            }
        }
        for p in self
            .select
            .soft
            .conjuncts
            .iter_mut()
            .chain(self.soft.conjuncts.iter_mut())
        {
            f(p.column_mut());
        }
    }

    /// The innermost table node of the join chain.
    pub fn tail_node(&self) -> &TableNode {
        let mut node = &self.select.source;
        while let TableExpr::Join { right, .. } = &node.expr {
            node = right;
        }
        node
    }

    pub fn tail_node_mut(&mut self) -> &mut TableNode {
        let mut node = &mut self.select.source;
        while matches!(node.expr, TableExpr::Join { .. }) {
            let TableExpr::Join { right, .. } = &mut node.expr else {
                unreachable!()
            };
            node = right;
        }
        node
    }

    /// Removes every soft constraint.
    pub fn strip_soft(&self) -> Sketch {
        let mut out = self.clone();
        out.soft = SoftConstraint::default();
        out.select.soft = SoftConstraint::default();
        let mut node = &mut out.select.source;
        loop {
            node.soft = SoftConstraint::default();
            match &mut node.expr {
                TableExpr::Join { right, .. } => node = right,
                _ => break,
            }
        }
        out
    }
}

fn visit_pred_columns<'a>(p: &'a Predicate, f: &mut impl FnMut(&'a ColumnExpr)) {
    match p {
        Predicate::True => {}
        Predicate::Compare { column, .. } => f(column),
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            visit_pred_columns(l, f);
            visit_pred_columns(r, f);
        }
    }
}

fn map_pred_columns(p: &mut Predicate, f: &mut impl FnMut(&mut ColumnExpr)) {
    match p {
        Predicate::True => {}
        Predicate::Compare { column, .. } => f(column),
        Predicate::And(l, r) | Predicate::Or(l, r) => {
            map_pred_columns(l, f);
            map_pred_columns(r, f);
        }
    }
}

/// A hole-free sketch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Sketch", into = "Sketch")]
pub struct Completion(Sketch);

#[derive(Debug, thiserror::Error)]
#[error("sketch still has {0} hole(s)")]
pub struct NotComplete(pub usize);

impl TryFrom<Sketch> for Completion {
    type Error = NotComplete;

    fn try_from(s: Sketch) -> Result<Self, Self::Error> {
        match s.holes().len() {
            0 => Ok(Completion(s)),
            n => Err(NotComplete(n)),
        }
    }
}

impl From<Completion> for Sketch {
    fn from(c: Completion) -> Sketch {
        c.0
    }
}

impl Completion {
    pub fn into_sketch(self) -> Sketch {
        self.0
    }

    pub fn sketch(&self) -> &Sketch {
        &self.0
    }
}

impl Deref for Completion {
    type Target = Sketch;

    fn deref(&self) -> &Sketch {
        &self.0
    }
}
