use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::*;
use super::print::{print_column, print_table};
use crate::catalog::ColumnName;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum RefineError {
    #[error("the sketch has no hole named {0}")]
    NoSuchHole(String),
    #[error("hole {name} is a {actual} hole, not a {expected} hole")]
    KindMismatch {
        name: String,
        expected: HoleKind,
        actual: HoleKind,
    },
    #[error("fresh hole name {0} is already used in the sketch")]
    FreshNameClash(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fill {
    Column(ColumnName),
    Table(TableExpr),
}

/// The productions that fill every occurrence of one hole name.
///
/// `linked` lists column holes decided together with a table fill: the join
/// columns of the join whose right operand is the filled table hole.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductionSeq {
    pub target: String,
    pub kind: HoleKind,
    pub fill: Fill,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub linked: Vec<(String, ColumnName)>,
}

impl ProductionSeq {
    pub fn column(target: &str, column: ColumnName) -> Self {
        ProductionSeq {
            target: target.to_string(),
            kind: HoleKind::Column,
            fill: Fill::Column(column),
            linked: Vec::new(),
        }
    }

    pub fn table(target: &str, expr: TableExpr) -> Self {
        ProductionSeq {
            target: target.to_string(),
            kind: HoleKind::Table,
            fill: Fill::Table(expr),
            linked: Vec::new(),
        }
    }

    /// One-line rendering, e.g. `??t:table => authors INNER-JOIN ??t_new0:table ON ...`.
    pub fn summary(&self) -> String {
        let mut out = match &self.fill {
            Fill::Column(c) => format!("??{}:column => {c}", self.target),
            Fill::Table(e) => format!("??{}:table => {}", self.target, print_table(e)),
        };
        for (name, col) in &self.linked {
            out.push_str(&format!("; ??{name}:column => {col}"));
        }
        out
    }

    /// Grammar productions applied at the hole, in pre-order.
    pub fn productions(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.fill {
            Fill::Column(c) => out.push(format!("C -> {c}")),
            Fill::Table(e) => table_productions(e, &mut out),
        }
        for (_, col) in &self.linked {
            out.push(format!("C -> {col}"));
        }
        out
    }

    /// Hole names introduced by the fill.
    pub fn fresh_holes(&self) -> Vec<(String, HoleKind)> {
        let mut out = Vec::new();
        if let Fill::Table(e) = &self.fill {
            collect_holes(e, &mut out);
        }
        out
    }
}

fn collect_holes(e: &TableExpr, out: &mut Vec<(String, HoleKind)>) {
    match e {
        TableExpr::Hole(n) => out.push((n.clone(), HoleKind::Table)),
        TableExpr::Base(_) => {}
        TableExpr::Join {
            left_column,
            right_column,
            right,
            ..
        } => {
            for c in [left_column, right_column] {
                if let ColumnExpr::Hole(n) = c {
                    out.push((n.clone(), HoleKind::Column));
                }
            }
            collect_holes(&right.expr, out);
        }
    }
}

fn table_productions(e: &TableExpr, out: &mut Vec<String>) {
    match e {
        TableExpr::Hole(n) => out.push(format!("I -> ??{n}:table")),
        TableExpr::Base(t) => {
            out.push("I -> T {Φ}".to_string());
            out.push(format!("T -> {t}"));
            out.push("Φ -> true".to_string());
        }
        TableExpr::Join {
            left,
            left_column,
            right_column,
            right,
        } => {
            out.push("I -> T ⋈_{C,C} I {Φ}".to_string());
            out.push(format!("T -> {left}"));
            for c in [left_column, right_column] {
                match c {
                    ColumnExpr::Const(_) => out.push(format!("C -> {}", print_column(c))),
                    ColumnExpr::Hole(n) => out.push(format!("C -> ??{n}:column")),
                }
            }
            table_productions(&right.expr, out);
            out.push("Φ -> true".to_string());
        }
    }
}

/// Smallest `prefix{k}` not in `used`; the result is added to `used`.
pub fn fresh_name(prefix: &str, used: &mut HashSet<String>) -> String {
    let mut k = 0;
    loop {
        let name = format!("{prefix}{k}");
        if used.insert(name.clone()) {
            return name;
        }
        k += 1;
    }
}

pub fn used_names(p: &Sketch) -> HashSet<String> {
    p.holes().into_iter().map(|h| h.name).collect()
}

/// Fills every hole named `seq.target` (and its linked holes).
pub fn apply_refinement(p: &Sketch, seq: &ProductionSeq) -> Result<Sketch, RefineError> {
    let holes = p.holes();
    let find = |name: &str| holes.iter().find(|h| h.name == name);
    let target = find(&seq.target).ok_or_else(|| RefineError::NoSuchHole(seq.target.clone()))?;
    if target.kind != seq.kind {
        return Err(RefineError::KindMismatch {
            name: seq.target.clone(),
            expected: seq.kind,
            actual: target.kind,
        });
    }
    let fill_kind = match seq.fill {
        Fill::Column(_) => HoleKind::Column,
        Fill::Table(_) => HoleKind::Table,
    };
    if fill_kind != seq.kind {
        return Err(RefineError::KindMismatch {
            name: seq.target.clone(),
            expected: fill_kind,
            actual: seq.kind,
        });
    }
    for (name, _) in &seq.linked {
        match find(name) {
            None => return Err(RefineError::NoSuchHole(name.clone())),
            Some(h) if h.kind != HoleKind::Column => {
                return Err(RefineError::KindMismatch {
                    name: name.clone(),
                    expected: HoleKind::Column,
                    actual: h.kind,
                })
            }
            Some(_) => {}
        }
    }
    let mut seen = HashSet::new();
    for (name, _) in seq.fresh_holes() {
        if find(&name).is_some() || !seen.insert(name.clone()) {
            return Err(RefineError::FreshNameClash(name));
        }
    }

    let mut out = p.clone();
    match &seq.fill {
        Fill::Column(col) => fill_column(&mut out, &seq.target, col),
        Fill::Table(expr) => {
            let node = out.tail_node_mut();
            debug_assert_eq!(node.expr, TableExpr::Hole(seq.target.clone()));
            node.expr = expr.clone();
        }
    }
    for (name, col) in &seq.linked {
        fill_column(&mut out, name, col);
    }
    Ok(out)
}

fn fill_column(p: &mut Sketch, name: &str, col: &ColumnName) {
    p.map_columns(&mut |c| {
        if matches!(c, ColumnExpr::Hole(n) if n == name) {
            *c = ColumnExpr::Const(col.clone());
        }
    });
}
