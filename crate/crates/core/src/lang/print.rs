use std::fmt::Write;

use super::ast::*;

pub fn print_column(c: &ColumnExpr) -> String {
    match c {
        ColumnExpr::Hole(name) => format!("??{name}:column"),
        ColumnExpr::Const(name) => name.to_string(),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for ch in s.chars() {
        match ch {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(ch),
        }
    }
    out.push('"');
    out
}

fn quote_raw(s: &str) -> String {
    format!("r\"{}\"", s.replace('"', "\\\""))
}

pub fn print_literal(l: &Literal) -> String {
    match l {
        Literal::Int(v) => v.to_string(),
        Literal::Float(v) => {
            // Debug formatting always keeps a `.` or exponent, so floats stay floats.
            format!("{v:?}")
        }
        Literal::Str(s) => quote(s),
        Literal::Regex(s) => quote_raw(s),
    }
}

pub fn print_predicate(p: &Predicate) -> String {
    fn child(p: &Predicate) -> String {
        match p {
            Predicate::And(..) | Predicate::Or(..) => format!("({})", print_predicate(p)),
            _ => print_predicate(p),
        }
    }
    match p {
        Predicate::True => "true".to_string(),
        Predicate::Compare { column, op, value } => {
            format!("{} {} {}", print_column(column), op.symbol(), print_literal(value))
        }
        Predicate::And(l, r) => format!("{} AND {}", child(l), child(r)),
        Predicate::Or(l, r) => format!("{} OR {}", child(l), child(r)),
    }
}

pub fn print_primitive(p: &Primitive) -> String {
    match p {
        Primitive::In { value, column } => {
            format!("({} in {})", print_literal(value), print_column(column))
        }
        Primitive::Contains { column, pattern } => {
            format!("(contains {} {})", print_column(column), quote(pattern))
        }
        Primitive::Compare { column, op, value } => {
            format!("({} {} {})", print_column(column), op.symbol(), print_literal(value))
        }
    }
}

pub fn print_soft(s: &SoftConstraint) -> String {
    if s.is_true() {
        return "{true}".to_string();
    }
    let parts: Vec<String> = s.conjuncts.iter().map(print_primitive).collect();
    format!("{{{}}}", parts.join(" AND "))
}

fn print_table_expr(e: &TableExpr, out: &mut String) {
    match e {
        TableExpr::Hole(name) => {
            let _ = write!(out, "??{name}:table");
        }
        TableExpr::Base(t) => out.push_str(t),
        TableExpr::Join {
            left,
            left_column,
            right_column,
            right,
        } => {
            let _ = write!(out, "{left} INNER-JOIN ");
            let wrap = !right.soft.is_true() || matches!(right.expr, TableExpr::Join { .. });
            if wrap {
                out.push('(');
                print_node(right, out);
                out.push(')');
            } else {
                print_table_expr(&right.expr, out);
            }
            let _ = write!(out, " ON {} = {}", print_column(left_column), print_column(right_column));
        }
    }
}

fn print_node(node: &TableNode, out: &mut String) {
    print_table_expr(&node.expr, out);
    if !node.soft.is_true() {
        out.push(' ');
        out.push_str(&print_soft(&node.soft));
    }
}

/// Renders a table expression in surface syntax.
pub fn print_table(e: &TableExpr) -> String {
    let mut out = String::new();
    print_table_expr(e, &mut out);
    out
}

/// Canonical surface form; columns are always qualified.
pub fn print_sketch(s: &Sketch) -> String {
    let cols: Vec<String> = s.project.iter().map(print_column).collect();
    let mut out = format!("SELECT {}\nFROM (", cols.join(", "));
    print_node(&s.select.source, &mut out);
    out.push(')');
    let has_where = s.select.predicate != Predicate::True || !s.select.soft.is_true();
    if has_where {
        let _ = write!(out, "\nWHERE {}", print_predicate(&s.select.predicate));
        if !s.select.soft.is_true() || !s.soft.is_true() {
            let _ = write!(out, " {}", print_soft(&s.select.soft));
        }
    }
    if !s.soft.is_true() {
        let _ = write!(out, " {}", print_soft(&s.soft));
    }
    out
}
