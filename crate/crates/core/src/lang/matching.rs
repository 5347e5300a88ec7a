//! The derivation relation `P ⇒* P'` by structural alignment.

use std::collections::HashMap;

use super::ast::*;

#[derive(Clone, Debug, PartialEq)]
enum Binding<'a> {
    Column(&'a ColumnExpr),
    Table(&'a TableExpr),
}

struct Aligner<'a> {
    bindings: HashMap<&'a str, Binding<'a>>,
}

impl<'a> Aligner<'a> {
    fn bind(&mut self, name: &'a str, b: Binding<'a>) -> bool {
        match self.bindings.get(name) {
            Some(prev) => *prev == b,
            None => {
                self.bindings.insert(name, b);
                true
            }
        }
    }

    fn column(&mut self, g: &'a ColumnExpr, s: &'a ColumnExpr) -> bool {
        match g {
            ColumnExpr::Hole(name) => self.bind(name, Binding::Column(s)),
            ColumnExpr::Const(_) => g == s,
        }
    }

    fn predicate(&mut self, g: &'a Predicate, s: &'a Predicate) -> bool {
        match (g, s) {
            (Predicate::True, Predicate::True) => true,
            (
                Predicate::Compare { column, op, value },
                Predicate::Compare {
                    column: c2,
                    op: o2,
                    value: v2,
                },
            ) => op == o2 && value == v2 && self.column(column, c2),
            (Predicate::And(a, b), Predicate::And(c, d)) | (Predicate::Or(a, b), Predicate::Or(c, d)) => {
                self.predicate(a, c) && self.predicate(b, d)
            }
            _ => false,
        }
    }

    fn soft(&mut self, g: &'a SoftConstraint, s: &'a SoftConstraint) -> bool {
        g.conjuncts.len() == s.conjuncts.len()
            && g.conjuncts.iter().zip(&s.conjuncts).all(|(a, b)| match (a, b) {
                (Primitive::In { value, column }, Primitive::In { value: v2, column: c2 }) => {
                    value == v2 && self.column(column, c2)
                }
                (
                    Primitive::Contains { column, pattern },
                    Primitive::Contains {
                        column: c2,
                        pattern: p2,
                    },
                ) => pattern == p2 && self.column(column, c2),
                (
                    Primitive::Compare { column, op, value },
                    Primitive::Compare {
                        column: c2,
                        op: o2,
                        value: v2,
                    },
                ) => op == o2 && value == v2 && self.column(column, c2),
                _ => false,
            })
    }

    fn node(&mut self, g: &'a TableNode, s: &'a TableNode) -> bool {
        self.soft(&g.soft, &s.soft) && self.table(&g.expr, &s.expr)
    }

    fn table(&mut self, g: &'a TableExpr, s: &'a TableExpr) -> bool {
        match (g, s) {
            (TableExpr::Hole(name), _) => self.bind(name, Binding::Table(s)),
            (TableExpr::Base(a), TableExpr::Base(b)) => a == b,
            (
                TableExpr::Join {
                    left,
                    left_column,
                    right_column,
                    right,
                },
                TableExpr::Join {
                    left: l2,
                    left_column: lc2,
                    right_column: rc2,
                    right: r2,
                },
            ) => {
                left == l2
                    && self.column(left_column, lc2)
                    && self.column(right_column, rc2)
                    && self.node(right, r2)
            }
            _ => false,
        }
    }

    fn sketch(&mut self, g: &'a Sketch, s: &'a Sketch) -> bool {
        g.project.len() == s.project.len()
            && g.project.iter().zip(&s.project).all(|(a, b)| self.column(a, b))
            && self.predicate(&g.select.predicate, &s.select.predicate)
            && self.node(&g.select.source, &s.select.source)
            && self.soft(&g.select.soft, &s.select.soft)
            && self.soft(&g.soft, &s.soft)
    }
}

/// True iff `specific` is obtained from `general` by filling holes, with
/// same-named holes filled identically. `specific` may itself contain holes.
pub fn derives(general: &Sketch, specific: &Sketch) -> bool {
    Aligner {
        bindings: HashMap::new(),
    }
    .sketch(general, specific)
}

/// `q ⇒* c` for a completion `c`.
pub fn matches(q: &Sketch, c: &Completion) -> bool {
    derives(q, c)
}
