//! Concrete relational semantics for hole-free queries and the approximate
//! column-set semantics used during scoring.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{write_csv, Catalog, ColumnName, Value, ValueType};
use crate::lang::{ColumnExpr, Literal, Predicate, RelOp, Sketch, TableExpr};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("column {column} is not available in {context}")]
    UnresolvedColumn { column: String, context: String },
    #[error("predicate compares {column} ({column_type}) with a {literal_type} literal")]
    TypeErrorInPredicate {
        column: String,
        column_type: ValueType,
        literal_type: String,
    },
    #[error("unknown table {0}")]
    UnresolvedTable(String),
    #[error("table {0} occurs twice in one join chain")]
    RepeatedTable(String),
    #[error("cannot evaluate hole {0}")]
    Hole(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultColumn {
    pub name: ColumnName,
    pub value_type: ValueType,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub columns: Vec<ResultColumn>,
    pub rows: Vec<Vec<Value>>,
}

/// Set of qualified columns, the approximate meaning of an expression.
pub type ColumnSet = BTreeSet<ColumnName>;

impl ResultTable {
    pub fn position(&self, name: &ColumnName) -> Option<usize> {
        self.columns.iter().position(|c| c.name == *name)
    }

    pub fn column_set(&self) -> ColumnSet {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_values<'a>(&'a self, name: &ColumnName) -> Option<impl Iterator<Item = &'a Value> + 'a> {
        let pos = self.position(name)?;
        Some(self.rows.iter().map(move |r| &r[pos]))
    }

    /// Header and rows with value-identical same-named columns collapsed,
    /// as a user would expect to see a join result.
    pub fn display(&self) -> (Vec<String>, Vec<Vec<Value>>) {
        let mut keep: Vec<usize> = Vec::new();
        for (i, col) in self.columns.iter().enumerate() {
            let duplicate = keep.iter().any(|&j| {
                self.columns[j].name.column == col.name.column && self.rows.iter().all(|r| r[i] == r[j])
            });
            if !duplicate {
                keep.push(i);
            }
        }
        let mut seen = HashMap::new();
        for &i in &keep {
            *seen.entry(&self.columns[i].name.column).or_insert(0usize) += 1;
        }
        let headers = keep
            .iter()
            .map(|&i| {
                let name = &self.columns[i].name;
                if seen[&name.column] > 1 {
                    name.to_string()
                } else {
                    name.column.clone()
                }
            })
            .collect();
        let rows = self
            .rows
            .iter()
            .map(|r| keep.iter().map(|&i| r[i].clone()).collect())
            .collect();
        (headers, rows)
    }

    /// CSV with qualified column headers.
    pub fn to_csv(&self) -> String {
        let headers: Vec<String> = self.columns.iter().map(|c| c.name.to_string()).collect();
        write_csv(&headers, &self.rows)
    }
}

fn base_table(name: &str, catalog: &Catalog) -> Result<ResultTable, EvalError> {
    let table = catalog
        .table_by_name(name)
        .map_err(|_| EvalError::UnresolvedTable(name.to_string()))?;
    Ok(ResultTable {
        columns: table
            .columns
            .iter()
            .map(|c| ResultColumn {
                name: c.qualified(),
                value_type: c.value_type,
            })
            .collect(),
        rows: table.rows.clone(),
    })
}

fn resolve(c: &ColumnExpr) -> Result<&ColumnName, EvalError> {
    match c {
        ColumnExpr::Const(name) => Ok(name),
        ColumnExpr::Hole(name) => Err(EvalError::Hole(name.clone())),
    }
}

/// Evaluates a hole-free join chain. Soft constraints are ignored.
pub fn evaluate_table(expr: &TableExpr, catalog: &Catalog) -> Result<ResultTable, EvalError> {
    let tables = expr.tables();
    let mut seen = HashSet::new();
    for t in &tables {
        if !seen.insert(*t) {
            return Err(EvalError::RepeatedTable(t.to_string()));
        }
    }
    eval_chain(expr, catalog)
}

fn eval_chain(expr: &TableExpr, catalog: &Catalog) -> Result<ResultTable, EvalError> {
    match expr {
        TableExpr::Hole(name) => Err(EvalError::Hole(name.clone())),
        TableExpr::Base(name) => base_table(name, catalog),
        TableExpr::Join {
            left,
            left_column,
            right_column,
            right,
        } => {
            let lhs = base_table(left, catalog)?;
            let rhs = eval_chain(&right.expr, catalog)?;
            let lc = resolve(left_column)?;
            let rc = resolve(right_column)?;
            let li = lhs.position(lc).ok_or_else(|| EvalError::UnresolvedColumn {
                column: lc.to_string(),
                context: left.clone(),
            })?;
            let ri = rhs.position(rc).ok_or_else(|| EvalError::UnresolvedColumn {
                column: rc.to_string(),
                context: "the right join operand".to_string(),
            })?;
            let mut index: HashMap<&Value, Vec<usize>> = HashMap::new();
            for (k, row) in rhs.rows.iter().enumerate() {
                index.entry(&row[ri]).or_default().push(k);
            }
            let mut rows = Vec::new();
            for lrow in &lhs.rows {
                if let Some(matches) = index.get(&lrow[li]) {
                    for &k in matches {
                        let mut row = lrow.clone();
                        row.extend(rhs.rows[k].iter().cloned());
                        rows.push(row);
                    }
                }
            }
            let mut columns = lhs.columns;
            columns.extend(rhs.columns);
            Ok(ResultTable { columns, rows })
        }
    }
}

fn literal_value(l: &Literal) -> Option<Value> {
    match l {
        Literal::Int(v) => Some(Value::Int(*v)),
        Literal::Float(v) => Some(Value::Float(*v)),
        Literal::Str(s) => Some(Value::Str(s.clone())),
        Literal::Regex(_) => None,
    }
}

enum CompiledPred {
    True,
    Compare(usize, RelOp, Value),
    And(Box<CompiledPred>, Box<CompiledPred>),
    Or(Box<CompiledPred>, Box<CompiledPred>),
}

impl CompiledPred {
    fn holds(&self, row: &[Value]) -> bool {
        match self {
            CompiledPred::True => true,
            CompiledPred::Compare(i, op, v) => {
                let ord = row[*i].compare(v).expect("types checked at compile time");
                match op {
                    RelOp::Lt => ord.is_lt(),
                    RelOp::Le => ord.is_le(),
                    RelOp::Eq => ord.is_eq(),
                    RelOp::Ge => ord.is_ge(),
                    RelOp::Gt => ord.is_gt(),
                }
            }
            CompiledPred::And(a, b) => a.holds(row) && b.holds(row),
            CompiledPred::Or(a, b) => a.holds(row) || b.holds(row),
        }
    }
}

fn compile_pred(p: &Predicate, t: &ResultTable) -> Result<CompiledPred, EvalError> {
    Ok(match p {
        Predicate::True => CompiledPred::True,
        Predicate::Compare { column, op, value } => {
            let name = resolve(column)?;
            let i = t.position(name).ok_or_else(|| EvalError::UnresolvedColumn {
                column: name.to_string(),
                context: "the selection input".to_string(),
            })?;
            let ty = t.columns[i].value_type;
            match literal_value(value) {
                Some(v) if v.value_type() == ty => CompiledPred::Compare(i, *op, v),
                _ => {
                    return Err(EvalError::TypeErrorInPredicate {
                        column: name.to_string(),
                        column_type: ty,
                        literal_type: match value {
                            Literal::Regex(_) => "regex".to_string(),
                            other => other.value_type().to_string(),
                        },
                    })
                }
            }
        }
        Predicate::And(a, b) => CompiledPred::And(Box::new(compile_pred(a, t)?), Box::new(compile_pred(b, t)?)),
        Predicate::Or(a, b) => CompiledPred::Or(Box::new(compile_pred(a, t)?), Box::new(compile_pred(b, t)?)),
    })
}

/// `σ_ψ(t)`.
pub fn select(t: ResultTable, p: &Predicate) -> Result<ResultTable, EvalError> {
    let compiled = compile_pred(p, &t)?;
    let rows = t.rows.into_iter().filter(|r| compiled.holds(r)).collect();
    Ok(ResultTable {
        columns: t.columns,
        rows,
    })
}

/// `Π_cols(t)`, keeping the listed order.
pub fn project(t: &ResultTable, cols: &[ColumnExpr]) -> Result<ResultTable, EvalError> {
    let mut idx = Vec::with_capacity(cols.len());
    for c in cols {
        let name = resolve(c)?;
        idx.push(t.position(name).ok_or_else(|| EvalError::UnresolvedColumn {
            column: name.to_string(),
            context: "the projection input".to_string(),
        })?);
    }
    Ok(ResultTable {
        columns: idx.iter().map(|&i| t.columns[i].clone()).collect(),
        rows: t.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
    })
}

/// The selection result before projection.
pub fn evaluate_selection(q: &Sketch, catalog: &Catalog) -> Result<ResultTable, EvalError> {
    let t = evaluate_table(&q.select.source.expr, catalog)?;
    select(t, &q.select.predicate)
}

/// Evaluates a query; soft constraints do not affect the result.
pub fn evaluate(q: &Sketch, catalog: &Catalog) -> Result<ResultTable, EvalError> {
    let t = evaluate_selection(q, catalog)?;
    project(&t, &q.project)
}

/// Columns of a table expression; a hole contributes nothing.
pub fn approx_columns(expr: &TableExpr, catalog: &Catalog) -> Result<ColumnSet, EvalError> {
    let mut out = ColumnSet::new();
    let mut add = |name: &str| -> Result<(), EvalError> {
        let table = catalog
            .table_by_name(name)
            .map_err(|_| EvalError::UnresolvedTable(name.to_string()))?;
        out.extend(table.columns.iter().map(|c| c.qualified()));
        Ok(())
    };
    for t in expr.tables() {
        add(t)?;
    }
    Ok(out)
}

/// Columns of `σ_ψ(I)`, the same as those of `I`.
pub fn approx_select_columns(q: &Sketch, catalog: &Catalog) -> Result<ColumnSet, EvalError> {
    approx_columns(&q.select.source.expr, catalog)
}

/// Columns of the whole query: the projected constants.
pub fn approx_query_columns(q: &Sketch) -> ColumnSet {
    q.project.iter().filter_map(|c| c.as_const().cloned()).collect()
}
