//! Soft-constraint semantics and completion scoring.
//!
//! Primitive scores: `true` is 0, `x in c` and `contains(c, r)` are
//! indicators, `c u x` is the fraction of cells of `c` related to `x`.
//! Conjunctions add. A completion's score sums its primitives, looked up in a
//! table precomputed on each column's base table, plus `lambda * size`. Any
//! reference to a column outside the expression it governs scores `-inf`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::catalog::{hex, Catalog, ColumnId, TableId, Value, ValueType};
use crate::eval::{evaluate_selection, evaluate_table, project, ResultTable};
use crate::lang::{print_sketch, ColumnExpr, Literal, Predicate, Primitive, Sketch, SoftConstraint, SoftOp, TableExpr};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SoftError {
    #[error("column {0} is not in the table")]
    ColumnAbsent(String),
    #[error("primitive cannot apply to {column} of type {value_type}")]
    TypeIncompatible { column: String, value_type: ValueType },
    #[error("column {0} is empty")]
    EmptyColumn(String),
    #[error("primitive still mentions a hole")]
    Hole,
}

/// A primitive with its column abstracted away.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrimShape {
    In(Literal),
    Contains(String),
    Compare(SoftOp, Literal),
}

impl PrimShape {
    pub fn of(p: &Primitive) -> PrimShape {
        match p {
            Primitive::In { value, .. } => PrimShape::In(value.clone()),
            Primitive::Contains { pattern, .. } => PrimShape::Contains(pattern.clone()),
            Primitive::Compare { op, value, .. } => PrimShape::Compare(*op, value.clone()),
        }
    }

    /// Whether the primitive is well-typed on a column of type `ty`.
    pub fn compatible(&self, ty: ValueType) -> bool {
        match self {
            PrimShape::In(v) => !v.is_regex() && v.value_type() == ty,
            PrimShape::Contains(_) => ty == ValueType::String,
            PrimShape::Compare(op, v) => {
                if v.is_regex() {
                    *op == SoftOp::Approx && ty == ValueType::String
                } else {
                    v.value_type() == ty
                }
            }
        }
    }

    fn matcher(&self) -> Matcher {
        match self {
            PrimShape::In(v) => Matcher::Indicator(Test::Equals(literal_value(v))),
            PrimShape::Contains(r) => Matcher::Indicator(Test::Regex(anchored(r))),
            PrimShape::Compare(op, Literal::Regex(r)) => {
                debug_assert_eq!(*op, SoftOp::Approx);
                Matcher::Fraction(Test::Regex(anchored(r)))
            }
            PrimShape::Compare(op, v) => {
                let v = literal_value(v);
                Matcher::Fraction(match op {
                    SoftOp::Le => Test::AtMost(v),
                    SoftOp::Approx => Test::Equals(v),
                    SoftOp::Ge => Test::AtLeast(v),
                })
            }
        }
    }

    /// Scores the shape on the cells of one column.
    pub fn score_cells<'a, S: Scalar>(
        &self,
        cells: impl Iterator<Item = &'a Value>,
    ) -> Result<S, ()> {
        self.matcher().score(cells)
    }
}

fn anchored(r: &str) -> Regex {
    Regex::new(&format!("^(?:{r})$")).expect("patterns are validated at parse time")
}

fn literal_value(l: &Literal) -> Value {
    match l {
        Literal::Int(v) => Value::Int(*v),
        Literal::Float(v) => Value::Float(*v),
        Literal::Str(s) | Literal::Regex(s) => Value::Str(s.clone()),
    }
}

enum Test {
    Equals(Value),
    AtMost(Value),
    AtLeast(Value),
    Regex(Regex),
}

impl Test {
    fn check(&self, cell: &Value) -> bool {
        match self {
            Test::Equals(v) => cell == v,
            Test::AtMost(v) => cell.compare(v).is_some_and(|o| o.is_le()),
            Test::AtLeast(v) => cell.compare(v).is_some_and(|o| o.is_ge()),
            Test::Regex(r) => cell.as_str().is_some_and(|s| r.is_match(s)),
        }
    }
}

enum Matcher {
    Indicator(Test),
    Fraction(Test),
}

impl Matcher {
    /// `Err(())` means an empty column under a fraction primitive.
    fn score<'a, S: Scalar>(&self, cells: impl Iterator<Item = &'a Value>) -> Result<S, ()> {
        match self {
            Matcher::Indicator(t) => {
                let mut cells = cells;
                Ok(if cells.any(|c| t.check(c)) { S::one() } else { S::zero() })
            }
            Matcher::Fraction(t) => {
                let (mut hits, mut total) = (0usize, 0usize);
                for c in cells {
                    total += 1;
                    hits += t.check(c) as usize;
                }
                if total == 0 {
                    Err(())
                } else {
                    Ok(S::from_ratio(hits, total))
                }
            }
        }
    }
}

/// Scores a concrete primitive against a table.
pub fn score_primitive<S: Scalar>(phi: &Primitive, t: &ResultTable) -> Result<S, SoftError> {
    let ColumnExpr::Const(name) = phi.column() else {
        return Err(SoftError::Hole);
    };
    let pos = t
        .position(name)
        .ok_or_else(|| SoftError::ColumnAbsent(name.to_string()))?;
    let ty = t.columns[pos].value_type;
    let shape = PrimShape::of(phi);
    if !shape.compatible(ty) {
        return Err(SoftError::TypeIncompatible {
            column: name.to_string(),
            value_type: ty,
        });
    }
    shape
        .score_cells(t.rows.iter().map(|r| &r[pos]))
        .map_err(|()| SoftError::EmptyColumn(name.to_string()))
}

/// Sum of the conjuncts' scores.
pub fn score_soft<S: Scalar>(phi: &SoftConstraint, t: &ResultTable) -> Result<S, SoftError> {
    phi.conjuncts
        .iter()
        .try_fold(S::zero(), |acc, p| Ok(acc + score_primitive::<S>(p, t)?))
}

/// Precomputed primitive scores, one per (shape, catalog column).
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaTable<S> {
    shapes: Vec<PrimShape>,
    scores: Vec<Vec<Option<S>>>,
}

impl<S: Scalar> ThetaTable<S> {
    pub fn shapes(&self) -> &[PrimShape] {
        &self.shapes
    }

    pub fn shape_index(&self, shape: &PrimShape) -> Option<usize> {
        self.shapes.iter().position(|s| s == shape)
    }

    /// `None` when the pair is type-incompatible.
    pub fn get(&self, shape: usize, column: ColumnId) -> Option<S> {
        self.scores[shape][column.index()]
    }

    pub fn lookup(&self, p: &Primitive, column: ColumnId) -> Option<S> {
        self.get(self.shape_index(&PrimShape::of(p))?, column)
    }

    /// Columns on which `shape` is well-typed.
    pub fn compatible_columns(&self, shape: usize) -> impl Iterator<Item = ColumnId> + '_ {
        self.scores[shape]
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_some())
            .map(|(i, _)| ColumnId(i as u32))
    }

    fn to_file(&self, sketch_hash: &str, catalog_hash: &str) -> ThetaFile {
        ThetaFile {
            sketch_hash: sketch_hash.to_string(),
            catalog_hash: catalog_hash.to_string(),
            shapes: self.shapes.clone(),
            scores: self
                .scores
                .iter()
                .map(|row| row.iter().map(|s| s.map(Scalar::to_f64_lossy)).collect())
                .collect(),
        }
    }

    fn from_file(f: ThetaFile) -> Self {
        ThetaTable {
            shapes: f.shapes,
            scores: f
                .scores
                .into_iter()
                .map(|row| row.into_iter().map(|s| s.map(S::lit)).collect())
                .collect(),
        }
    }
}

fn sketch_shapes(sketch: &Sketch) -> Vec<PrimShape> {
    let mut shapes: Vec<PrimShape> = Vec::new();
    let mut node = &sketch.select.source;
    let mut softs = vec![&node.soft];
    while let TableExpr::Join { right, .. } = &node.expr {
        node = right;
        softs.push(&node.soft);
    }
    softs.push(&sketch.select.soft);
    softs.push(&sketch.soft);
    for soft in softs {
        for p in &soft.conjuncts {
            let shape = PrimShape::of(p);
            if !shapes.contains(&shape) {
                shapes.push(shape);
            }
        }
    }
    shapes
}

/// Scores every primitive of `sketch` on every type-compatible column's base
/// table. An empty base table scores 0.
pub fn precompute_theta<S: Scalar>(sketch: &Sketch, catalog: &Catalog) -> ThetaTable<S> {
    let shapes = sketch_shapes(sketch);
    let scores = shapes
        .iter()
        .map(|shape| {
            let matcher = shape.matcher();
            catalog
                .column_ids()
                .map(|id| {
                    let def = catalog.column(id);
                    if !shape.compatible(def.value_type) {
                        return None;
                    }
                    Some(matcher.score(catalog.column_values(id)).unwrap_or(S::zero()))
                })
                .collect()
        })
        .collect();
    ThetaTable { shapes, scores }
}

#[derive(Serialize, Deserialize)]
struct ThetaFile {
    sketch_hash: String,
    catalog_hash: String,
    shapes: Vec<PrimShape>,
    scores: Vec<Vec<Option<f64>>>,
}

pub fn sketch_hash(sketch: &Sketch) -> String {
    hex(&Sha256::digest(print_sketch(sketch).as_bytes()))
}

/// Loads θ from `dir` when a cache entry for (sketch, catalog) exists,
/// otherwise computes and stores it. Cache I/O failures fall back to
/// computing.
pub fn cached_theta<S: Scalar>(dir: &Path, sketch: &Sketch, catalog: &Catalog) -> ThetaTable<S> {
    let (sh, ch) = (sketch_hash(sketch), catalog.fingerprint());
    let path: PathBuf = dir.join(format!("theta-{}-{}.json", &sh[..16], &ch[..16]));
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(file) = serde_json::from_str::<ThetaFile>(&text) {
            if file.sketch_hash == sh && file.catalog_hash == ch {
                return ThetaTable::from_file(file);
            }
        }
    }
    let theta = precompute_theta(sketch, catalog);
    if std::fs::create_dir_all(dir).is_ok() {
        let body = serde_json::to_string(&theta.to_file(&sh, &ch)).expect("theta serializes");
        let _ = std::fs::write(&path, body);
    }
    theta
}

struct ChainInfo {
    tables: Vec<TableId>,
}

fn chain_info(expr: &TableExpr, catalog: &Catalog) -> Option<ChainInfo> {
    let mut tables = Vec::new();
    for name in expr.tables() {
        let id = catalog.table_id(name)?;
        if tables.contains(&id) {
            return None;
        }
        tables.push(id);
    }
    Some(ChainInfo { tables })
}

fn const_column(c: &ColumnExpr, catalog: &Catalog) -> Option<ColumnId> {
    catalog.column_id(c.as_const()?)
}

fn predicate_ok(p: &Predicate, catalog: &Catalog, chain: &[TableId]) -> bool {
    match p {
        Predicate::True => true,
        Predicate::Compare { column, value, .. } => {
            let Some(id) = const_column(column, catalog) else {
                return false;
            };
            chain.contains(&catalog.column_table(id))
                && !value.is_regex()
                && catalog.column(id).value_type == value.value_type()
        }
        Predicate::And(a, b) | Predicate::Or(a, b) => {
            predicate_ok(a, catalog, chain) && predicate_ok(b, catalog, chain)
        }
    }
}

fn soft_sum<S: Scalar>(
    soft: &SoftConstraint,
    theta: &ThetaTable<S>,
    catalog: &Catalog,
    allowed: impl Fn(ColumnId) -> bool,
) -> S {
    let mut total = S::zero();
    for p in &soft.conjuncts {
        let score = const_column(p.column(), catalog)
            .filter(|id| allowed(*id))
            .and_then(|id| theta.lookup(p, id));
        match score {
            Some(s) => total = total + s,
            None => return S::neg_infinity(),
        }
    }
    total
}

/// Approximate score of a hole-free sketch; `-inf` when ill-formed.
pub fn score_completion<S: Scalar>(c: &Sketch, theta: &ThetaTable<S>, catalog: &Catalog, lambda: S) -> S {
    let ninf = S::neg_infinity();
    let Some(chain) = chain_info(&c.select.source.expr, catalog) else {
        return ninf;
    };
    let tables = &chain.tables;
    let mut project = HashSet::new();
    for col in &c.project {
        match const_column(col, catalog) {
            Some(id) if tables.contains(&catalog.column_table(id)) => {
                project.insert(id);
            }
            _ => return ninf,
        }
    }
    if !predicate_ok(&c.select.predicate, catalog, tables) {
        return ninf;
    }
    let mut total = S::zero();
    let mut node = &c.select.source;
    let mut depth = 0;
    loop {
        let subtree = &tables[depth..];
        total = total
            + soft_sum(&node.soft, theta, catalog, |id| {
                subtree.contains(&catalog.column_table(id))
            });
        match &node.expr {
            TableExpr::Join {
                left_column,
                right_column,
                right,
                ..
            } => {
                let (Some(l), Some(r)) = (const_column(left_column, catalog), const_column(right_column, catalog)) else {
                    return ninf;
                };
                let ok = catalog.column_table(l) == tables[depth]
                    && catalog.column_table(r) == tables[depth + 1]
                    && catalog.join_graph().is_edge(l, r);
                if !ok {
                    return ninf;
                }
                node = right;
                depth += 1;
            }
            TableExpr::Base(_) => break,
            TableExpr::Hole(_) => return ninf,
        }
    }
    total = total + soft_sum(&c.select.soft, theta, catalog, |id| tables.contains(&catalog.column_table(id)));
    total = total + soft_sum(&c.soft, theta, catalog, |id| project.contains(&id));
    if total == ninf {
        return ninf;
    }
    total + lambda * S::count(c.size())
}

/// `exp(score)`, with `-inf` mapping to 0.
pub fn unnormalized_weight<S: Scalar>(c: &Sketch, theta: &ThetaTable<S>, catalog: &Catalog, lambda: S) -> S {
    score_completion(c, theta, catalog, lambda).exp()
}

fn exact_soft<S: Scalar>(soft: &SoftConstraint, t: &ResultTable) -> S {
    let mut total = S::zero();
    for p in &soft.conjuncts {
        match score_primitive::<S>(p, t) {
            Ok(s) => total = total + s,
            Err(SoftError::EmptyColumn(_)) => {}
            Err(_) => return S::neg_infinity(),
        }
    }
    total
}

/// Score under the exact semantics: every soft block is evaluated on the
/// table its expression actually produces. Fraction primitives on empty
/// tables score 0.
pub fn score_exact<S: Scalar>(c: &Sketch, catalog: &Catalog, lambda: S) -> S {
    let ninf = S::neg_infinity();
    let mut total = S::zero();
    let mut node = &c.select.source;
    loop {
        let Ok(t) = evaluate_table(&node.expr, catalog) else {
            return ninf;
        };
        total = total + exact_soft(&node.soft, &t);
        match &node.expr {
            TableExpr::Join { right, .. } => node = right,
            _ => break,
        }
    }
    let Ok(selected) = evaluate_selection(c, catalog) else {
        return ninf;
    };
    total = total + exact_soft(&c.select.soft, &selected);
    let Ok(projected) = project(&selected, &c.project) else {
        return ninf;
    };
    total = total + exact_soft(&c.soft, &projected);
    if total == ninf {
        return ninf;
    }
    total + lambda * S::count(c.size())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::tests::{library, library_dir};
    use crate::catalog::ColumnName;
    use crate::lang::{parse_completion, parse_sketch};

    fn joined(cat: &Catalog) -> ResultTable {
        let q = parse_sketch(
            "SELECT name FROM (authors INNER-JOIN (writes INNER-JOIN publications ON writes.pid = publications.pid) ON authors.aid = writes.aid)",
            cat,
        )
        .unwrap();
        evaluate_table(&q.select.source.expr, cat).unwrap()
    }

    fn col(t: &str, c: &str) -> ColumnExpr {
        ColumnExpr::Const(ColumnName::new(t, c))
    }

    fn year(op: SoftOp, v: i64) -> Primitive {
        Primitive::Compare {
            column: col("publications", "year"),
            op,
            value: Literal::Int(v),
        }
    }

    #[test]
    fn primitive_scores_on_the_join() {
        let cat = library();
        let t = joined(&cat);
        let church = Primitive::Contains {
            column: col("authors", "name"),
            pattern: ".*Church.*".into(),
        };
        assert_eq!(score_primitive::<f64>(&church, &t), Ok(1.0));
        assert_eq!(score_primitive::<f64>(&year(SoftOp::Ge, 1900), &t), Ok(1.0));
        assert_eq!(score_primitive::<f64>(&year(SoftOp::Le, 2020), &t), Ok(1.0));
        let le1940 = score_primitive::<f64>(&year(SoftOp::Le, 1940), &t).unwrap();
        assert!((le1940 - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(score_primitive::<f32>(&year(SoftOp::Approx, 1948), &t), Ok(1.0 / 3.0));
    }

    #[test]
    fn primitive_errors() {
        let cat = library();
        let t = joined(&cat);
        let p = Primitive::Contains {
            column: col("publications", "year"),
            pattern: "1.*".into(),
        };
        assert!(matches!(score_primitive::<f64>(&p, &t), Err(SoftError::TypeIncompatible { .. })));
        let authors = evaluate_table(&TableExpr::Base("authors".into()), &cat).unwrap();
        assert!(matches!(
            score_primitive::<f64>(&year(SoftOp::Ge, 0), &authors),
            Err(SoftError::ColumnAbsent(_))
        ));
        let empty = ResultTable {
            columns: t.columns.clone(),
            rows: Vec::new(),
        };
        assert!(matches!(
            score_primitive::<f64>(&year(SoftOp::Ge, 0), &empty),
            Err(SoftError::EmptyColumn(_))
        ));
    }

    #[test]
    fn conjunction_adds() {
        let cat = library();
        let t = joined(&cat);
        let a = year(SoftOp::Le, 1940);
        let b = year(SoftOp::Approx, 1937);
        let both = SoftConstraint {
            conjuncts: vec![a.clone(), b.clone()],
        };
        let sum = score_primitive::<f64>(&a, &t).unwrap() + score_primitive::<f64>(&b, &t).unwrap();
        assert_eq!(score_soft::<f64>(&both, &t).unwrap(), sum);
        assert_eq!(score_soft::<f64>(&SoftConstraint::default(), &t).unwrap(), 0.0);
    }

    fn author_sketch(cat: &Catalog) -> Sketch {
        parse_sketch(&std::fs::read_to_string(library_dir().join("author.sketch")).unwrap(), cat).unwrap()
    }

    #[test]
    fn theta_for_author_sketch() {
        let cat = library();
        let theta = precompute_theta::<f64>(&author_sketch(&cat), &cat);
        assert_eq!(theta.shapes().len(), 3);
        let church = theta.shape_index(&PrimShape::Contains(".*Church.*".into())).unwrap();
        let id = |t: &str, c: &str| cat.column_id(&ColumnName::new(t, c)).unwrap();
        assert_eq!(theta.get(church, id("authors", "name")), Some(1.0));
        assert_eq!(theta.get(church, id("publications", "title")), Some(0.0));
        assert_eq!(theta.get(church, id("publications", "year")), None);
        let ge = theta
            .shape_index(&PrimShape::Compare(SoftOp::Ge, Literal::Int(1900)))
            .unwrap();
        let int_cols: Vec<_> = theta
            .compatible_columns(ge)
            .map(|c| cat.column(c).qualified().to_string())
            .collect();
        assert_eq!(
            int_cols,
            ["authors.aid", "writes.aid", "writes.pid", "publications.pid", "publications.year"]
        );
        assert_eq!(theta.get(ge, id("publications", "year")), Some(1.0));
    }

    #[test]
    fn author_truth_scores_three() {
        let cat = library();
        let theta = precompute_theta::<f64>(&author_sketch(&cat), &cat);
        let truth = parse_completion(&std::fs::read_to_string(library_dir().join("author.truth")).unwrap(), &cat).unwrap();
        assert_eq!(score_completion(&truth, &theta, &cat, 0.0), 3.0);
        let size = truth.size() as f64;
        let with_size = score_completion(&truth, &theta, &cat, 0.1);
        assert!((with_size - (3.0 + 0.1 * size)).abs() < 1e-12);
        assert_eq!(unnormalized_weight(&truth, &theta, &cat, 0.0), 3f64.exp());
    }

    #[test]
    fn ill_formed_completions_score_neg_infinity() {
        let cat = library();
        let sketch = author_sketch(&cat);
        let theta = precompute_theta::<f64>(&sketch, &cat);
        for text in [
            "SELECT publications.title FROM (authors)",
            "SELECT authors.name FROM (authors INNER-JOIN publications ON authors.aid = publications.pid)",
            "SELECT authors.name FROM (authors {(contains publications.title \"x\")})",
            "SELECT authors.name FROM (authors) WHERE publications.year = 1948",
            "SELECT authors.name FROM (authors INNER-JOIN (writes {(contains authors.name \".*\")}) ON authors.aid = writes.aid)",
        ] {
            let q = parse_completion(text, &cat).unwrap();
            assert_eq!(score_completion(&q, &theta, &cat, 0.0), f64::NEG_INFINITY, "{text}");
            assert_eq!(unnormalized_weight(&q, &theta, &cat, 0.0), 0.0);
        }
    }

    #[test]
    fn theta_matches_exact_on_single_tables() {
        let cat = library();
        let sketch = parse_sketch(
            "SELECT ??c:column FROM (??t:table {(contains ??c:column \".*o.*\") AND (??d:column >= 1935) AND (0 in ??d:column) AND (??c:column ~= r\"A.*\")})",
            &cat,
        )
        .unwrap();
        let theta = precompute_theta::<f64>(&sketch, &cat);
        let mut checked = 0;
        for t in cat.tables() {
            for c in &t.columns {
                for d in &t.columns {
                    let text = format!(
                        "SELECT {c} FROM ({t} {{(contains {c} \".*o.*\") AND ({d} >= 1935) AND (0 in {d}) AND ({c} ~= r\"A.*\")}})",
                        c = c.qualified(),
                        d = d.qualified(),
                        t = t.name
                    );
                    let q = parse_completion(&text, &cat).unwrap();
                    let approx = score_completion(&q, &theta, &cat, 0.0);
                    let exact = score_exact(&q, &cat, 0.0);
                    assert_eq!(approx, exact, "{text}");
                    checked += approx.is_finite() as usize;
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn softmax_of_two_scores() {
        let (a, b) = (1f64.exp(), 0f64.exp());
        assert!((a / (a + b) - 0.731).abs() < 1e-3);
    }

    #[test]
    fn cache_round_trip() {
        let cat = library();
        let sketch = author_sketch(&cat);
        let dir = tempfile::tempdir().unwrap();
        let first = cached_theta::<f64>(dir.path(), &sketch, &cat);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        let second = cached_theta::<f64>(dir.path(), &sketch, &cat);
        assert_eq!(first, second);
        assert_eq!(first, precompute_theta(&sketch, &cat));
    }
}
