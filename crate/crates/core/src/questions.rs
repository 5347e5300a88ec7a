//! Candidate refinements, their sampled scores, and question selection.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CatalogError, Preview, TableId};
use crate::lang::refine::{fresh_name, used_names};
use crate::lang::{apply_refinement, derives, matches, ColumnExpr, Completion, Fill, ProductionSeq, Sketch, TableExpr};
use crate::sampler::{Skeleton, Slot};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum QuestionError {
    #[error("every candidate question was rejected or excluded")]
    NoCandidates,
    #[error("no scored candidate to select from")]
    EmptyCandidateList,
}

/// A one-hole refinement of the current sketch.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub seq: ProductionSeq,
    pub sketch: Sketch,
    /// Tables a user needs to see to answer.
    pub tables: Vec<String>,
}

impl Question {
    pub fn summary(&self) -> String {
        self.seq.summary()
    }

    /// Hole names this question fills.
    pub fn targets(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.seq.target.as_str()).chain(self.seq.linked.iter().map(|(n, _)| n.as_str()))
    }

    pub fn previews(&self, catalog: &Catalog, rows: usize) -> Result<Vec<Preview>, CatalogError> {
        self.tables.iter().map(|t| catalog.preview(t, rows)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredQuestion<S> {
    pub question: Question,
    pub pi_plus_hat: S,
    pub score_hat: S,
}

fn make(p: &Sketch, seq: ProductionSeq, tables: Vec<String>) -> Question {
    let sketch = apply_refinement(p, &seq).expect("candidate productions target existing holes");
    Question { seq, sketch, tables }
}

/// The candidate set for the skeleton's sketch, minus `negatives` and
/// anything a negative derives.
pub fn candidate_questions<S: Scalar>(
    sk: &Skeleton<'_, S>,
    catalog: &Catalog,
    negatives: &[Question],
) -> Result<Vec<Question>, QuestionError> {
    let p = sk.sketch();
    let mut out = Vec::new();
    for unit in sk.column_units() {
        for c in &unit.choices {
            let def = catalog.column(*c);
            out.push(make(
                p,
                ProductionSeq::column(&unit.name, def.qualified()),
                vec![def.table_name.clone()],
            ));
        }
    }
    if let Some(unit) = sk.table_unit() {
        let mut used = used_names(p);
        let fresh_table = fresh_name("t", &mut used);
        let fresh_left = fresh_name("c", &mut used);
        let fresh_right = fresh_name("c", &mut used);

        let name = |t: TableId| catalog.table(t).name.clone();
        let col = |c| ColumnExpr::Const(catalog.column(c).qualified());
        let mut anchors: Vec<(TableId, Vec<(String, _)>, Vec<String>)> = Vec::new();
        match &unit.context {
            None => {
                for t in 0..catalog.table_count() {
                    anchors.push((TableId(t as u32), Vec::new(), Vec::new()));
                }
            }
            Some(ctx) => {
                for step in &ctx.options {
                    let mut linked = Vec::new();
                    if let Slot::Owned(n) = &ctx.left {
                        linked.push((n.clone(), catalog.column(step.from_column).qualified()));
                    }
                    if let Slot::Owned(n) = &ctx.right {
                        linked.push((n.clone(), catalog.column(step.to_column).qualified()));
                    }
                    anchors.push((step.to_table, linked, vec![name(ctx.left_table)]));
                }
            }
        }
        for (anchor, linked, context_tables) in anchors {
            let with = |expr: TableExpr, extra: &[TableId]| {
                let mut seq = ProductionSeq::table(&unit.name, expr);
                seq.linked = linked.clone();
                let mut tables = context_tables.clone();
                tables.push(name(anchor));
                tables.extend(extra.iter().map(|t| name(*t)));
                make(p, seq, tables)
            };
            out.push(with(TableExpr::Base(name(anchor)), &[]));
            for step in catalog.join_graph().steps_from(anchor) {
                if sk.prefix().contains(&step.to_table) {
                    continue;
                }
                let (lc, rc) = (col(step.from_column), col(step.to_column));
                let next = name(step.to_table);
                out.push(with(
                    TableExpr::join(&name(anchor), lc.clone(), rc.clone(), TableExpr::Base(next.clone())),
                    &[step.to_table],
                ));
                let tail = TableExpr::join(
                    &next,
                    ColumnExpr::Hole(fresh_left.clone()),
                    ColumnExpr::Hole(fresh_right.clone()),
                    TableExpr::Hole(fresh_table.clone()),
                );
                out.push(with(TableExpr::join(&name(anchor), lc, rc, tail), &[step.to_table]));
            }
        }
    }

    let mut seen = HashSet::new();
    out.retain(|q| {
        seen.insert(q.sketch.clone())
            && !negatives
                .iter()
                .any(|n| n.sketch == q.sketch || derives(&n.sketch, &q.sketch))
    });
    if out.is_empty() {
        return Err(QuestionError::NoCandidates);
    }
    Ok(out)
}

/// π̂₊ and 2·π̂₊·(1 − π̂₊) per candidate; candidates no sample supports are
/// dropped.
pub fn estimate_scores<S: Scalar>(candidates: &[Question], samples: &[Completion]) -> Vec<ScoredQuestion<S>> {
    let mut counts: HashMap<&Completion, usize> = HashMap::new();
    let mut order = Vec::new();
    for s in samples {
        let n = counts.entry(s).or_insert(0);
        if *n == 0 {
            order.push(s);
        }
        *n += 1;
    }
    let total = samples.len();
    let two = S::lit(2.0);
    candidates
        .iter()
        .filter_map(|q| {
            let hits: usize = order.iter().filter(|s| matches(&q.sketch, s)).map(|s| counts[*s]).sum();
            (hits > 0).then(|| {
                let pi = S::from_ratio(hits, total);
                ScoredQuestion {
                    question: q.clone(),
                    pi_plus_hat: pi,
                    score_hat: two * pi * (S::one() - pi),
                }
            })
        })
        .collect()
}

/// Highest score; ties go to the smaller resulting sketch, then to the
/// lexicographically first production summary.
pub fn select_question<S: Scalar>(scored: &[ScoredQuestion<S>]) -> Result<&ScoredQuestion<S>, QuestionError> {
    let key = |q: &ScoredQuestion<S>| (q.question.sketch.size(), q.question.summary());
    scored
        .iter()
        .reduce(|best, q| {
            if q.score_hat > best.score_hat || (q.score_hat == best.score_hat && key(q) < key(best)) {
                q
            } else {
                best
            }
        })
        .ok_or(QuestionError::EmptyCandidateList)
}

/// Whether the question's fill is a table expression.
pub fn is_table_question(q: &Question) -> bool {
    matches!(q.seq.fill, Fill::Table(_))
}
