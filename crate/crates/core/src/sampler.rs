//! Metropolis-Hastings sampling of completions.
//!
//! A sketch is compiled into *units*: one per column-hole name, plus at most
//! one table unit for the join chain's tail hole. When the table hole is the
//! right operand of a join, the table unit also decides that join's column
//! holes, taking them from the chosen key edge. Each MH step resamples one
//! unit from its proposal and applies the Hastings correction; join-chain
//! proposals are not symmetric.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, ColumnId, JoinStep, TableId, ValueType};
use crate::lang::{
    chain_expr_size, matches, ColumnExpr, Completion, HoleKind, Predicate, Primitive, Sketch, SoftConstraint,
    TableExpr, TableNode,
};
use crate::scalar::Scalar;
use crate::softsem::{PrimShape, ThetaTable};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub sample_count: usize,
    pub mh_steps: usize,
    /// Maximum number of tables in a join chain.
    pub max_join_depth: usize,
    pub rejection_retry_limit: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            sample_count: 100,
            mh_steps: 1000,
            max_join_depth: 6,
            rejection_retry_limit: 10_000,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let fields = [
            ("sample_count", self.sample_count),
            ("mh_steps", self.mh_steps),
            ("max_join_depth", self.max_join_depth),
            ("rejection_retry_limit", self.rejection_retry_limit),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(SamplerError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("no valid expansion: {0}")]
    NoValidExpansion(String),
    #[error("every sampled completion matched one of the {negatives} rejected question(s)")]
    RejectionExhausted { negatives: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
}

/// Draws before an initial state is accepted even with weight 0.
const INIT_ATTEMPTS: usize = 1000;
/// Chains without any positive-weight state before the sketch is declared
/// unsatisfiable.
const BARREN_CHAIN_LIMIT: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Ref {
    Const(ColumnId),
    Unit(usize),
    CtxLeft,
    CtxRight,
}

#[derive(Clone, Debug)]
pub struct ColumnUnit {
    pub name: String,
    pub choices: Vec<ColumnId>,
}

#[derive(Clone, Debug)]
pub enum Slot {
    Fixed(ColumnId),
    Owned(String),
}

/// The join whose right operand is the table hole.
#[derive(Clone, Debug)]
pub struct Context {
    pub left_table: TableId,
    pub left: Slot,
    pub right: Slot,
    /// Key edges from `left_table` compatible with the slots.
    pub options: Vec<JoinStep>,
}

#[derive(Clone, Debug)]
pub struct TableUnit {
    pub name: String,
    pub context: Option<Context>,
}

/// Fill of the table unit. Without a context, `start` is the first table;
/// with one, `steps[0]` is the context edge.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Chain {
    pub start: Option<TableId>,
    pub steps: Vec<JoinStep>,
}

impl Chain {
    pub fn tables(&self) -> impl Iterator<Item = TableId> + '_ {
        self.start.into_iter().chain(self.steps.iter().map(|s| s.to_table))
    }

    pub fn len(&self) -> usize {
        self.start.is_some() as usize + self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One point of the completion space.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct State {
    pub columns: Vec<ColumnId>,
    pub chain: Chain,
}

/// A sketch compiled against a catalog and θ for fast scoring.
pub struct Skeleton<'a, S> {
    catalog: &'a Catalog,
    theta: &'a ThetaTable<S>,
    lambda: S,
    max_depth: usize,
    sketch: Sketch,
    units: Vec<ColumnUnit>,
    table: Option<TableUnit>,
    prefix: Vec<TableId>,
    project: Vec<Ref>,
    predicate: Vec<(Ref, Option<ValueType>)>,
    links: Vec<(Ref, Ref)>,
    node_softs: Vec<Vec<(Option<usize>, Ref)>>,
    select_soft: Vec<(Option<usize>, Ref)>,
    query_soft: Vec<(Option<usize>, Ref)>,
    base_size: usize,
}

fn no_expansion<T>(why: impl Into<String>) -> Result<T, SamplerError> {
    Err(SamplerError::NoValidExpansion(why.into()))
}

fn collect_pred<'p>(p: &'p Predicate, out: &mut Vec<(&'p ColumnExpr, Option<ValueType>)>) {
    match p {
        Predicate::True => {}
        Predicate::Compare { column, value, .. } => {
            out.push((column, (!value.is_regex()).then(|| value.value_type())))
        }
        Predicate::And(a, b) | Predicate::Or(a, b) => {
            collect_pred(a, out);
            collect_pred(b, out);
        }
    }
}

impl<'a, S: Scalar> Skeleton<'a, S> {
    pub fn compile(
        sketch: &Sketch,
        catalog: &'a Catalog,
        theta: &'a ThetaTable<S>,
        lambda: S,
        max_depth: usize,
    ) -> Result<Self, SamplerError> {
        let n_cols = catalog.column_count();

        // Walk the join spine.
        let mut prefix = Vec::new();
        let mut link_exprs: Vec<(&ColumnExpr, &ColumnExpr)> = Vec::new();
        let mut node_soft_exprs: Vec<&SoftConstraint> = Vec::new();
        let mut node: &TableNode = &sketch.select.source;
        let table_hole = loop {
            node_soft_exprs.push(&node.soft);
            let table_name = match &node.expr {
                TableExpr::Hole(name) => break Some(name.clone()),
                TableExpr::Base(t) => t,
                TableExpr::Join { left, .. } => left,
            };
            let Some(id) = catalog.table_id(table_name) else {
                return no_expansion(format!("unknown table {table_name}"));
            };
            if prefix.contains(&id) {
                return no_expansion(format!("table {table_name} repeats in the join chain"));
            }
            prefix.push(id);
            match &node.expr {
                TableExpr::Join {
                    left_column,
                    right_column,
                    right,
                    ..
                } => {
                    link_exprs.push((left_column, right_column));
                    node = right;
                }
                _ => break None,
            }
        };

        // Join-column holes of the context link belong to the table unit.
        let mut owned: HashMap<String, Ref> = HashMap::new();
        let context_link = table_hole.is_some() && !link_exprs.is_empty();
        if context_link {
            let (l, r) = link_exprs[link_exprs.len() - 1];
            if let ColumnExpr::Hole(n) = r {
                owned.insert(n.clone(), Ref::CtxRight);
            }
            if let ColumnExpr::Hole(n) = l {
                owned.insert(n.clone(), Ref::CtxLeft);
            }
        }

        // Allowed columns per hole name.
        let mut allowed: HashMap<String, Vec<bool>> = HashMap::new();
        let mut column_holes: Vec<String> = Vec::new();
        for (name, kind) in sketch.hole_names() {
            if kind == HoleKind::Column {
                allowed.insert(name.clone(), vec![true; n_cols]);
                column_holes.push(name);
            }
        }
        let restrict = |allowed: &mut HashMap<String, Vec<bool>>, c: &ColumnExpr, keep: &dyn Fn(ColumnId) -> bool| {
            if let ColumnExpr::Hole(n) = c {
                let mask = allowed.get_mut(n).expect("column hole");
                for (i, m) in mask.iter_mut().enumerate() {
                    *m = *m && keep(ColumnId(i as u32));
                }
            }
        };
        let all_softs: Vec<&SoftConstraint> = node_soft_exprs
            .iter()
            .copied()
            .chain([&sketch.select.soft, &sketch.soft])
            .collect();
        for soft in &all_softs {
            for p in &soft.conjuncts {
                let shape = PrimShape::of(p);
                restrict(&mut allowed, p.column(), &|c| shape.compatible(catalog.column(c).value_type));
            }
        }
        let mut pred_exprs = Vec::new();
        collect_pred(&sketch.select.predicate, &mut pred_exprs);
        for (c, ty) in &pred_exprs {
            restrict(&mut allowed, c, &|id| Some(catalog.column(id).value_type) == *ty);
        }
        let n_plain_links = link_exprs.len() - context_link as usize;
        for (i, (l, r)) in link_exprs.iter().take(n_plain_links).enumerate() {
            let (lt, rt) = (prefix[i], prefix[i + 1]);
            restrict(&mut allowed, l, &|c| catalog.column_table(c) == lt);
            restrict(&mut allowed, r, &|c| catalog.column_table(c) == rt);
        }

        let mut units = Vec::new();
        let mut unit_index = HashMap::new();
        for name in &column_holes {
            if owned.contains_key(name) {
                continue;
            }
            let choices: Vec<ColumnId> = allowed[name]
                .iter()
                .enumerate()
                .filter(|(_, ok)| **ok)
                .map(|(i, _)| ColumnId(i as u32))
                .collect();
            if choices.is_empty() {
                return no_expansion(format!("no column fits the constraints on ??{name}"));
            }
            unit_index.insert(name.clone(), units.len());
            units.push(ColumnUnit {
                name: name.clone(),
                choices,
            });
        }

        let table = match table_hole {
            None => None,
            Some(name) => {
                if prefix.len() >= max_depth {
                    return no_expansion("join chain already at the maximum depth");
                }
                let context = if context_link {
                    let (l, r) = link_exprs[link_exprs.len() - 1];
                    let slot = |c: &ColumnExpr| match c {
                        ColumnExpr::Hole(n) => Ok(Slot::Owned(n.clone())),
                        ColumnExpr::Const(c) => match catalog.column_id(c) {
                            Some(id) => Ok(Slot::Fixed(id)),
                            None => no_expansion(format!("unknown column {c}")),
                        },
                    };
                    let (left, right) = (slot(l)?, slot(r)?);
                    let left_table = *prefix.last().expect("context link has a left table");
                    let fits = |slot: &Slot, c: ColumnId| match slot {
                        Slot::Fixed(id) => *id == c,
                        Slot::Owned(n) => allowed[n][c.index()],
                    };
                    let same_hole = matches!((&left, &right), (Slot::Owned(a), Slot::Owned(b)) if a == b);
                    let options: Vec<JoinStep> = catalog
                        .join_graph()
                        .steps_from(left_table)
                        .iter()
                        .filter(|s| {
                            !prefix.contains(&s.to_table)
                                && !same_hole
                                && fits(&left, s.from_column)
                                && fits(&right, s.to_column)
                        })
                        .copied()
                        .collect();
                    if options.is_empty() {
                        return no_expansion(format!("no key join can extend the chain at ??{name}"));
                    }
                    Some(Context {
                        left_table,
                        left,
                        right,
                        options,
                    })
                } else {
                    if catalog.table_count() == 0 {
                        return no_expansion("the catalog has no tables");
                    }
                    None
                };
                Some(TableUnit { name, context })
            }
        };

        let to_ref = |c: &ColumnExpr| -> Result<Ref, SamplerError> {
            match c {
                ColumnExpr::Const(name) => match catalog.column_id(name) {
                    Some(id) => Ok(Ref::Const(id)),
                    None => no_expansion(format!("unknown column {name}")),
                },
                ColumnExpr::Hole(n) => Ok(owned.get(n).copied().unwrap_or_else(|| Ref::Unit(unit_index[n]))),
            }
        };
        let soft_refs = |s: &SoftConstraint| -> Result<Vec<(Option<usize>, Ref)>, SamplerError> {
            s.conjuncts
                .iter()
                .map(|p: &Primitive| Ok((theta.shape_index(&PrimShape::of(p)), to_ref(p.column())?)))
                .collect()
        };

        let hole_occurrences = sketch
            .holes()
            .iter()
            .filter(|h| h.kind == HoleKind::Column)
            .count();
        Ok(Skeleton {
            catalog,
            theta,
            lambda,
            max_depth,
            sketch: sketch.clone(),
            project: sketch.project.iter().map(to_ref).collect::<Result<_, _>>()?,
            predicate: pred_exprs
                .iter()
                .map(|(c, ty)| Ok((to_ref(c)?, *ty)))
                .collect::<Result<_, SamplerError>>()?,
            links: link_exprs
                .iter()
                .map(|(l, r)| Ok((to_ref(l)?, to_ref(r)?)))
                .collect::<Result<_, SamplerError>>()?,
            node_softs: node_soft_exprs.iter().map(|s| soft_refs(s)).collect::<Result<_, _>>()?,
            select_soft: soft_refs(&sketch.select.soft)?,
            query_soft: soft_refs(&sketch.soft)?,
            base_size: sketch.size() + hole_occurrences,
            units,
            table,
            prefix,
        })
    }

    pub fn column_units(&self) -> &[ColumnUnit] {
        &self.units
    }

    pub fn table_unit(&self) -> Option<&TableUnit> {
        self.table.as_ref()
    }

    pub fn prefix(&self) -> &[TableId] {
        &self.prefix
    }

    pub fn unit_count(&self) -> usize {
        self.units.len() + self.table.is_some() as usize
    }

    pub fn sketch(&self) -> &Sketch {
        &self.sketch
    }

    fn resolve(&self, r: Ref, st: &State) -> ColumnId {
        match r {
            Ref::Const(c) => c,
            Ref::Unit(i) => st.columns[i],
            Ref::CtxLeft => st.chain.steps[0].from_column,
            Ref::CtxRight => st.chain.steps[0].to_column,
        }
    }

    /// Log-weight of a state; `-inf` when ill-formed.
    pub fn score(&self, st: &State, pos: &mut Vec<u32>) -> S {
        let catalog = self.catalog;
        pos.clear();
        pos.resize(catalog.table_count(), u32::MAX);
        for (i, t) in self.prefix.iter().copied().chain(st.chain.tables()).enumerate() {
            pos[t.index()] = i as u32;
        }
        let ninf = S::neg_infinity();
        let at = |c: ColumnId| pos[catalog.column_table(c).index()];
        for r in &self.project {
            if at(self.resolve(*r, st)) == u32::MAX {
                return ninf;
            }
        }
        for (r, ty) in &self.predicate {
            let c = self.resolve(*r, st);
            if at(c) == u32::MAX || Some(catalog.column(c).value_type) != *ty {
                return ninf;
            }
        }
        for (i, (l, r)) in self.links.iter().enumerate() {
            let (l, r) = (self.resolve(*l, st), self.resolve(*r, st));
            if at(l) != i as u32 || at(r) != i as u32 + 1 || !catalog.join_graph().is_edge(l, r) {
                return ninf;
            }
        }
        let mut total = S::zero();
        let mut add = |prims: &[(Option<usize>, Ref)], ok: &dyn Fn(ColumnId) -> bool| -> bool {
            for (shape, r) in prims {
                let c = self.resolve(*r, st);
                match shape.and_then(|s| self.theta.get(s, c)) {
                    Some(v) if ok(c) => total = total + v,
                    _ => return false,
                }
            }
            true
        };
        for (i, prims) in self.node_softs.iter().enumerate() {
            let ok = |c: ColumnId| {
                let p = at(c);
                p != u32::MAX && p >= i as u32
            };
            if !add(prims, &ok) {
                return ninf;
            }
        }
        if !add(&self.select_soft, &|c| at(c) != u32::MAX) {
            return ninf;
        }
        let projected = |c: ColumnId| self.project.iter().any(|r| self.resolve(*r, st) == c);
        if !add(&self.query_soft, &projected) {
            return ninf;
        }
        let mut size = self.base_size;
        if self.table.is_some() {
            size += chain_expr_size(st.chain.len()) - 1;
        }
        total + self.lambda * S::count(size)
    }

    fn extension_options(&self, visited: &[TableId], cur: TableId) -> Vec<JoinStep> {
        self.catalog
            .join_graph()
            .steps_from(cur)
            .iter()
            .filter(|s| !visited.contains(&s.to_table))
            .copied()
            .collect()
    }

    /// Draws a join chain for the table unit and returns it with its log
    /// proposal density.
    pub fn propose_chain<R: Rng>(&self, rng: &mut R) -> (Chain, f64) {
        let unit = self.table.as_ref().expect("table unit");
        let mut visited = self.prefix.clone();
        let mut chain = Chain::default();
        let mut log_q;
        match &unit.context {
            None => {
                let n = self.catalog.table_count();
                let t = TableId(rng.gen_range(0..n) as u32);
                log_q = -(n as f64).ln();
                chain.start = Some(t);
                visited.push(t);
            }
            Some(ctx) => {
                let k = ctx.options.len();
                let step = ctx.options[rng.gen_range(0..k)];
                log_q = -(k as f64).ln();
                chain.steps.push(step);
                visited.push(step.to_table);
            }
        }
        loop {
            let cur = *visited.last().expect("nonempty");
            let options = self.extension_options(&visited, cur);
            if visited.len() >= self.max_depth || options.is_empty() {
                break;
            }
            if rng.gen_bool(0.5) {
                log_q -= std::f64::consts::LN_2;
                break;
            }
            let step = options[rng.gen_range(0..options.len())];
            log_q -= std::f64::consts::LN_2 + (options.len() as f64).ln();
            chain.steps.push(step);
            visited.push(step.to_table);
        }
        (chain, log_q)
    }

    /// Log proposal density of `chain`, replaying the choices of
    /// [`Skeleton::propose_chain`]. `-inf` if the chain cannot be proposed.
    pub fn chain_log_density(&self, chain: &Chain) -> f64 {
        let Some(unit) = self.table.as_ref() else {
            return f64::NEG_INFINITY;
        };
        let mut visited = self.prefix.clone();
        let mut log_q;
        let rest = match &unit.context {
            None => {
                let Some(t) = chain.start else {
                    return f64::NEG_INFINITY;
                };
                log_q = -(self.catalog.table_count() as f64).ln();
                visited.push(t);
                &chain.steps[..]
            }
            Some(ctx) => {
                let Some(first) = chain.steps.first() else {
                    return f64::NEG_INFINITY;
                };
                if chain.start.is_some() || !ctx.options.contains(first) {
                    return f64::NEG_INFINITY;
                }
                log_q = -(ctx.options.len() as f64).ln();
                visited.push(first.to_table);
                &chain.steps[1..]
            }
        };
        for step in rest {
            let cur = *visited.last().expect("nonempty");
            let options = self.extension_options(&visited, cur);
            if visited.len() >= self.max_depth || !options.contains(step) {
                return f64::NEG_INFINITY;
            }
            log_q -= std::f64::consts::LN_2 + (options.len() as f64).ln();
            visited.push(step.to_table);
        }
        let cur = *visited.last().expect("nonempty");
        if visited.len() < self.max_depth && !self.extension_options(&visited, cur).is_empty() {
            log_q -= std::f64::consts::LN_2;
        }
        log_q
    }

    /// Independent draw of every unit, preferring columns inside the drawn
    /// chain so that the start state is likely well-formed.
    fn initial_state<R: Rng>(&self, rng: &mut R) -> (State, f64) {
        let (chain, log_q) = if self.table.is_some() {
            self.propose_chain(rng)
        } else {
            (Chain::default(), 0.0)
        };
        let in_chain: Vec<TableId> = self.prefix.iter().copied().chain(chain.tables()).collect();
        let columns = self
            .units
            .iter()
            .map(|u| {
                let inside: Vec<ColumnId> = u
                    .choices
                    .iter()
                    .copied()
                    .filter(|c| in_chain.contains(&self.catalog.column_table(*c)))
                    .collect();
                let pool = if inside.is_empty() { &u.choices } else { &inside };
                pool[rng.gen_range(0..pool.len())]
            })
            .collect();
        (State { columns, chain }, log_q)
    }

    /// Builds the completion a state denotes.
    pub fn completion(&self, st: &State) -> Completion {
        let mut fills: HashMap<&str, ColumnId> = HashMap::new();
        for (u, c) in self.units.iter().zip(&st.columns) {
            fills.insert(&u.name, *c);
        }
        let mut out = self.sketch.clone();
        if let Some(unit) = &self.table {
            if let Some(ctx) = &unit.context {
                let first = st.chain.steps[0];
                if let Slot::Owned(n) = &ctx.left {
                    fills.insert(n, first.from_column);
                }
                if let Slot::Owned(n) = &ctx.right {
                    fills.insert(n, first.to_column);
                }
            }
            out.tail_node_mut().expr = self.chain_expr(&st.chain);
        }
        let catalog = self.catalog;
        out.map_columns(&mut |c| {
            if let ColumnExpr::Hole(n) = c {
                *c = ColumnExpr::Const(catalog.column(fills[n.as_str()]).qualified());
            }
        });
        Completion::try_from(out).expect("every hole is filled")
    }

    /// The table expression for a chain fill.
    pub fn chain_expr(&self, chain: &Chain) -> TableExpr {
        let has_context = self.table.as_ref().is_some_and(|u| u.context.is_some());
        let tables: Vec<TableId> = chain.tables().collect();
        let links = if has_context { &chain.steps[1..] } else { &chain.steps[..] };
        let name = |t: TableId| self.catalog.table(t).name.clone();
        let col = |c: ColumnId| ColumnExpr::Const(self.catalog.column(c).qualified());
        let mut expr = TableExpr::Base(name(*tables.last().expect("nonempty chain")));
        for (i, step) in links.iter().enumerate().rev() {
            expr = TableExpr::Join {
                left: name(tables[i]),
                left_column: col(step.from_column),
                right_column: col(step.to_column),
                right: Box::new(TableNode::new(expr)),
            };
        }
        expr
    }

    /// Runs one chain to its final state.
    fn run_chain<R: Rng>(&self, rng: &mut R, steps: usize, pos: &mut Vec<u32>, seen_positive: &mut bool) -> (State, S) {
        let ninf = S::neg_infinity();
        let (mut state, mut log_q) = self.initial_state(rng);
        let mut score = self.score(&state, pos);
        for _ in 1..INIT_ATTEMPTS {
            if score > ninf {
                break;
            }
            let (s, q) = self.initial_state(rng);
            state = s;
            log_q = q;
            score = self.score(&state, pos);
        }
        *seen_positive |= score > ninf;
        let n_units = self.unit_count();
        for _ in 0..steps {
            let k = rng.gen_range(0..n_units);
            let mut proposal = state.clone();
            let mut proposal_log_q = log_q;
            if k < self.units.len() {
                let choices = &self.units[k].choices;
                proposal.columns[k] = choices[rng.gen_range(0..choices.len())];
            } else {
                let (chain, q) = self.propose_chain(rng);
                proposal.chain = chain;
                proposal_log_q = q;
            }
            let proposal_score = self.score(&proposal, pos);
            let accept = if score == ninf {
                true
            } else if proposal_score == ninf {
                false
            } else {
                let log_alpha = (proposal_score - score).to_f64_lossy()
                    + if k < self.units.len() { 0.0 } else { log_q - proposal_log_q };
                log_alpha >= 0.0 || rng.gen::<f64>().ln() < log_alpha
            };
            if accept {
                state = proposal;
                score = proposal_score;
                log_q = proposal_log_q;
                *seen_positive |= score > ninf;
            }
        }
        (state, score)
    }

    /// Draws `cfg.sample_count` completions that have positive weight and
    /// match none of `negatives`. Chain `i` uses stream `i` of a generator
    /// seeded with `seed`.
    pub fn sample(&self, negatives: &[Sketch], cfg: &SamplerConfig, seed: u64) -> Result<Vec<Completion>, SamplerError> {
        Ok(self
            .sample_states(negatives, cfg, seed)?
            .into_iter()
            .map(|(_, c)| c)
            .collect())
    }

    pub fn sample_states(
        &self,
        negatives: &[Sketch],
        cfg: &SamplerConfig,
        seed: u64,
    ) -> Result<Vec<(State, Completion)>, SamplerError> {
        cfg.validate()?;
        if self.unit_count() == 0 {
            let done = Completion::try_from(self.sketch.clone()).expect("no units means no holes");
            return Ok(vec![(State::default(), done)]);
        }
        let ninf = S::neg_infinity();
        let mut pos = Vec::new();
        let mut out = Vec::with_capacity(cfg.sample_count);
        let mut seen_positive = false;
        let mut barren = 0;
        for i in 0..cfg.sample_count {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut retries = 0;
            loop {
                let before = seen_positive;
                let mut chain_positive = false;
                let (state, score) = self.run_chain(&mut rng, cfg.mh_steps, &mut pos, &mut chain_positive);
                seen_positive |= chain_positive;
                if score > ninf {
                    let c = self.completion(&state);
                    if !negatives.iter().any(|n| matches(n, &c)) {
                        out.push((state, c));
                        break;
                    }
                } else if !before && !chain_positive {
                    barren += 1;
                    if barren >= BARREN_CHAIN_LIMIT {
                        return no_expansion("no well-formed completion was found");
                    }
                }
                retries += 1;
                if retries > cfg.rejection_retry_limit {
                    return Err(SamplerError::RejectionExhausted {
                        negatives: negatives.len(),
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Compiles `p` and draws samples; a hole-free `p` yields itself.
#[allow(clippy::too_many_arguments)]
pub fn mh_sample<S: Scalar>(
    p: &Sketch,
    theta: &ThetaTable<S>,
    catalog: &Catalog,
    negatives: &[Sketch],
    cfg: &SamplerConfig,
    lambda: S,
) -> Result<Vec<Completion>, SamplerError> {
    if p.is_complete() {
        return Ok(vec![Completion::try_from(p.clone()).expect("hole-free")]);
    }
    Skeleton::compile(p, catalog, theta, lambda, cfg.max_join_depth)?.sample(negatives, cfg, cfg.seed)
}
