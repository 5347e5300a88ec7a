//! Benchmark cases, metrics, and a generator for synthetic catalogs.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{
    load_database, Catalog, CatalogError, ColumnDescriptor, ColumnId, KeyRole, SchemaDescriptor, TableDescriptor,
    TableId, Value, ValueType,
};
use crate::engine::{run_batch, BatchLimits, BatchStatus, EngineConfig, EngineError, Mode, TraceRecord};
use crate::eval::evaluate_table;
use crate::lang::{
    parse_completion, parse_sketch, print_sketch, ColumnExpr, Completion, Literal, ParseError, Predicate, Primitive,
    RelOp, SelectNode, Sketch, SoftConstraint, SoftOp, TableExpr, TableNode,
};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("{file}: {source}")]
    Parse {
        file: PathBuf,
        #[source]
        source: ParseError,
    },
}

fn read(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One manifest line; paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(default)]
    pub name: Option<String>,
    pub schema: PathBuf,
    pub data: PathBuf,
    pub sketch: PathBuf,
    pub ground_truth: PathBuf,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>, BenchError> {
    let text = read(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| BenchError::Manifest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(entries
        .into_iter()
        .map(|e| ManifestEntry {
            name: e.name,
            schema: base.join(e.schema),
            data: base.join(e.data),
            sketch: base.join(e.sketch),
            ground_truth: base.join(e.ground_truth),
        })
        .collect())
}

#[derive(Clone, Debug)]
pub struct BenchCase {
    pub name: String,
    pub catalog: Arc<Catalog>,
    pub sketch: Sketch,
    pub truth: Completion,
}

impl BenchCase {
    pub fn load(entry: &ManifestEntry) -> Result<Self, BenchError> {
        let catalog = load_database(&entry.schema, &entry.data)?;
        let parse_err = |file: &Path| {
            let file = file.to_path_buf();
            move |source| BenchError::Parse { file, source }
        };
        let sketch = parse_sketch(&read(&entry.sketch)?, &catalog).map_err(parse_err(&entry.sketch))?;
        let truth = parse_completion(&read(&entry.ground_truth)?, &catalog).map_err(parse_err(&entry.ground_truth))?;
        let name = entry.name.clone().unwrap_or_else(|| {
            entry
                .sketch
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        Ok(BenchCase {
            name,
            catalog: Arc::new(catalog),
            sketch,
            truth,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Complete,
    Failed,
    Timeout,
    NotDerivable,
    InputError,
}

/// One JSON-lines metrics record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub case: String,
    pub mode: Mode,
    pub iterations: usize,
    pub accepts: usize,
    pub rejects: usize,
    /// Wall time; left out unless timing is requested so that reruns are
    /// byte-identical.
    pub seconds: Option<f64>,
    pub status: CaseStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Metrics {
    pub fn input_error(case: &str, mode: Mode, detail: String) -> Self {
        Metrics {
            case: case.to_string(),
            mode,
            iterations: 0,
            accepts: 0,
            rejects: 0,
            seconds: None,
            status: CaseStatus::InputError,
            detail: Some(detail),
        }
    }
}

pub fn run_case<S: Scalar>(
    case: &BenchCase,
    config: &EngineConfig,
    mode: Mode,
    limits: &BatchLimits,
    timing: bool,
) -> Metrics {
    run_case_traced::<S>(case, config, mode, limits, timing).0
}

/// Like [`run_case`], also returning the answered questions.
pub fn run_case_traced<S: Scalar>(
    case: &BenchCase,
    config: &EngineConfig,
    mode: Mode,
    limits: &BatchLimits,
    timing: bool,
) -> (Metrics, Vec<TraceRecord>) {
    match run_batch::<S>(case.catalog.clone(), &case.sketch, &case.truth, config, mode, limits) {
        Ok(out) => {
            let status = match out.status {
                BatchStatus::Complete if out.completion.as_ref() == Some(&expected_truth(case, mode)) => CaseStatus::Complete,
                BatchStatus::Complete | BatchStatus::Failed => CaseStatus::Failed,
                BatchStatus::Timeout => CaseStatus::Timeout,
            };
            let metrics = Metrics {
                case: case.name.clone(),
                mode,
                iterations: out.iterations,
                accepts: out.accepts,
                rejects: out.rejects,
                seconds: timing.then_some(out.elapsed.as_secs_f64()),
                status,
                detail: out.failure.map(|f| f.message),
            };
            (metrics, out.trace)
        }
        Err(e) => {
            let status = match e {
                EngineError::GroundTruthNotDerivable => CaseStatus::NotDerivable,
                _ => CaseStatus::InputError,
            };
            let metrics = Metrics {
                status,
                ..Metrics::input_error(&case.name, mode, e.to_string())
            };
            (metrics, Vec::new())
        }
    }
}

fn expected_truth(case: &BenchCase, mode: Mode) -> Completion {
    match mode {
        Mode::NoSoft => Completion::try_from(case.truth.strip_soft()).expect("complete"),
        _ => case.truth.clone(),
    }
}

pub fn metrics_jsonl(rows: &[Metrics]) -> String {
    rows.iter()
        .map(|m| serde_json::to_string(m).expect("metrics serialize") + "\n")
        .collect()
}

pub fn median(values: &mut [usize]) -> f64 {
    values.sort_unstable();
    let n = values.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => values[n / 2] as f64,
        _ => (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0,
    }
}

/// Shape of generated catalogs and queries.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub min_tables: usize,
    pub max_tables: usize,
    /// Non-key columns per table, at least one.
    pub max_payload: usize,
    pub rows: usize,
    /// Tables in the planted join chain.
    pub max_chain: usize,
    pub max_project: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            min_tables: 3,
            max_tables: 5,
            max_payload: 3,
            rows: 8,
            max_chain: 3,
            max_project: 2,
        }
    }
}

const SYLLABLES: [&str; 12] = ["ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ba", "de", "pu", "zo"];

fn word<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).expect("nonempty")).collect()
}

/// A random key tree: table `i > 0` references a uniformly chosen earlier
/// table. Every column name carries its table's prefix.
pub fn synthetic_catalog<R: Rng>(rng: &mut R, params: &SynthParams) -> Catalog {
    let n = rng.gen_range(params.min_tables..=params.max_tables.max(params.min_tables));
    let mut descriptor = SchemaDescriptor { tables: Vec::new() };
    let mut rows = Vec::new();
    for i in 0..n {
        let name = format!("t{i}");
        let mut columns = vec![ColumnDescriptor {
            name: format!("{name}_id"),
            value_type: ValueType::Int,
            key: KeyRole::Primary,
        }];
        let parent = (i > 0).then(|| rng.gen_range(0..i));
        if let Some(p) = parent {
            columns.push(ColumnDescriptor {
                name: format!("{name}_ref"),
                value_type: ValueType::Int,
                key: KeyRole::Foreign(crate::catalog::ColumnName::new(format!("t{p}"), format!("t{p}_id"))),
            });
        }
        let payload = rng.gen_range(1..=params.max_payload.max(1));
        let mut kinds = Vec::new();
        for k in 0..payload {
            let ty = if rng.gen_bool(0.5) { ValueType::Int } else { ValueType::String };
            let base: i64 = rng.gen_range(0..500);
            kinds.push((ty, base));
            columns.push(ColumnDescriptor {
                name: format!("{name}_x{k}"),
                value_type: ty,
                key: KeyRole::None,
            });
        }
        let table_rows: Vec<Vec<Value>> = (1..=params.rows)
            .map(|r| {
                let mut row = vec![Value::Int(r as i64)];
                if parent.is_some() {
                    row.push(Value::Int(rng.gen_range(1..=params.rows) as i64));
                }
                for (ty, base) in &kinds {
                    row.push(match ty {
                        ValueType::String => Value::Str(word(rng)),
                        _ => Value::Int(base + rng.gen_range(0..60)),
                    });
                }
                row
            })
            .collect();
        descriptor.tables.push(TableDescriptor {
            file: format!("{name}.csv"),
            name,
            columns,
        });
        rows.push(table_rows);
    }
    Catalog::from_parts(descriptor, rows).expect("generated catalogs are well formed")
}

fn literal(v: &Value) -> Literal {
    match v {
        Value::Int(i) => Literal::Int(*i),
        Value::Float(f) => Literal::Float(*f),
        Value::Str(s) => Literal::Str(s.clone()),
    }
}

/// A random catalog with a planted query and a sketch of it: the join chain
/// becomes a table hole, every column a linked column hole, and each column
/// gets one soft constraint drawn from its data.
pub fn synthetic_case(seed: u64, params: &SynthParams) -> BenchCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let catalog = synthetic_catalog(&mut rng, params);
        if let Some((sketch, truth)) = plant_query(&mut rng, &catalog, params) {
            return BenchCase {
                name: format!("synth-{seed}"),
                catalog: Arc::new(catalog),
                sketch,
                truth,
            };
        }
    }
}

pub fn synthetic_suite(seed: u64, count: usize, params: &SynthParams) -> Vec<BenchCase> {
    (0..count as u64).map(|i| synthetic_case(seed.wrapping_add(i), params)).collect()
}

fn plant_query<R: Rng>(rng: &mut R, catalog: &Catalog, params: &SynthParams) -> Option<(Sketch, Completion)> {
    let graph = catalog.join_graph();
    let len = rng.gen_range(1..=params.max_chain.max(1));
    let mut tables = vec![TableId(rng.gen_range(0..catalog.table_count()) as u32)];
    let mut steps = Vec::new();
    while tables.len() < len {
        let cur = *tables.last().expect("nonempty");
        let options: Vec<_> = graph
            .steps_from(cur)
            .iter()
            .filter(|s| !tables.contains(&s.to_table))
            .collect();
        let Some(step) = options.choose(rng) else { break };
        steps.push(**step);
        tables.push(step.to_table);
    }
    let name = |t: TableId| catalog.table(t).name.clone();
    let col = |c: ColumnId| ColumnExpr::Const(catalog.column(c).qualified());
    let mut chain = TableExpr::Base(name(*tables.last().expect("nonempty")));
    for (i, s) in steps.iter().enumerate().rev() {
        chain = TableExpr::join(&name(tables[i]), col(s.from_column), col(s.to_column), chain);
    }

    let joined = evaluate_table(&chain, catalog).ok()?;
    let row = joined.rows.choose(rng)?.clone();
    let payload: Vec<ColumnId> = catalog
        .column_ids()
        .filter(|c| tables.contains(&catalog.column_table(*c)) && !catalog.column(*c).key_role.is_key())
        .collect();
    let n_project = rng.gen_range(1..=params.max_project.max(1)).min(payload.len());
    let project: Vec<ColumnId> = payload.choose_multiple(rng, n_project).copied().collect();
    let filter = *payload.choose(rng)?;
    let filter_name = catalog.column(filter).qualified();
    let filter_value = &row[joined.position(&filter_name)?];

    let mut mentioned = project.clone();
    if !mentioned.contains(&filter) {
        mentioned.push(filter);
    }
    let mut soft = SoftConstraint::default();
    for c in &mentioned {
        let values: Vec<&Value> = catalog.column_values(*c).collect();
        match catalog.column(*c).value_type {
            ValueType::String => {
                let v = if *c == filter { filter_value } else { *values.choose(rng)? };
                soft.conjuncts.push(Primitive::In {
                    value: literal(v),
                    column: col(*c),
                });
            }
            _ => {
                let lo = values.iter().min_by(|a, b| a.compare(b).expect("same type"))?;
                let hi = values.iter().max_by(|a, b| a.compare(b).expect("same type"))?;
                soft.conjuncts.push(Primitive::Compare {
                    column: col(*c),
                    op: SoftOp::Ge,
                    value: literal(lo),
                });
                soft.conjuncts.push(Primitive::Compare {
                    column: col(*c),
                    op: SoftOp::Le,
                    value: literal(hi),
                });
            }
        }
    }

    let truth = Sketch {
        project: project.iter().map(|c| col(*c)).collect(),
        select: SelectNode {
            predicate: Predicate::Compare {
                column: col(filter),
                op: RelOp::Eq,
                value: literal(filter_value),
            },
            source: TableNode { expr: chain, soft },
            soft: SoftConstraint::default(),
        },
        soft: SoftConstraint::default(),
    };
    let mut sketch = truth.clone();
    let hole_of = |c: &crate::catalog::ColumnName| {
        let i = mentioned
            .iter()
            .position(|m| catalog.column(*m).qualified() == *c)
            .expect("every column is mentioned");
        format!("c{i}")
    };
    sketch.map_columns(&mut |c| {
        if let ColumnExpr::Const(name) = c {
            let join_column = !payload.iter().any(|p| catalog.column(*p).qualified() == *name);
            if !join_column {
                *c = ColumnExpr::Hole(hole_of(name));
            }
        }
    });
    sketch.tail_node_mut().expr = TableExpr::Hole("t".into());
    let truth = Completion::try_from(truth).expect("planted queries have no holes");
    Some((sketch, truth))
}

/// Writes a generated suite as CSV files, schemas, sketches and a manifest.
pub fn write_suite(dir: &Path, cases: &[BenchCase]) -> Result<PathBuf, BenchError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| BenchError::Io { path, source }
    };
    let mut manifest = Vec::new();
    for case in cases {
        let case_dir = dir.join(&case.name);
        std::fs::create_dir_all(&case_dir).map_err(io(&case_dir))?;
        let schema = case.catalog.write_database(&case_dir)?;
        let sketch = case_dir.join("query.sketch");
        std::fs::write(&sketch, print_sketch(&case.sketch) + "\n").map_err(io(&sketch))?;
        let truth = case_dir.join("query.truth");
        std::fs::write(&truth, print_sketch(&case.truth) + "\n").map_err(io(&truth))?;
        let rel = |p: &Path| p.strip_prefix(dir).expect("inside suite dir").to_path_buf();
        manifest.push(ManifestEntry {
            name: Some(case.name.clone()),
            schema: rel(&schema),
            data: rel(&case_dir),
            sketch: rel(&sketch),
            ground_truth: rel(&truth),
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io(&path))?;
    Ok(path)
}

/// Budget used when none is given.
pub const DEFAULT_TIME_BUDGET: Duration = Duration::from_secs(3600);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::matches;
    use crate::softsem::{precompute_theta, score_completion};

    #[test]
    fn synthetic_truth_derives_from_sketch_and_is_well_formed() {
        for seed in 0..40 {
            let case = synthetic_case(seed, &SynthParams::default());
            assert!(matches(&case.sketch, &case.truth), "seed {seed}");
            let theta = precompute_theta::<f64>(&case.sketch, &case.catalog);
            let score = score_completion(&case.truth, &theta, &case.catalog, 0.0);
            assert!(score.is_finite(), "seed {seed}");
            let rows = crate::eval::evaluate(&case.truth, &case.catalog).unwrap();
            assert!(!rows.rows.is_empty());
            // The printed forms parse back to the same trees.
            let text = print_sketch(&case.sketch);
            assert_eq!(parse_sketch(&text, &case.catalog).unwrap(), case.sketch, "{text}");
            let text = print_sketch(&case.truth);
            assert_eq!(parse_completion(&text, &case.catalog).unwrap(), case.truth, "{text}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synthetic_case(9, &SynthParams::default());
        let b = synthetic_case(9, &SynthParams::default());
        assert_eq!(a.sketch, b.sketch);
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.catalog.fingerprint(), b.catalog.fingerprint());
    }

    #[test]
    fn library_manifest_loads() {
        let dir = crate::catalog::tests::library_dir();
        let entries = load_manifest(&dir.join("manifest.json")).unwrap();
        assert_eq!(entries.len(), 3);
        for e in &entries {
            let case = BenchCase::load(e).unwrap();
            assert!(matches(&case.sketch, &case.truth), "{}", case.name);
        }
    }

    #[test]
    fn suite_round_trips_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let cases = synthetic_suite(3, 2, &SynthParams::default());
        let manifest = write_suite(dir.path(), &cases).unwrap();
        let loaded: Vec<BenchCase> = load_manifest(&manifest)
            .unwrap()
            .iter()
            .map(|e| BenchCase::load(e).unwrap())
            .collect();
        for (a, b) in cases.iter().zip(&loaded) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.sketch, b.sketch);
            assert_eq!(a.truth, b.truth);
            assert_eq!(a.catalog.fingerprint(), b.catalog.fingerprint());
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3, 1, 2]), 2.0);
        assert_eq!(median(&mut [4, 1, 3, 2]), 2.5);
    }
}
