//! In-memory database catalog: typed tables, key declarations and the join
//! graph derived from them.
//!
//! A catalog is loaded from a JSON schema descriptor plus one CSV file per
//! table and is immutable afterwards.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed schema descriptor: {0}")]
    Schema(String),
    #[error("missing data file {file} for table {table}")]
    MissingTableFile { table: String, file: String },
    #[error("csv error in table {table}: {message}")]
    Csv { table: String, message: String },
    #[error("header of {table} is {found:?}, expected {expected:?}")]
    HeaderMismatch {
        table: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("type mismatch at {table} row {row} column {column}: {value:?} is not {expected}")]
    TypeMismatch {
        table: String,
        row: usize,
        column: String,
        value: String,
        expected: ValueType,
    },
    #[error("null cell at {table} row {row} column {column}")]
    NullCell {
        table: String,
        row: usize,
        column: String,
    },
    #[error("row {row} of {table} has {found} cells, expected {expected}")]
    RowWidth {
        table: String,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("foreign key {from} references unknown column {target}")]
    DanglingKeyReference { from: String, target: String },
    #[error("foreign key {from} references {target}, which is not a key column")]
    TargetNotKey { from: String, target: String },
    #[error("duplicate column {0}")]
    DuplicateQualifiedColumn(String),
    #[error("duplicate table {0}")]
    DuplicateTable(String),
    #[error("unknown table {0}")]
    UnknownTable(String),
}

/// Cell type of a column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    Int,
    Float,
    String,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ValueType::Int => "int",
            ValueType::Float => "float",
            ValueType::String => "string",
        })
    }
}

/// A typed cell value. Floats are always finite.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int,
            Value::Float(_) => ValueType::Float,
            Value::Str(_) => ValueType::String,
        }
    }

    pub fn parse_as(text: &str, ty: ValueType) -> Option<Value> {
        match ty {
            ValueType::Int => text.trim().parse().ok().map(Value::Int),
            ValueType::Float => text
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Value::Float),
            ValueType::String => Some(Value::Str(text.to_string())),
        }
    }

    /// Ordering between values of the same type; strings compare bytewise.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            (Value::Float(a), Value::Float(b)) => Some(a.total_cmp(b)),
            (Value::Str(a), Value::Str(b)) => Some(a.as_bytes().cmp(b.as_bytes())),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.compare(other) == Some(Ordering::Equal)
    }
}

impl Eq for Value {}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        match self {
            Value::Int(v) => {
                0u8.hash(state);
                v.hash(state);
            }
            Value::Float(v) => {
                1u8.hash(state);
                v.to_bits().hash(state);
            }
            Value::Str(v) => {
                2u8.hash(state);
                v.hash(state);
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Float(v) => write!(f, "{v:?}"),
            Value::Str(v) => f.write_str(v),
        }
    }
}

/// Qualified column name `table.column`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnName {
    pub table: String,
    pub column: String,
}

impl ColumnName {
    pub fn new(table: impl Into<String>, column: impl Into<String>) -> Self {
        ColumnName {
            table: table.into(),
            column: column.into(),
        }
    }
}

impl fmt::Display for ColumnName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

impl FromStr for ColumnName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('.') {
            Some((t, c)) if !t.is_empty() && !c.is_empty() && !c.contains('.') => {
                Ok(ColumnName::new(t, c))
            }
            _ => Err(format!("expected table.column, got {s:?}")),
        }
    }
}

impl Serialize for ColumnName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColumnName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyRole {
    #[default]
    None,
    Primary,
    Foreign(ColumnName),
}

impl KeyRole {
    pub fn is_key(&self) -> bool {
        !matches!(self, KeyRole::None)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TableId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColumnId(pub u32);

impl TableId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ColumnId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnDef {
    pub table_name: String,
    pub column_name: String,
    pub value_type: ValueType,
    pub key_role: KeyRole,
}

impl ColumnDef {
    pub fn qualified(&self) -> ColumnName {
        ColumnName::new(&self.table_name, &self.column_name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableData {
    pub name: String,
    pub file: String,
    pub columns: Vec<ColumnDef>,
    pub column_ids: Vec<ColumnId>,
    pub rows: Vec<Vec<Value>>,
}

impl TableData {
    pub fn column_position(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.column_name == column)
    }

    pub fn column_values(&self, position: usize) -> impl Iterator<Item = &Value> + '_ {
        self.rows.iter().map(move |r| &r[position])
    }
}

/// A directed view of a key edge, starting at a column of `from_table`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct JoinStep {
    pub from_column: ColumnId,
    pub to_column: ColumnId,
    pub to_table: TableId,
}

/// Key-related column pairs that may be inner-joined.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JoinGraph {
    /// Undirected edges stored as (foreign key, referenced key).
    edges: Vec<(ColumnId, ColumnId)>,
    pairs: HashSet<(ColumnId, ColumnId)>,
    steps: Vec<Vec<JoinStep>>,
}

impl JoinGraph {
    pub fn edges(&self) -> &[(ColumnId, ColumnId)] {
        &self.edges
    }

    pub fn is_edge(&self, a: ColumnId, b: ColumnId) -> bool {
        self.pairs.contains(&(a, b))
    }

    /// Every join step leaving `table`, in edge declaration order.
    pub fn steps_from(&self, table: TableId) -> &[JoinStep] {
        &self.steps[table.index()]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub tables: Vec<TableDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDescriptor {
    pub name: String,
    pub file: String,
    pub columns: Vec<ColumnDescriptor>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDescriptor {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    #[serde(default)]
    pub key: KeyRole,
}

impl SchemaDescriptor {
    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        serde_json::from_str(text).map_err(|e| CatalogError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }
}

/// First rows of a table together with its header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preview {
    pub table: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    tables: Vec<TableData>,
    columns: Vec<ColumnDef>,
    column_tables: Vec<TableId>,
    table_index: HashMap<String, TableId>,
    column_index: HashMap<ColumnName, ColumnId>,
    bare_index: HashMap<String, Vec<ColumnId>>,
    join_graph: JoinGraph,
}

/// Loads a database from a schema descriptor file and a directory of CSVs.
pub fn load_database(schema: &Path, data_dir: &Path) -> Result<Catalog, CatalogError> {
    let text = std::fs::read_to_string(schema).map_err(|source| CatalogError::Io {
        path: schema.to_path_buf(),
        source,
    })?;
    let descriptor = SchemaDescriptor::from_json(&text)?;
    Catalog::load_with(descriptor, |table| {
        let path = data_dir.join(&table.file);
        if !path.is_file() {
            return Err(CatalogError::MissingTableFile {
                table: table.name.clone(),
                file: table.file.clone(),
            });
        }
        std::fs::read_to_string(&path).map_err(|source| CatalogError::Io { path, source })
    })
}

impl Catalog {
    /// Builds a catalog, fetching each table's CSV text through `fetch`.
    pub fn load_with<F>(descriptor: SchemaDescriptor, mut fetch: F) -> Result<Self, CatalogError>
    where
        F: FnMut(&TableDescriptor) -> Result<String, CatalogError>,
    {
        let mut rows = Vec::with_capacity(descriptor.tables.len());
        for table in &descriptor.tables {
            let text = fetch(table)?;
            rows.push(parse_csv(table, text.as_bytes())?);
        }
        Catalog::from_parts(descriptor, rows)
    }

    /// Builds a catalog from a descriptor and already-typed rows.
    pub fn from_parts(
        descriptor: SchemaDescriptor,
        table_rows: Vec<Vec<Vec<Value>>>,
    ) -> Result<Self, CatalogError> {
        assert_eq!(descriptor.tables.len(), table_rows.len());
        let mut catalog = Catalog {
            tables: Vec::new(),
            columns: Vec::new(),
            column_tables: Vec::new(),
            table_index: HashMap::new(),
            column_index: HashMap::new(),
            bare_index: HashMap::new(),
            join_graph: JoinGraph::default(),
        };
        for (desc, rows) in descriptor.tables.into_iter().zip(table_rows) {
            let table_id = TableId(catalog.tables.len() as u32);
            if catalog.table_index.insert(desc.name.clone(), table_id).is_some() {
                return Err(CatalogError::DuplicateTable(desc.name));
            }
            let mut defs = Vec::new();
            let mut ids = Vec::new();
            for col in desc.columns {
                let def = ColumnDef {
                    table_name: desc.name.clone(),
                    column_name: col.name,
                    value_type: col.value_type,
                    key_role: col.key,
                };
                let id = ColumnId(catalog.columns.len() as u32);
                if catalog.column_index.insert(def.qualified(), id).is_some() {
                    return Err(CatalogError::DuplicateQualifiedColumn(def.qualified().to_string()));
                }
                catalog
                    .bare_index
                    .entry(def.column_name.clone())
                    .or_default()
                    .push(id);
                catalog.columns.push(def.clone());
                catalog.column_tables.push(table_id);
                defs.push(def);
                ids.push(id);
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != defs.len() {
                    return Err(CatalogError::RowWidth {
                        table: desc.name.clone(),
                        row: r,
                        expected: defs.len(),
                        found: row.len(),
                    });
                }
                for (cell, def) in row.iter().zip(&defs) {
                    let bad_float = matches!(cell, Value::Float(x) if !x.is_finite());
                    if cell.value_type() != def.value_type || bad_float {
                        return Err(CatalogError::TypeMismatch {
                            table: desc.name.clone(),
                            row: r,
                            column: def.column_name.clone(),
                            value: cell.to_string(),
                            expected: def.value_type,
                        });
                    }
                }
            }
            catalog.tables.push(TableData {
                name: desc.name,
                file: desc.file,
                columns: defs,
                column_ids: ids,
                rows,
            });
        }
        catalog.join_graph = catalog.build_join_graph()?;
        Ok(catalog)
    }

    fn build_join_graph(&self) -> Result<JoinGraph, CatalogError> {
        let mut graph = JoinGraph {
            steps: vec![Vec::new(); self.tables.len()],
            ..JoinGraph::default()
        };
        for (i, def) in self.columns.iter().enumerate() {
            let KeyRole::Foreign(target) = &def.key_role else {
                continue;
            };
            let from = def.qualified().to_string();
            let Some(&target_id) = self.column_index.get(target) else {
                return Err(CatalogError::DanglingKeyReference {
                    from,
                    target: target.to_string(),
                });
            };
            if !self.columns[target_id.index()].key_role.is_key() {
                return Err(CatalogError::TargetNotKey {
                    from,
                    target: target.to_string(),
                });
            }
            let a = ColumnId(i as u32);
            let b = target_id;
            if graph.pairs.contains(&(a, b)) {
                continue;
            }
            graph.edges.push((a, b));
            graph.pairs.insert((a, b));
            graph.pairs.insert((b, a));
            let (ta, tb) = (self.column_tables[a.index()], self.column_tables[b.index()]);
            graph.steps[ta.index()].push(JoinStep {
                from_column: a,
                to_column: b,
                to_table: tb,
            });
            graph.steps[tb.index()].push(JoinStep {
                from_column: b,
                to_column: a,
                to_table: ta,
            });
        }
        Ok(graph)
    }

    pub fn tables(&self) -> &[TableData] {
        &self.tables
    }

    pub fn table_count(&self) -> usize {
        self.tables.len()
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn table(&self, id: TableId) -> &TableData {
        &self.tables[id.index()]
    }

    pub fn table_id(&self, name: &str) -> Option<TableId> {
        self.table_index.get(name).copied()
    }

    pub fn table_by_name(&self, name: &str) -> Result<&TableData, CatalogError> {
        self.table_id(name)
            .map(|id| self.table(id))
            .ok_or_else(|| CatalogError::UnknownTable(name.to_string()))
    }

    pub fn column(&self, id: ColumnId) -> &ColumnDef {
        &self.columns[id.index()]
    }

    pub fn columns(&self) -> &[ColumnDef] {
        &self.columns
    }

    pub fn column_ids(&self) -> impl Iterator<Item = ColumnId> {
        (0..self.columns.len() as u32).map(ColumnId)
    }

    pub fn column_table(&self, id: ColumnId) -> TableId {
        self.column_tables[id.index()]
    }

    pub fn column_id(&self, name: &ColumnName) -> Option<ColumnId> {
        self.column_index.get(name).copied()
    }

    /// Columns whose unqualified name is `name`.
    pub fn columns_named(&self, name: &str) -> &[ColumnId] {
        self.bare_index.get(name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn join_graph(&self) -> &JoinGraph {
        &self.join_graph
    }

    /// Values of a column in its base table, in file order.
    pub fn column_values(&self, id: ColumnId) -> impl Iterator<Item = &Value> + '_ {
        let table = self.table(self.column_table(id));
        let pos = table
            .column_ids
            .iter()
            .position(|c| *c == id)
            .expect("column belongs to its table");
        table.column_values(pos)
    }

    pub fn preview(&self, table: &str, k: usize) -> Result<Preview, CatalogError> {
        let data = self.table_by_name(table)?;
        Ok(Preview {
            table: data.name.clone(),
            headers: data.columns.iter().map(|c| c.column_name.clone()).collect(),
            rows: data.rows.iter().take(k).cloned().collect(),
        })
    }

    /// Key-join partners of `left`: (left column, right column, right table).
    pub fn join_candidates(
        &self,
        left: &str,
    ) -> Result<Vec<(ColumnName, ColumnName, String)>, CatalogError> {
        let id = self
            .table_id(left)
            .ok_or_else(|| CatalogError::UnknownTable(left.to_string()))?;
        let mut out: Vec<(ColumnName, ColumnName, String)> = Vec::new();
        for step in self.join_graph.steps_from(id) {
            let triple = (
                self.column(step.from_column).qualified(),
                self.column(step.to_column).qualified(),
                self.table(step.to_table).name.clone(),
            );
            if !out.contains(&triple) {
                out.push(triple);
            }
        }
        Ok(out)
    }

    pub fn descriptor(&self) -> SchemaDescriptor {
        SchemaDescriptor {
            tables: self
                .tables
                .iter()
                .map(|t| TableDescriptor {
                    name: t.name.clone(),
                    file: t.file.clone(),
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ColumnDescriptor {
                            name: c.column_name.clone(),
                            value_type: c.value_type,
                            key: c.key_role.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Writes `schema.json` and one CSV per table into `dir`.
    pub fn write_database(&self, dir: &Path) -> Result<PathBuf, CatalogError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CatalogError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        for table in &self.tables {
            let path = dir.join(&table.file);
            std::fs::write(&path, self.table_csv(table)).map_err(io(&path))?;
        }
        let schema = dir.join("schema.json");
        std::fs::write(&schema, self.descriptor().to_json()).map_err(io(&schema))?;
        Ok(schema)
    }

    pub fn table_csv(&self, table: &TableData) -> String {
        let headers: Vec<String> = table.columns.iter().map(|c| c.column_name.clone()).collect();
        write_csv(&headers, &table.rows)
    }

    /// Content hash over schema and cells, used to key cached precomputations.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.descriptor().to_json().as_bytes());
        for table in &self.tables {
            hasher.update(self.table_csv(table).as_bytes());
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// RFC-4180 CSV with a header row.
pub fn write_csv(headers: &[String], rows: &[Vec<Value>]) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(headers).expect("in-memory write");
    for row in rows {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf8 csv")
}

fn parse_csv<R: Read>(table: &TableDescriptor, input: R) -> Result<Vec<Vec<Value>>, CatalogError> {
    let csv_err = |e: csv::Error| CatalogError::Csv {
        table: table.name.clone(),
        message: e.to_string(),
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let expected: Vec<String> = table.columns.iter().map(|c| c.name.clone()).collect();
    let found: Vec<String> = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if found != expected {
        return Err(CatalogError::HeaderMismatch {
            table: table.name.clone(),
            expected,
            found,
        });
    }
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != table.columns.len() {
            return Err(CatalogError::RowWidth {
                table: table.name.clone(),
                row: r,
                expected: table.columns.len(),
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(record.len());
        for (cell, col) in record.iter().zip(&table.columns) {
            if cell.is_empty() {
                return Err(CatalogError::NullCell {
                    table: table.name.clone(),
                    row: r,
                    column: col.name.clone(),
                });
            }
            let value = Value::parse_as(cell, col.value_type).ok_or_else(|| {
                CatalogError::TypeMismatch {
                    table: table.name.clone(),
                    row: r,
                    column: col.name.clone(),
                    value: cell.to_string(),
                    expected: col.value_type,
                }
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn library_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/library")
    }

    pub(crate) fn library() -> Catalog {
        let dir = library_dir();
        load_database(&dir.join("schema.json"), &dir).unwrap()
    }

    fn inline(schema: &str, files: &[(&str, &str)]) -> Result<Catalog, CatalogError> {
        let descriptor = SchemaDescriptor::from_json(schema)?;
        Catalog::load_with(descriptor, |t| {
            files
                .iter()
                .find(|(f, _)| *f == t.file)
                .map(|(_, text)| text.to_string())
                .ok_or_else(|| CatalogError::MissingTableFile {
                    table: t.name.clone(),
                    file: t.file.clone(),
                })
        })
    }

    #[test]
    fn loads_library() {
        let cat = library();
        assert_eq!(cat.table_count(), 3);
        let names: Vec<_> = cat.tables().iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["authors", "writes", "publications"]);
        let edges: HashSet<(String, String)> = cat
            .join_graph()
            .edges()
            .iter()
            .map(|(a, b)| {
                let mut pair = [cat.column(*a).qualified().to_string(), cat.column(*b).qualified().to_string()];
                pair.sort();
                (pair[0].clone(), pair[1].clone())
            })
            .collect();
        let expected: HashSet<(String, String)> = [
            ("authors.aid".to_string(), "writes.aid".to_string()),
            ("publications.pid".to_string(), "writes.pid".to_string()),
        ]
        .into_iter()
        .collect();
        assert_eq!(edges, expected);
        assert_eq!(
            cat.table_by_name("publications").unwrap().rows[0][1],
            Value::Str("Computability and λ-definability".into())
        );
    }

    #[test]
    fn empty_schema_gives_empty_catalog() {
        let cat = inline(r#"{"tables": []}"#, &[]).unwrap();
        assert_eq!(cat.table_count(), 0);
        assert!(cat.join_graph().edges().is_empty());
    }

    #[test]
    fn dangling_key_is_rejected() {
        let schema = r#"{"tables": [
            {"name": "authors", "file": "a.csv", "columns": [{"name": "aid", "type": "int", "key": "primary"}]},
            {"name": "writes", "file": "w.csv", "columns": [{"name": "aid", "type": "int", "key": {"foreign": "authors.bogus"}}]}
        ]}"#;
        let err = inline(schema, &[("a.csv", "aid\n0\n"), ("w.csv", "aid\n0\n")]).unwrap_err();
        assert!(matches!(err, CatalogError::DanglingKeyReference { .. }), "{err}");
    }

    #[test]
    fn key_target_must_be_a_key() {
        let schema = r#"{"tables": [
            {"name": "a", "file": "a.csv", "columns": [{"name": "x", "type": "int"}]},
            {"name": "b", "file": "b.csv", "columns": [{"name": "y", "type": "int", "key": {"foreign": "a.x"}}]}
        ]}"#;
        let err = inline(schema, &[("a.csv", "x\n0\n"), ("b.csv", "y\n0\n")]).unwrap_err();
        assert!(matches!(err, CatalogError::TargetNotKey { .. }));
    }

    #[test]
    fn bad_cells_and_files() {
        let schema = r#"{"tables": [{"name": "a", "file": "a.csv", "columns": [{"name": "x", "type": "int"}, {"name": "s", "type": "string"}]}]}"#;
        let err = inline(schema, &[("a.csv", "x,s\n1,ok\nnope,bad\n")]).unwrap_err();
        match err {
            CatalogError::TypeMismatch { row, column, .. } => assert_eq!((row, column.as_str()), (1, "x")),
            other => panic!("{other}"),
        }
        let err = inline(schema, &[("a.csv", "x,s\n1,\n")]).unwrap_err();
        assert!(matches!(err, CatalogError::NullCell { .. }));
        let err = inline(schema, &[("a.csv", "s,x\nok,1\n")]).unwrap_err();
        assert!(matches!(err, CatalogError::HeaderMismatch { .. }));
        let err = inline(schema, &[]).unwrap_err();
        assert!(matches!(err, CatalogError::MissingTableFile { .. }));
        let dup = r#"{"tables": [{"name": "a", "file": "a.csv", "columns": [{"name": "x", "type": "int"}, {"name": "x", "type": "int"}]}]}"#;
        let err = inline(dup, &[("a.csv", "x,x\n1,1\n")]).unwrap_err();
        assert!(matches!(err, CatalogError::DuplicateQualifiedColumn(_)));
    }

    #[test]
    fn missing_file_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let schema = dir.path().join("schema.json");
        std::fs::write(
            &schema,
            r#"{"tables": [{"name": "a", "file": "a.csv", "columns": [{"name": "x", "type": "int"}]}]}"#,
        )
        .unwrap();
        let err = load_database(&schema, dir.path()).unwrap_err();
        assert!(matches!(err, CatalogError::MissingTableFile { .. }));
    }

    #[test]
    fn previews() {
        let cat = library();
        let p = cat.preview("authors", 2).unwrap();
        assert_eq!(p.headers, ["aid", "name"]);
        assert_eq!(p.rows.len(), 2);
        assert_eq!(p.rows[1][1], Value::Str("Alonzo Church".into()));
        let p = cat.preview("authors", 0).unwrap();
        assert_eq!(p.headers.len(), 2);
        assert!(p.rows.is_empty());
        assert_eq!(cat.preview("publications", 10).unwrap().rows.len(), 3);
        assert!(matches!(cat.preview("nope", 1), Err(CatalogError::UnknownTable(_))));
        for k in 0..4 {
            let short = cat.preview("writes", k).unwrap().rows;
            let long = cat.preview("writes", k + 1).unwrap().rows;
            assert_eq!(short[..], long[..short.len()]);
        }
    }

    /// Brute force over the declared keys: every (fk, target) pair touching
    /// the table, in either orientation.
    fn declared_partners(cat: &Catalog, table: &str) -> HashSet<(String, String, String)> {
        let mut out = HashSet::new();
        for def in cat.columns() {
            if let KeyRole::Foreign(target) = &def.key_role {
                if def.table_name == table {
                    out.insert((def.qualified().to_string(), target.to_string(), target.table.clone()));
                }
                if target.table == table {
                    out.insert((target.to_string(), def.qualified().to_string(), def.table_name.clone()));
                }
            }
        }
        out
    }

    #[test]
    fn join_candidates_match_declared_keys() {
        let cat = library();
        let got = cat.join_candidates("authors").unwrap();
        assert_eq!(
            got,
            vec![(ColumnName::new("authors", "aid"), ColumnName::new("writes", "aid"), "writes".to_string())]
        );
        let got = cat.join_candidates("publications").unwrap();
        assert_eq!(
            got,
            vec![(
                ColumnName::new("publications", "pid"),
                ColumnName::new("writes", "pid"),
                "writes".to_string()
            )]
        );
        for t in ["authors", "writes", "publications"] {
            let got: HashSet<_> = cat
                .join_candidates(t)
                .unwrap()
                .into_iter()
                .map(|(a, b, c)| (a.to_string(), b.to_string(), c))
                .collect();
            assert_eq!(got, declared_partners(&cat, t));
        }
    }

    #[test]
    fn keyless_table_has_no_join_candidates() {
        let schema = r#"{"tables": [{"name": "a", "file": "a.csv", "columns": [{"name": "x", "type": "int"}]}]}"#;
        let cat = inline(schema, &[("a.csv", "x\n1\n")]).unwrap();
        assert!(cat.join_candidates("a").unwrap().is_empty());
        assert!(cat.join_candidates("zzz").is_err());
    }

    #[test]
    fn schema_round_trip() {
        let cat = library();
        let dir = tempfile::tempdir().unwrap();
        let schema = cat.write_database(dir.path()).unwrap();
        let again = load_database(&schema, dir.path()).unwrap();
        assert_eq!(cat, again);
        assert_eq!(cat.fingerprint(), again.fingerprint());
    }
}
