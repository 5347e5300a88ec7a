//! HTTP/JSON API over catalogs and synthesis sessions.
//!
//! Every body carries `"v": 1`. Sketch text uses the query language's
//! surface syntax, so clients never handle syntax trees.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value as JsonValue};
use sketchql::catalog::{Preview, SchemaDescriptor};
use sketchql::engine::{EngineError, Status};
use sketchql::eval::evaluate;
use sketchql::{print_sketch, Catalog, CatalogError, EngineConfig, Session};

pub const PREVIEW_ROWS: usize = 5;
const RESULT_ROWS: usize = 20;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: JsonValue,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        ApiError {
            status,
            body: json!({ "v": 1, "error": message.to_string() }),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, r.body_text())
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Parse(p) => {
                let loc = p.location();
                ApiError {
                    status: StatusCode::UNPROCESSABLE_ENTITY,
                    body: json!({ "v": 1, "error": p.to_string(), "location": loc }),
                }
            }
            EngineError::SessionComplete | EngineError::SessionFailed(_) | EngineError::EmptyHistory => {
                ApiError::new(StatusCode::CONFLICT, e)
            }
            EngineError::InvalidSketch(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e),
            _ => ApiError::new(StatusCode::BAD_REQUEST, e),
        }
    }
}

struct SessionEntry {
    database_id: String,
    session: Session,
}

#[derive(Default)]
struct Inner {
    databases: Mutex<HashMap<String, Arc<Catalog>>>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionEntry>>>>,
    next_database: AtomicU64,
    next_session: AtomicU64,
    snapshot_dir: Option<PathBuf>,
}

/// Shared service state; cheap to clone.
#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Writes each session to `dir/<id>.json` after every change.
    pub fn with_snapshots(dir: PathBuf) -> Self {
        AppState {
            inner: Arc::new(Inner {
                snapshot_dir: Some(dir),
                ..Inner::default()
            }),
        }
    }

    /// Registers an already loaded catalog and returns its id.
    pub fn add_database(&self, catalog: Catalog) -> String {
        let id = format!("db{}", self.inner.next_database.fetch_add(1, Ordering::SeqCst) + 1);
        self.inner
            .databases
            .lock()
            .expect("lock")
            .insert(id.clone(), Arc::new(catalog));
        id
    }

    fn database(&self, id: &str) -> Result<Arc<Catalog>, ApiError> {
        self.inner
            .databases
            .lock()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("database", id))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionEntry>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/databases", post(create_database))
        .route("/databases/{id}/tables", get(list_tables))
        .route("/databases/{id}/tables/{table}/preview", get(preview_table))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/answer", post(answer_session))
        .route("/sessions/{id}/undo", post(undo_session))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

/// `schema` is a descriptor object or a server-side path; `data` maps file
/// names to CSV text or names a server-side directory.
#[derive(Deserialize)]
struct DatabaseRequest {
    schema: JsonValue,
    #[serde(default)]
    data: JsonValue,
}

fn load_request(req: DatabaseRequest) -> Result<Catalog, ApiError> {
    let bad = |e: CatalogError| ApiError::new(StatusCode::BAD_REQUEST, e);
    let (descriptor, schema_dir) = match req.schema {
        JsonValue::String(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path).map_err(|source| bad(CatalogError::Io { path: path.clone(), source }))?;
            let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (SchemaDescriptor::from_json(&text).map_err(bad)?, Some(dir))
        }
        obj @ JsonValue::Object(_) => (
            serde_json::from_value::<SchemaDescriptor>(obj)
                .map_err(|e| bad(CatalogError::Schema(e.to_string())))?,
            None,
        ),
        _ => return Err(ApiError::new(StatusCode::BAD_REQUEST, "schema must be an object or a path")),
    };
    match req.data {
        JsonValue::Object(files) => Catalog::load_with(descriptor, |t| match files.get(&t.file).or_else(|| files.get(&t.name)) {
            Some(JsonValue::String(text)) => Ok(text.clone()),
            _ => Err(CatalogError::MissingTableFile {
                table: t.name.clone(),
                file: t.file.clone(),
            }),
        })
        .map_err(bad),
        JsonValue::String(dir) => from_dir(descriptor, Path::new(&dir)).map_err(bad),
        JsonValue::Null => match schema_dir {
            Some(dir) => from_dir(descriptor, &dir).map_err(bad),
            None => Err(ApiError::new(StatusCode::BAD_REQUEST, "data is required with an inline schema")),
        },
        _ => Err(ApiError::new(StatusCode::BAD_REQUEST, "data must be an object or a path")),
    }
}

fn from_dir(descriptor: SchemaDescriptor, dir: &Path) -> Result<Catalog, CatalogError> {
    Catalog::load_with(descriptor, |t| {
        let path = dir.join(&t.file);
        std::fs::read_to_string(&path).map_err(|source| CatalogError::Io { path, source })
    })
}

async fn create_database(
    State(app): State<AppState>,
    body: Result<Json<DatabaseRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let Json(req) = body?;
    let catalog = tokio::task::spawn_blocking(move || load_request(req))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    let tables: Vec<String> = catalog.tables().iter().map(|t| t.name.clone()).collect();
    let id = app.add_database(catalog);
    Ok((StatusCode::CREATED, Json(json!({ "v": 1, "id": id, "tables": tables }))))
}

async fn list_tables(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<JsonValue>, ApiError> {
    let cat = app.database(&id)?;
    let tables: Vec<String> = cat.tables().iter().map(|t| t.name.clone()).collect();
    Ok(Json(json!({ "v": 1, "tables": tables, "schema": cat.descriptor() })))
}

#[derive(Deserialize)]
struct PreviewQuery {
    rows: Option<usize>,
}

fn preview_json(p: &Preview) -> JsonValue {
    json!({ "table": p.table, "headers": p.headers, "rows": p.rows })
}

async fn preview_table(
    State(app): State<AppState>,
    UrlPath((id, table)): UrlPath<(String, String)>,
    Query(q): Query<PreviewQuery>,
) -> Result<Json<JsonValue>, ApiError> {
    let cat = app.database(&id)?;
    let p = cat
        .preview(&table, q.rows.unwrap_or(PREVIEW_ROWS))
        .map_err(|_| ApiError::not_found("table", &table))?;
    let mut body = preview_json(&p);
    body["v"] = json!(1);
    Ok(Json(body))
}

#[derive(Deserialize)]
struct SessionRequest {
    database_id: String,
    sketch: String,
    #[serde(default)]
    config: Option<EngineConfig>,
}

/// The JSON view of a session.
fn resource(id: &str, entry: &SessionEntry) -> JsonValue {
    let s = &entry.session;
    let cat = s.catalog();
    let question = s.pending().map(|p| {
        let previews: Vec<JsonValue> = p
            .question
            .previews(cat, PREVIEW_ROWS)
            .unwrap_or_default()
            .iter()
            .map(preview_json)
            .collect();
        json!({
            "summary": p.question.summary(),
            "target": p.question.seq.target,
            "productions": p.question.seq.productions(),
            "sketch": print_sketch(&p.question.sketch),
            "pi_plus_hat": p.pi_plus_hat,
            "score": p.score,
            "previews": previews,
        })
    });
    let result = s.completion().map(|c| match evaluate(&c, cat) {
        Ok(t) => {
            let (headers, rows) = t.display();
            json!({
                "query": print_sketch(&c),
                "headers": headers,
                "rows": rows.into_iter().take(RESULT_ROWS).collect::<Vec<_>>(),
                "row_count": t.rows.len(),
            })
        }
        Err(e) => json!({ "query": print_sketch(&c), "error": e.to_string() }),
    });
    let history: Vec<JsonValue> = s
        .trace()
        .into_iter()
        .map(|r| json!({ "question": r.question, "answer": r.answer }))
        .collect();
    let status = match s.status() {
        Status::AwaitingAnswer => "awaiting_answer",
        Status::Complete => "complete",
        Status::Failed => "failed",
    };
    json!({
        "v": 1,
        "id": id,
        "database_id": entry.database_id,
        "status": status,
        "sketch": print_sketch(s.sketch()),
        "question": question,
        "negatives": s.state().negatives.iter().map(|q| q.summary()).collect::<Vec<_>>(),
        "history": history,
        "failure": s.state().failure,
        "result": result,
    })
}

impl AppState {
    fn snapshot(&self, id: &str, entry: &SessionEntry) {
        if let Some(dir) = &self.inner.snapshot_dir {
            let body = json!({
                "v": 1,
                "database_id": entry.database_id,
                "catalog_fingerprint": entry.session.catalog().fingerprint(),
                "session": serde_json::from_str::<JsonValue>(&entry.session.to_json()).expect("valid json"),
            });
            let _ = std::fs::create_dir_all(dir);
            let _ = std::fs::write(dir.join(format!("{id}.json")), body.to_string());
        }
    }
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<SessionRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<JsonValue>), ApiError> {
    let Json(req) = body?;
    let cat = app.database(&req.database_id)?;
    let config = req.config.unwrap_or_default();
    let session = tokio::task::spawn_blocking(move || Session::start_text(cat, &req.sketch, config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))??;
    let id = format!("s{}", app.inner.next_session.fetch_add(1, Ordering::SeqCst) + 1);
    let entry = SessionEntry {
        database_id: req.database_id,
        session,
    };
    let body = resource(&id, &entry);
    app.snapshot(&id, &entry);
    app.inner
        .sessions
        .lock()
        .expect("lock")
        .insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<JsonValue>, ApiError> {
    let entry = app.session(&id)?;
    let guard = entry.lock().expect("lock");
    Ok(Json(resource(&id, &guard)))
}

/// Runs `f` on the session under its lock, off the async workers.
async fn mutate<F>(app: AppState, id: String, f: F) -> Result<Json<JsonValue>, ApiError>
where
    F: FnOnce(&mut Session) -> Result<(), EngineError> + Send + 'static,
{
    let entry = app.session(&id)?;
    tokio::task::spawn_blocking(move || {
        let mut guard = entry.lock().expect("lock");
        f(&mut guard.session)?;
        app.snapshot(&id, &guard);
        Ok(Json(resource(&id, &guard)))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
}

#[derive(Deserialize)]
struct AnswerRequest {
    accept: bool,
}

async fn answer_session(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<JsonValue>, ApiError> {
    let Json(req) = body?;
    mutate(app, id, move |s| s.answer(req.accept).map(|_| ())).await
}

async fn undo_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<JsonValue>, ApiError> {
    mutate(app, id, |s| s.undo().map(|_| ())).await
}
