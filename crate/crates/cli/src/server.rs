//! HTTP+JSON API for interactive sessions.
//!
//! Every response body carries `schemaVersion`. Errors use
//! `{"schemaVersion", "error": {"code", "message"}}` with 400 for malformed
//! requests, 404 for unknown sessions or tables and 410 for expired sessions.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use convtab::data::DataError;
use convtab::lf::{Action, LogicalForm};
use convtab::pipeline::{answer, new_session, ConversationState, ParseConfig};
use convtab::scorer::ModelWeights;
use convtab::session::{SessionError, SessionStore};
use convtab::table::{load_table_file, Table};

pub const SCHEMA_VERSION: &str = "1";

/// A session as the server keeps it: parser state plus the responses sent.
pub struct ServerSession {
    pub table_id: String,
    pub state: ConversationState,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub question: String,
    pub response: AskResponse,
}

#[derive(Clone)]
pub struct AppState {
    pub model: Arc<ModelWeights>,
    pub tables: Arc<BTreeMap<String, Arc<Table>>>,
    pub sessions: Arc<SessionStore<ServerSession>>,
    pub parse: ParseConfig,
}

impl AppState {
    pub fn new(model: ModelWeights, tables: Vec<Table>, idle_timeout: Duration, parse: ParseConfig) -> Self {
        AppState {
            model: Arc::new(model),
            tables: Arc::new(tables.into_iter().map(|t| (t.id.clone(), Arc::new(t))).collect()),
            sessions: Arc::new(SessionStore::new(idle_timeout)),
            parse,
        }
    }
}

/// Loads every `.csv`/`.tsv` file in `dir`; table ids are the file stems.
pub fn load_table_dir(dir: &Path) -> Result<Vec<Table>, DataError> {
    let io = |source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "tsv")))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_table_file(p).map_err(DataError::from)).collect()
}

struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_session", e.to_string()),
            SessionError::Expired(_) => ApiError::new(StatusCode::GONE, "session_expired", e.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "schemaVersion": SCHEMA_VERSION,
            "error": {"code": self.code, "message": self.message},
        });
        (self.status, Json(body)).into_response()
    }
}

fn ok(mut body: Value) -> Response {
    body["schemaVersion"] = json!(SCHEMA_VERSION);
    Json(body).into_response()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TablePayload {
    pub id: String,
    pub headers: Vec<String>,
    pub types: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl TablePayload {
    fn of(t: &Table) -> Self {
        TablePayload {
            id: t.id.clone(),
            headers: t.headers().map(str::to_string).collect(),
            types: t.columns.iter().map(|c| c.ty.as_str().to_string()).collect(),
            rows: t.rows().into_iter().map(|r| r.into_iter().map(str::to_string).collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogicalFormPayload {
    pub text: String,
    pub json: LogicalForm,
}

/// One answer cell, addressed by data row and column index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRef {
    pub row: usize,
    pub col: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DenotationPayload {
    pub column: String,
    pub col_index: usize,
    pub values: Vec<CellRef>,
}

/// Which parts of the form were carried over from the previous turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Copied {
    pub select: bool,
    #[serde(rename = "where")]
    pub where_: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AskResponse {
    pub turn: usize,
    pub answered: bool,
    pub logical_form: Option<LogicalFormPayload>,
    pub actions: Vec<Action>,
    pub sketch: Option<String>,
    pub denotation: Option<DenotationPayload>,
    pub score: Option<f64>,
    pub copied: Copied,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct CreateSession {
    table_id: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Ask {
    session_id: String,
    question: String,
}

async fn health() -> Response {
    ok(json!({"status": "ok"}))
}

async fn list_tables(State(app): State<AppState>) -> Response {
    let tables: Vec<Value> = app
        .tables
        .values()
        .map(|t| json!({"id": t.id, "headers": t.headers().collect::<Vec<_>>(), "nRows": t.n_rows, "nCols": t.n_cols}))
        .collect();
    ok(json!({"tables": tables}))
}

async fn get_table(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let t = app
        .tables
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_table", format!("unknown table `{id}`")))?;
    Ok(ok(json!({"table": TablePayload::of(t)})))
}

async fn create_session(
    State(app): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let table = app.tables.get(&req.table_id).cloned().ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_table", format!("unknown table `{}`", req.table_id))
    })?;
    let payload = TablePayload::of(&table);
    let id = app.sessions.create(ServerSession {
        table_id: req.table_id,
        state: new_session(table),
        transcript: Vec::new(),
    });
    Ok(ok(json!({"sessionId": id, "table": payload})))
}

fn respond(session: &mut ServerSession, question: &str, model: &ModelWeights, parse: &ParseConfig) -> AskResponse {
    let result = answer(&mut session.state, question, model, parse);
    let turn = session.state.turns.len();
    let table = &session.state.table;
    let resp = match result {
        Ok((d, p)) => {
            let col = table.column_index(&d.column).unwrap_or(0);
            AskResponse {
                turn,
                answered: true,
                logical_form: Some(LogicalFormPayload {
                    text: p.lf.to_string(),
                    json: p.lf.clone(),
                }),
                copied: Copied {
                    select: p.actions.iter().any(|a| matches!(a, Action::CopySelect | Action::CopyAll)),
                    where_: p.actions.iter().any(|a| matches!(a, Action::CopyWhere | Action::CopyAll)),
                },
                actions: p.actions,
                sketch: Some(p.sketch.id().to_string()),
                denotation: Some(DenotationPayload {
                    column: d.column.clone(),
                    col_index: col,
                    values: d
                        .values
                        .iter()
                        .map(|v| CellRef {
                            row: v.row,
                            col,
                            text: v.text.clone(),
                        })
                        .collect(),
                }),
                score: Some(p.score),
            }
        }
        Err(_) => AskResponse {
            turn,
            answered: false,
            logical_form: None,
            actions: Vec::new(),
            sketch: None,
            denotation: None,
            score: None,
            copied: Copied::default(),
        },
    };
    session.transcript.push(TranscriptEntry {
        question: question.to_string(),
        response: resp.clone(),
    });
    resp
}

async fn ask(State(app): State<AppState>, body: Result<Json<Ask>, JsonRejection>) -> Result<Response, ApiError> {
    let Json(req) = body?;
    if req.question.trim().is_empty() {
        return Err(ApiError::bad_request("question must not be empty"));
    }
    let handle = app.sessions.get(&req.session_id)?;
    let mut session = handle.lock().unwrap_or_else(|e| e.into_inner());
    let resp = respond(&mut session, req.question.trim(), &app.model, &app.parse);
    let mut body = serde_json::to_value(resp).expect("response serializes");
    body["sessionId"] = json!(req.session_id);
    Ok(ok(body))
}

async fn delete_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    if app.sessions.remove(&id) {
        Ok(ok(json!({"sessionId": id, "deleted": true})))
    } else {
        // Distinguish expired from unknown.
        Err(app.sessions.get(&id).err().map(ApiError::from).unwrap_or_else(|| {
            ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("unknown session `{id}`"))
        }))
    }
}

/// The session transcript as JSON lines, one `{schemaVersion, question, response}` per turn.
async fn transcript(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let handle = app.sessions.get(&id)?;
    let session = handle.lock().unwrap_or_else(|e| e.into_inner());
    let mut body = String::new();
    for entry in &session.transcript {
        let mut line = serde_json::to_value(entry).expect("entry serializes");
        line["schemaVersion"] = json!(SCHEMA_VERSION);
        line["tableId"] = json!(session.table_id);
        body.push_str(&line.to_string());
        body.push('\n');
    }
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/tables", get(list_tables))
        .route("/api/tables/{id}", get(get_table))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", delete(delete_session))
        .route("/api/session/{id}/transcript", get(transcript))
        .route("/api/ask", post(ask))
        .with_state(app)
}

/// Router plus an optional static bundle served at `/`.
pub fn app_with_static(app: AppState, static_dir: Option<&Path>) -> Router {
    let r = router(app);
    match static_dir {
        Some(dir) => r.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => r,
    }
}

pub async fn serve(app: AppState, addr: std::net::SocketAddr, static_dir: Option<&Path>) -> std::io::Result<()> {
    let sessions = app.sessions.clone();
    let router = app_with_static(app, static_dir);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sessions.sweep_at(std::time::Instant::now());
        }
    });
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
