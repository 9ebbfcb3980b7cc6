//! HTTP JSON API over a [`Library`].
//!
//! Every failure is a JSON body `{"code", "message", "detail"}` where `code`
//! is one of `not_found`, `bad_request`, `provider_error`, `oversize_query`,
//! `internal`. Library calls run on the blocking pool, since model and
//! embedding providers use blocking HTTP clients.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use paperscope_core::library::{ExportFormat, PaperQuery, SimilarRequest, SCHEMA_VERSION};
use paperscope_core::{ErrorKind, Library, LibraryError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: ErrorKind,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { status: status_of(kind).as_u16(), code: kind, message: message.into(), detail: Value::Null }
    }

    fn with_status(mut self, status: StatusCode) -> Self {
        self.status = status.as_u16();
        self
    }
}

pub fn status_of(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::BadRequest => StatusCode::BAD_REQUEST,
        ErrorKind::ProviderError => StatusCode::BAD_GATEWAY,
        ErrorKind::OversizeQuery => StatusCode::PAYLOAD_TOO_LARGE,
        ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<LibraryError> for ApiError {
    fn from(e: LibraryError) -> Self {
        ApiError::new(e.kind, e.message)
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(ErrorKind::BadRequest, e.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(e: QueryRejection) -> Self {
        ApiError::new(ErrorKind::BadRequest, e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Lib = State<Arc<Library>>;

async fn blocking<T, F>(lib: &Arc<Library>, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Library) -> Result<T, LibraryError> + Send + 'static,
{
    let lib = lib.clone();
    match tokio::task::spawn_blocking(move || f(&lib)).await {
        Ok(r) => r.map_err(ApiError::from),
        Err(e) => Err(ApiError::new(ErrorKind::Internal, format!("request task failed: {e}"))),
    }
}

/// Every route, as listed under `/meta/schema`.
pub const ROUTES: &[&str] = &[
    "GET /health",
    "GET /papers",
    "POST /papers",
    "GET /papers/{id}",
    "POST /similar",
    "GET /projection",
    "GET /meta",
    "GET /meta/schema",
    "POST /chat/{session}",
    "GET /chat/{session}",
    "POST /saved",
    "GET /saved",
    "GET /saved/{id}",
    "DELETE /saved/{id}",
    "POST /saved/{id}/papers",
    "DELETE /saved/{id}/papers/{paper}",
    "POST /saved/{id}/summarize",
    "POST /saved/{id}/litreview",
    "GET /saved/{id}/export",
    "GET /templates",
    "GET /templates/{name}",
    "PUT /templates/{name}",
    "DELETE /templates/{name}",
];

async fn health(State(lib): Lib) -> Json<Value> {
    Json(json!(lib.health()))
}

async fn list_papers(State(lib): Lib, q: Result<Query<HashMap<String, String>>, QueryRejection>) -> ApiResult<Json<Value>> {
    let Query(q) = q?;
    let num = |k: &str| -> ApiResult<Option<usize>> {
        q.get(k)
            .map(|v| v.parse().map_err(|_| ApiError::new(ErrorKind::BadRequest, format!("{k} must be a non-negative integer"))))
            .transpose()
    };
    let query = PaperQuery {
        query: q.get("q").cloned(),
        fields: q.get("fields").map(|f| f.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()),
        limit: num("limit")?,
        offset: num("offset")?.unwrap_or(0),
    };
    blocking(&lib, move |l| l.papers(&query)).await.map(|p| Json(json!(p)))
}

async fn search_papers(State(lib): Lib, body: Result<Json<PaperQuery>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(query) = body?;
    blocking(&lib, move |l| l.papers(&query)).await.map(|p| Json(json!(p)))
}

async fn paper(State(lib): Lib, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(lib.paper(&id)?)))
}

async fn similar(State(lib): Lib, body: Result<Json<SimilarRequest>, JsonRejection>) -> ApiResult<Json<Value>> {
    let Json(req) = body?;
    blocking(&lib, move |l| l.similar(&req)).await.map(|r| Json(json!(r)))
}

#[derive(Debug, Default, Deserialize)]
struct SpaceParam {
    space: Option<String>,
}

async fn projection(State(lib): Lib, q: Result<Query<SpaceParam>, QueryRejection>) -> ApiResult<Json<Value>> {
    let Query(q) = q?;
    blocking(&lib, move |l| {
        let space = l.space(q.space.as_deref())?;
        let table = l.projection(Some(space.name()))?;
        Ok(json!({ "space": space.name(), "points": table.points() }))
    })
    .await
    .map(Json)
}

#[derive(Debug, Default, Deserialize)]
struct MetaParam {
    q: Option<String>,
}

async fn meta(State(lib): Lib, q: Result<Query<MetaParam>, QueryRejection>) -> ApiResult<Json<Value>> {
    let Query(q) = q?;
    blocking(&lib, move |l| Ok(json!(l.meta(q.q.as_deref())))).await.map(Json)
}

async fn schema() -> Json<Value> {
    Json(json!({
        "schema_version": SCHEMA_VERSION,
        "routes": ROUTES,
        "error_codes": ["not_found", "bad_request", "provider_error", "oversize_query", "internal"],
        "markup": { "grounded": "[[cite:<paper_id>|<surface>]]", "ungrounded": "[[unverified|<surface>]]" },
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    message: String,
    #[serde(default)]
    space: Option<String>,
}

async fn chat(
    State(lib): Lib,
    Path(session): Path<String>,
    body: Result<Json<ChatBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    blocking(&lib, move |l| l.chat(&session, &body.message, body.space.as_deref())).await.map(|o| Json(json!(o)))
}

async fn chat_session(State(lib): Lib, Path(session): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(lib.session(&session)?)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSet {
    #[serde(default)]
    set_id: Option<String>,
}

async fn saved_create(State(lib): Lib, body: axum::body::Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSet = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSet::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::new(ErrorKind::BadRequest, format!("invalid body: {e}")))?
    };
    let set = blocking(&lib, move |l| l.saved_create(req.set_id.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(json!(set))))
}

async fn saved_list(State(lib): Lib) -> Json<Value> {
    Json(json!(lib.saved_list()))
}

async fn saved_get(State(lib): Lib, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(lib.saved_get(&id)?)))
}

async fn saved_delete(State(lib): Lib, Path(id): Path<String>) -> ApiResult<StatusCode> {
    blocking(&lib, move |l| l.saved_delete(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AddPaper {
    paper_id: String,
}

async fn saved_add(
    State(lib): Lib,
    Path(id): Path<String>,
    body: Result<Json<AddPaper>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    blocking(&lib, move |l| l.saved_add(&id, &body.paper_id)).await.map(|s| Json(json!(s)))
}

async fn saved_remove(State(lib): Lib, Path((id, paper)): Path<(String, String)>) -> ApiResult<Json<Value>> {
    blocking(&lib, move |l| l.saved_remove(&id, &paper)).await.map(|s| Json(json!(s)))
}

async fn summarize(State(lib): Lib, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let set_id = id.clone();
    let summaries = blocking(&lib, move |l| l.summarize(&id)).await?;
    Ok(Json(json!({ "set_id": set_id, "summaries": summaries })))
}

async fn litreview(State(lib): Lib, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    blocking(&lib, move |l| l.literature_review(&id)).await.map(|r| Json(json!(r)))
}

#[derive(Debug, Default, Deserialize)]
struct ExportParam {
    format: Option<String>,
}

async fn export(
    State(lib): Lib,
    Path(id): Path<String>,
    q: Result<Query<ExportParam>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(q) = q?;
    let name = q.format.unwrap_or_else(|| "json".into());
    let format = ExportFormat::parse(&name)
        .ok_or_else(|| ApiError::new(ErrorKind::BadRequest, format!("unknown export format {name}; use json or bibtex")))?;
    let body = lib.export(&id, format)?;
    let mut resp = body.into_response();
    resp.headers_mut().insert(header::CONTENT_TYPE, HeaderValue::from_static(format.content_type()));
    Ok(resp)
}

async fn templates(State(lib): Lib) -> Json<Value> {
    Json(json!(lib.templates()))
}

async fn template(State(lib): Lib, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(lib.template(&name)?)))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateBody {
    text: String,
}

async fn set_template(
    State(lib): Lib,
    Path(name): Path<String>,
    body: Result<Json<TemplateBody>, JsonRejection>,
) -> ApiResult<Json<Value>> {
    let Json(body) = body?;
    blocking(&lib, move |l| l.set_template(&name, &body.text)).await.map(|t| Json(json!(t)))
}

async fn reset_template(State(lib): Lib, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    blocking(&lib, move |l| l.reset_template(&name)).await.map(|t| Json(json!(t)))
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorKind::NotFound, "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(ErrorKind::BadRequest, "method not allowed on this route").with_status(StatusCode::METHOD_NOT_ALLOWED)
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("invalid CORS origin {0:?}")]
    Cors(String),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server stopped: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct RouterOptions {
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
    /// Static UI build served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

pub fn router(lib: Arc<Library>, opts: &RouterOptions) -> Result<Router, ServerError> {
    let origin = match &opts.cors_origin {
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).map_err(|_| ServerError::Cors(o.clone()))?),
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);

    let mut app = Router::new()
        .route("/health", get(health))
        .route("/papers", get(list_papers).post(search_papers))
        .route("/papers/{id}", get(paper))
        .route("/similar", post(similar))
        .route("/projection", get(projection))
        .route("/meta", get(meta))
        .route("/meta/schema", get(schema))
        .route("/chat/{session}", post(chat).get(chat_session))
        .route("/saved", post(saved_create).get(saved_list))
        .route("/saved/{id}", get(saved_get).delete(saved_delete))
        .route("/saved/{id}/papers", post(saved_add))
        .route("/saved/{id}/papers/{paper}", axum::routing::delete(saved_remove))
        .route("/saved/{id}/summarize", post(summarize))
        .route("/saved/{id}/litreview", post(litreview))
        .route("/saved/{id}/export", get(export))
        .route("/templates", get(templates))
        .route("/templates/{name}", get(template).put(set_template).delete(reset_template));
    if let Some(dir) = &opts.ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    Ok(app
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(cors)
        .with_state(lib))
}

/// Binds and serves until the process ends.
pub async fn serve(lib: Arc<Library>, addr: SocketAddr, opts: &RouterOptions) -> Result<(), ServerError> {
    let app = router(lib, opts)?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr: addr.to_string(), source })?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, app).await.map_err(ServerError::Serve)
}
