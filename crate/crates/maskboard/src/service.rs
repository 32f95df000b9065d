//! Local JSON service over a project, mounted under `/api/v1`.
//!
//! Every handler is a thin adapter over a function in [`crate::project`]. Work
//! runs on the blocking pool so a long search never stalls other requests;
//! mutations (themes, reviews, explanation sets) are serialized through one
//! writer lock.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use maskboard_core::classify::{classify_corpus, Prediction};
use maskboard_core::explain::{Explainer, HighlightPolicy, MarkupFormat};
use maskboard_core::explore::DEFAULT_WINDOW;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::error::{invalid, Error};
use crate::project::{self, ReviewRequest, PAGE_SIZE};
use crate::store::{Kind, Store};

/// The single error body of every failed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = e.code();
        let status = match code {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" => StatusCode::CONFLICT,
            "invalid" => StatusCode::BAD_REQUEST,
            "provider_unavailable" => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct AppState {
    pub store: Store,
    writer: Mutex<()>,
    token: Option<String>,
}

type Shared = Arc<AppState>;

async fn blocking<T, F>(state: &Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> crate::Result<T> + Send + 'static,
{
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "integrity", format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

async fn writing<T, F>(state: &Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> crate::Result<T> + Send + 'static,
{
    blocking(state, move |s| {
        let _guard = s.writer.lock().unwrap_or_else(|p| p.into_inner());
        f(&s.store)
    })
    .await
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::from(invalid(format!("bad request body: {e}"))))
}

type Params = Query<HashMap<String, String>>;

fn param<'a>(q: &'a HashMap<String, String>, key: &str) -> ApiResult<&'a str> {
    q.get(key)
        .map(String::as_str)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| invalid(format!("missing query parameter {key:?}")).into())
}

fn num_param(q: &HashMap<String, String>, key: &str, default: usize) -> ApiResult<usize> {
    match q.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| invalid(format!("query parameter {key:?} must be a non-negative integer")).into()),
    }
}

fn now() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs() as i64)
}

async fn list_corpora(State(s): State<Shared>) -> ApiResult<Json<Vec<String>>> {
    blocking(&s, |s| s.store.list(Kind::Corpora)).await.map(Json)
}

async fn explanations(State(s): State<Shared>, Query(q): Params) -> ApiResult<Json<project::ExplanationPage>> {
    let corpus = param(&q, "corpus")?.to_string();
    let page = num_param(&q, "page", 1)?;
    let size = num_param(&q, "page_size", PAGE_SIZE)?;
    blocking(&s, move |s| project::explanation_page(&s.store, &corpus, page, size))
        .await
        .map(Json)
}

#[derive(Deserialize)]
struct NewTheme {
    name: String,
    #[serde(default)]
    notes: String,
}

#[derive(Deserialize)]
struct ThemePatch {
    name: Option<String>,
    notes: Option<String>,
}

#[derive(Deserialize)]
struct MemberChange {
    phrase: String,
}

async fn list_themes(State(s): State<Shared>) -> ApiResult<Response> {
    let themes = blocking(&s, |s| s.store.themes()).await?;
    Ok(Json(themes).into_response())
}

async fn create_theme(State(s): State<Shared>, raw: Bytes) -> ApiResult<Response> {
    let req: NewTheme = body(&raw)?;
    let theme = writing(&s, move |st| st.create_theme(&req.name, &req.notes)).await?;
    Ok((StatusCode::CREATED, Json(theme)).into_response())
}

async fn get_theme(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let theme = blocking(&s, move |s| s.store.theme(&id)).await?;
    Ok(Json(theme).into_response())
}

async fn patch_theme(State(s): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<Response> {
    let patch: ThemePatch = body(&raw)?;
    let theme = writing(&s, move |st| {
        let mut theme = st.theme(&id)?;
        if let Some(name) = patch.name {
            if name.trim().is_empty() {
                return Err(invalid("theme name cannot be empty"));
            }
            theme.name = name.trim().to_string();
        }
        if let Some(notes) = patch.notes {
            theme.notes = notes;
        }
        st.save_theme(&theme)?;
        Ok(theme)
    })
    .await?;
    Ok(Json(theme).into_response())
}

async fn delete_theme(State(s): State<Shared>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    writing(&s, move |st| st.delete_theme(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn change_member(s: Shared, id: String, raw: Bytes, add: bool) -> ApiResult<Response> {
    let change: MemberChange = body(&raw)?;
    let theme = writing(&s, move |st| {
        let mut theme = st.theme(&id)?;
        let changed = if add {
            if change.phrase.trim().is_empty() {
                return Err(invalid("member phrase cannot be empty"));
            }
            theme.add_member(&change.phrase)
        } else {
            theme.remove_member(&change.phrase)
        };
        if changed {
            st.save_theme(&theme)?;
        } else if !add {
            return Err(crate::error::not_found(format!("{:?} is not a member of theme {id:?}", change.phrase)));
        }
        Ok(theme)
    })
    .await?;
    Ok(Json(theme).into_response())
}

async fn add_member(State(s): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<Response> {
    change_member(s, id, raw, true).await
}

async fn remove_member(State(s): State<Shared>, Path(id): Path<String>, raw: Bytes) -> ApiResult<Response> {
    change_member(s, id, raw, false).await
}

#[derive(Deserialize)]
struct SearchRequest {
    theme_id: String,
    corpus: String,
    #[serde(default = "default_window")]
    n: usize,
}

fn default_window() -> usize {
    DEFAULT_WINDOW
}

async fn search(State(s): State<Shared>, raw: Bytes) -> ApiResult<Json<project::SearchResult>> {
    let req: SearchRequest = body(&raw)?;
    blocking(&s, move |s| project::search(&s.store, &req.theme_id, &req.corpus, req.n))
        .await
        .map(Json)
}

async fn create_review(State(s): State<Shared>, raw: Bytes) -> ApiResult<Response> {
    let req: ReviewRequest = body(&raw)?;
    let at = now();
    let record = writing(&s, move |st| project::add_review(st, req, at)).await?;
    Ok((StatusCode::CREATED, Json(record)).into_response())
}

async fn list_reviews(State(s): State<Shared>, Query(q): Params) -> ApiResult<Response> {
    let theme = param(&q, "theme")?.to_string();
    let corpus = param(&q, "corpus")?.to_string();
    let records = blocking(&s, move |s| {
        let state = s.store.replay_reviews()?;
        let mut v: Vec<_> = state.reviews(&theme, &corpus).cloned().collect();
        v.sort_by_key(|r| r.rank);
        Ok(v)
    })
    .await?;
    Ok(Json(records).into_response())
}

async fn counts(State(s): State<Shared>, Path(id): Path<String>, Query(q): Params) -> ApiResult<Response> {
    let corpus = param(&q, "corpus")?.to_string();
    let window = num_param(&q, "window", DEFAULT_WINDOW)?;
    let c = blocking(&s, move |s| project::theme_counts(&s.store, &id, &corpus, window)).await?;
    Ok(Json(c).into_response())
}

async fn compare(State(s): State<Shared>, Query(q): Params) -> ApiResult<Json<project::Comparison>> {
    let theme = param(&q, "theme")?.to_string();
    let a = param(&q, "corpus_a")?.to_string();
    let b = param(&q, "corpus_b")?.to_string();
    let window = num_param(&q, "window", DEFAULT_WINDOW)?;
    blocking(&s, move |s| project::compare(&s.store, &theme, &a, &b, window))
        .await
        .map(Json)
}

async fn rendered(State(s): State<Shared>, Path(id): Path<String>, Query(q): Params) -> ApiResult<Response> {
    let format: MarkupFormat = q
        .get("format")
        .map_or(Ok(MarkupFormat::Html), |f| f.parse())
        .map_err(|e: maskboard_core::Error| ApiError::from(Error::from(e)))?;
    let corpus = q.get("corpus").cloned();
    let r = blocking(&s, move |s| project::rendered_post(&s.store, corpus.as_deref(), &id, format)).await?;
    Ok(Json(r).into_response())
}

#[derive(Deserialize)]
struct ClassifyRequest {
    model: String,
    corpus: String,
    #[serde(default = "half")]
    threshold: f64,
}

fn half() -> f64 {
    0.5
}

async fn classify(State(s): State<Shared>, raw: Bytes) -> ApiResult<Json<Vec<Prediction>>> {
    let req: ClassifyRequest = body(&raw)?;
    blocking(&s, move |s| {
        let model = s.store.model(&req.model)?;
        let corpus = s.store.corpus(&req.corpus)?;
        Ok(classify_corpus(&model, &corpus, req.threshold, 256)?)
    })
    .await
    .map(Json)
}

#[derive(Deserialize)]
struct ExplainRequest {
    model: String,
    corpus: String,
    #[serde(default)]
    top_k: Option<usize>,
    #[serde(default)]
    min_influence: Option<f64>,
}

async fn explain(State(s): State<Shared>, raw: Bytes) -> ApiResult<Json<Value>> {
    let req: ExplainRequest = body(&raw)?;
    let mut policy = HighlightPolicy::default();
    policy.k = req.top_k.unwrap_or(policy.k);
    policy.min_influence = req.min_influence.unwrap_or(policy.min_influence);
    let corpus = req.corpus.clone();
    let items = writing(&s, move |st| {
        project::explain_corpus(st, &req.model, &req.corpus, &Explainer::new(policy))
    })
    .await?;
    let highlighted: usize = items.iter().map(|e| e.highlighted.len()).sum();
    Ok(Json(json!({"corpus": corpus, "posts": items.len(), "highlighted": highlighted})))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

async fn api_bad_method() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "invalid", "method not allowed on this endpoint")
}

async fn require_token(State(s): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &s.token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "invalid", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

/// Builds the application. `token`, when set, is required as a bearer token
/// on every API request; `static_dir` is served at `/`.
pub fn router(store: Store, token: Option<String>, static_dir: Option<PathBuf>) -> Router {
    let state = Arc::new(AppState {
        store,
        writer: Mutex::new(()),
        token,
    });
    let api = Router::new()
        .route("/corpora", get(list_corpora))
        .route("/explanations", get(explanations))
        .route("/themes", get(list_themes).post(create_theme))
        .route("/themes/{id}", get(get_theme).patch(patch_theme).delete(delete_theme))
        .route("/themes/{id}/members", post(add_member).delete(remove_member))
        .route("/themes/{id}/counts", get(counts))
        .route("/search", post(search))
        .route("/reviews", get(list_reviews).post(create_review))
        .route("/compare", get(compare))
        .route("/posts/{id}/rendered", get(rendered))
        .route("/classify", post(classify))
        .route("/explain", post(explain))
        .fallback(api_not_found)
        .method_not_allowed_fallback(api_bad_method)
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest("/api/v1", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: SocketAddr,
    pub token: Option<String>,
    pub static_dir: Option<PathBuf>,
}

impl ServeOptions {
    /// Non-loopback binds need a token.
    pub fn validate(&self) -> crate::Result<()> {
        if !self.bind.ip().is_loopback() && self.token.as_deref().is_none_or(str::is_empty) {
            return Err(invalid(format!(
                "binding to {} exposes the project beyond this machine; pass --token",
                self.bind
            )));
        }
        if let Some(dir) = &self.static_dir {
            if !dir.is_dir() {
                return Err(invalid(format!("static directory {} does not exist", dir.display())));
            }
        }
        Ok(())
    }
}

/// Serves until Ctrl-C.
pub async fn serve(store: Store, opts: ServeOptions) -> crate::Result<()> {
    opts.validate()?;
    let listener = tokio::net::TcpListener::bind(opts.bind)
        .await
        .map_err(|e| Error::io(store.root(), e))?;
    let addr = listener.local_addr().map_err(|e| Error::io(store.root(), e))?;
    eprintln!("maskboard serving {} on http://{addr}/api/v1", store.root().display());
    let app = router(store, opts.token, opts.static_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::io(PathBuf::from(addr.to_string()), e))
}
