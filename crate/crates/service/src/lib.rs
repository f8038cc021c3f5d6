//! HTTP API over a [`MemoryEngine`].
//!
//! | method | path                  | purpose                          |
//! |--------|-----------------------|----------------------------------|
//! | POST   | `/v2/memories`        | store one episode                |
//! | POST   | `/v2/memories/search` | recall, optionally in agent mode |
//! | GET    | `/v2/profile`         | profile entries of one user      |
//! | DELETE | `/v2/sessions`        | remove a session everywhere      |
//! | GET    | `/v2/openapi.yaml`    | this API as an OpenAPI document  |
//! | GET    | `/healthz`            | liveness                         |
//!
//! Engine calls are synchronous and run on the blocking pool. Handlers keep
//! no state between requests; per-session write ordering is enforced by the
//! engine.

mod error;
pub mod wire;

use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{FromRequestParts, Query, State};
use axum::http::request::Parts;
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mnemo_core::profile::Category;
use mnemo_core::store::{NewEpisode, StoreError};
use mnemo_core::{EngineError, MemoryEngine, Producer, SearchOptions, Timestamp};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use error::{ApiError, ErrorBody};
use wire::{
    AddMemoryRequest, AddMemoryResponse, DeleteSessionResponse, ProfileQuery, ScopeFields, SearchRequest,
    SearchResponse,
};

pub const OPENAPI: &str = include_str!("../openapi.yaml");
pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Clone)]
pub struct AppState {
    engine: Arc<MemoryEngine>,
    ids: Arc<RequestIds>,
}

impl AppState {
    pub fn new(engine: Arc<MemoryEngine>) -> Self {
        Self {
            engine,
            ids: Arc::new(RequestIds::new()),
        }
    }

    pub fn engine(&self) -> &Arc<MemoryEngine> {
        &self.engine
    }
}

struct RequestIds {
    prefix: u32,
    next: AtomicU64,
}

impl RequestIds {
    fn new() -> Self {
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos())
            .unwrap_or(0);
        Self {
            prefix: (nanos ^ (nanos >> 32)) as u32 ^ std::process::id(),
            next: AtomicU64::new(1),
        }
    }

    fn issue(&self) -> String {
        format!("req-{:08x}-{:06}", self.prefix, self.next.fetch_add(1, Ordering::Relaxed))
    }
}

/// Per-request identity, extracted before the body is read.
#[derive(Debug, Clone)]
pub struct RequestContext {
    pub request_id: String,
    pub received_at: Instant,
}

impl FromRequestParts<AppState> for RequestContext {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(_parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        Ok(Self {
            request_id: state.ids.issue(),
            received_at: Instant::now(),
        })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v2/memories", post(add_memory))
        .route("/v2/memories/search", post(search))
        .route("/v2/profile", get(profile))
        .route("/v2/sessions", axum::routing::delete(delete_session))
        .route("/v2/openapi.yaml", get(openapi))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state)
}

/// Serves until the listener fails or Ctrl-C is received.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Binds `addr` and returns the bound address with the running server task.
pub async fn spawn(
    addr: SocketAddr,
    state: AppState,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    Ok((bound, tokio::spawn(serve(listener, state))))
}

fn respond<T: Serialize>(status: StatusCode, ctx: &RequestContext, body: &T) -> Response {
    let mut response = (status, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(&ctx.request_id) {
        response.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    tracing::debug!(
        request_id = %ctx.request_id,
        status = status.as_u16(),
        elapsed_ms = ctx.received_at.elapsed().as_millis() as u64,
        "request done"
    );
    response
}

fn fail(ctx: &RequestContext, err: ApiError) -> Response {
    let mut response = err.into_response();
    if let Ok(v) = HeaderValue::from_str(&ctx.request_id) {
        response.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    response
}

fn parse_body<T: DeserializeOwned>(ctx: &RequestContext, body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("InvalidBody", e.to_string(), &ctx.request_id))
}

fn check_scope(ctx: &RequestContext, fields: &ScopeFields) -> Result<(), ApiError> {
    match fields.scope().invalid_field() {
        Some(field) => Err(ApiError::from_engine(
            EngineError::Store(StoreError::ScopeInvalid(field)),
            &ctx.request_id,
        )),
        None => Ok(()),
    }
}

async fn blocking<T: Send + 'static>(
    ctx: &RequestContext,
    state: &AppState,
    f: impl FnOnce(&MemoryEngine) -> Result<T, EngineError> + Send + 'static,
) -> Result<T, ApiError> {
    let engine = state.engine.clone();
    match tokio::task::spawn_blocking(move || f(&engine)).await {
        Ok(result) => result.map_err(|e| ApiError::from_engine(e, &ctx.request_id)),
        Err(e) => Err(ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "Internal",
            e.to_string(),
            &ctx.request_id,
        )),
    }
}

async fn add_memory(State(state): State<AppState>, ctx: RequestContext, body: Bytes) -> Response {
    match add_memory_inner(&state, &ctx, &body).await {
        Ok(r) => respond(StatusCode::CREATED, &ctx, &r),
        Err(e) => fail(&ctx, e),
    }
}

async fn add_memory_inner(state: &AppState, ctx: &RequestContext, body: &Bytes) -> Result<AddMemoryResponse, ApiError> {
    let req: AddMemoryRequest = parse_body(ctx, body)?;
    check_scope(ctx, &req.scope)?;
    let producer = match req.producer.as_deref() {
        None => Producer::User,
        Some(p) => Producer::from_str(p).map_err(|e| ApiError::bad_request("InvalidProducer", e, &ctx.request_id))?,
    };
    let new = NewEpisode {
        scope: req.scope.scope(),
        content: req.content,
        producer,
        timestamp: req.timestamp.unwrap_or_else(Timestamp::now),
        metadata: req.metadata,
    };
    let ingested = blocking(ctx, state, move |engine| engine.add_episode(new)).await?;
    Ok(AddMemoryResponse {
        episode_id: ingested.episode.id,
        sequence: ingested.episode.sequence,
        timestamp: ingested.episode.timestamp,
        sentences: ingested.sentences,
        warnings: ingested.warnings,
        request_id: ctx.request_id.clone(),
    })
}

async fn search(State(state): State<AppState>, ctx: RequestContext, body: Bytes) -> Response {
    match search_inner(&state, &ctx, &body).await {
        Ok(r) => respond(StatusCode::OK, &ctx, &r),
        Err(e) => fail(&ctx, e),
    }
}

async fn search_inner(state: &AppState, ctx: &RequestContext, body: &Bytes) -> Result<SearchResponse, ApiError> {
    let req: SearchRequest = parse_body(ctx, body)?;
    check_scope(ctx, &req.scope)?;
    let scope = req.scope.scope();
    let options = SearchOptions {
        agent_mode: req.agent_mode,
        config: req.config,
        filter: req.filter,
    };
    let query = req.query;
    let result = blocking(ctx, state, move |engine| engine.search(&scope, &query, &options)).await?;
    Ok(SearchResponse {
        request_id: ctx.request_id.clone(),
        episode_ids: result.outcome.episode_ids(),
        result,
    })
}

async fn profile(
    State(state): State<AppState>,
    ctx: RequestContext,
    query: Result<Query<ProfileQuery>, QueryRejection>,
) -> Response {
    let q = match query {
        Ok(Query(q)) => q,
        Err(e) => return fail(&ctx, ApiError::bad_request("InvalidQuery", e.body_text(), &ctx.request_id)),
    };
    let user = q.user_scope();
    if !user.is_valid() {
        return fail(
            &ctx,
            ApiError::bad_request("ScopeInvalid", "org_id, project_id and user_id are required", &ctx.request_id),
        );
    }
    let category = match q.category.as_deref().filter(|c| !c.is_empty()) {
        None => None,
        Some(c) => match Category::from_str(c) {
            Ok(c) => Some(c),
            Err(e) => return fail(&ctx, ApiError::bad_request("InvalidCategory", e, &ctx.request_id)),
        },
    };
    let key = q.key.filter(|k| !k.is_empty());
    match blocking(&ctx, &state, move |engine| Ok(engine.query_profile(&user, category, key.as_deref()))).await {
        Ok(entries) => respond(StatusCode::OK, &ctx, &entries),
        Err(e) => fail(&ctx, e),
    }
}

async fn delete_session(
    State(state): State<AppState>,
    ctx: RequestContext,
    query: Result<Query<ScopeFields>, QueryRejection>,
) -> Response {
    let fields = match query {
        Ok(Query(q)) => q,
        Err(e) => return fail(&ctx, ApiError::bad_request("InvalidQuery", e.body_text(), &ctx.request_id)),
    };
    if let Err(e) = check_scope(&ctx, &fields) {
        return fail(&ctx, e);
    }
    let scope = fields.scope();
    match blocking(&ctx, &state, move |engine| engine.delete_session(&scope)).await {
        Ok(removed) => respond(
            StatusCode::OK,
            &ctx,
            &DeleteSessionResponse {
                removed,
                request_id: ctx.request_id.clone(),
            },
        ),
        Err(e) => fail(&ctx, e),
    }
}

async fn openapi() -> impl IntoResponse {
    ([(axum::http::header::CONTENT_TYPE, "application/yaml")], OPENAPI)
}
