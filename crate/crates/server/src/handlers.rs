use std::collections::BTreeMap;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use chrono::Utc;
use serde::{Deserialize, Serialize};

use tagatar_core::matcher::{best_match, top_k, TagQuery};
use tagatar_core::schema::schema_to_json;
use tagatar_core::session::{sample_batch, NewSession};
use tagatar_core::{evaluate, load_predictions, AnnotationRecord, SessionError};

use crate::{ApiError, AppState, ErrorCode};

/// Pretty JSON with a trailing newline, the layout shared with the CLI.
fn document(status: StatusCode, text: String) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        text,
    )
        .into_response()
}

fn to_document<T: Serialize>(status: StatusCode, value: &T) -> Response {
    let mut text = serde_json::to_string_pretty(value).expect("response serializes");
    text.push('\n');
    document(status, text)
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    F: FnOnce() -> Result<T, SessionError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorCode::StorageError, e.to_string()))?
        .map_err(ApiError::from)
}

pub async fn no_route() -> ApiError {
    ApiError::not_found("no such route")
}

pub async fn method_not_allowed() -> ApiError {
    ApiError::new(ErrorCode::MethodNotAllowed, "method not allowed on this route")
}

pub async fn get_schema(State(state): State<AppState>) -> Response {
    document(StatusCode::OK, schema_to_json(&state.schema))
}

/// Where a new session's batch is drawn from: a named server-side pool or
/// an explicit list of image ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSource {
    Pool(String),
    Images(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub batch_source: BatchSource,
    pub size: usize,
    pub seed: u64,
    #[serde(default)]
    pub annotators: Vec<String>,
    #[serde(default)]
    pub session_id: Option<String>,
}

pub async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSessionRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let mut paths = BTreeMap::new();
    let pool: Vec<String> = match &req.batch_source {
        BatchSource::Pool(name) => {
            let entries = state.pools.get(name).ok_or_else(|| {
                ApiError::new(
                    ErrorCode::InvalidReference,
                    format!("unknown batch pool `{name}`"),
                )
            })?;
            entries.iter().map(|e| e.image_id.clone()).collect()
        }
        BatchSource::Images(ids) => ids.clone(),
    };
    for entries in state.pools.values() {
        for e in entries {
            paths.insert(e.image_id.clone(), e.path.clone());
        }
    }
    let batch = sample_batch(&pool, req.size, req.seed)?;
    paths.retain(|id, _| batch.contains(id));
    let new = NewSession {
        session_id: req.session_id,
        batch,
        annotators: req.annotators,
        seed: req.seed,
        image_paths: paths,
    };
    let store = state.store.clone();
    let schema = state.schema.clone();
    let created = blocking(move || store.create_session(&schema, new)).await?;
    Ok(to_document(StatusCode::CREATED, &created))
}

pub async fn list_sessions(State(state): State<AppState>) -> Response {
    to_document(StatusCode::OK, &state.store.sessions())
}

pub async fn get_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(to_document(StatusCode::OK, &state.store.session(&id)?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchImage {
    pub image_id: String,
    /// `/static/images/...` URL when the image's file is known.
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchListing {
    pub session_id: String,
    pub images: Vec<BatchImage>,
}

pub async fn get_batch(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let session = state.store.session(&id)?;
    let images = session
        .batch
        .iter()
        .map(|image_id| BatchImage {
            image_id: image_id.clone(),
            url: session
                .image_paths
                .get(image_id)
                .map(|p| format!("/static/images/{}", p.trim_start_matches('/'))),
        })
        .collect();
    Ok(to_document(
        StatusCode::OK,
        &BatchListing {
            session_id: session.session_id,
            images,
        },
    ))
}

/// An annotation as submitted by a client; the session comes from the path
/// and the timestamp is assigned on receipt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitAnnotation {
    pub annotator_id: String,
    pub image_id: String,
    pub category_id: String,
    pub option_id: String,
}

pub async fn submit_annotation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<SubmitAnnotation>, JsonRejection>,
) -> Result<Response, ApiError> {
    // unknown session wins over a bad body
    state.store.session(&id)?;
    let Json(sub) = body?;
    let record = AnnotationRecord::new(
        id,
        sub.annotator_id,
        sub.image_id,
        sub.category_id,
        sub.option_id,
        Utc::now(),
    );
    let store = state.store.clone();
    let ack = blocking(move || store.record_annotation(record)).await?;
    Ok(to_document(StatusCode::CREATED, &ack))
}

pub async fn get_report(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    Ok(document(StatusCode::OK, state.store.report(&id)?.to_json()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchRequest {
    pub region: String,
    /// Category ids or aliases mapped to option ids.
    pub tags: BTreeMap<String, String>,
    #[serde(default)]
    pub k: Option<usize>,
}

pub async fn post_match(
    State(state): State<AppState>,
    body: Result<Json<MatchRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let Json(req) = body?;
    let query = TagQuery {
        region_id: req.region,
        tags: req.tags,
    }
    .resolve(&state.schema)?;
    let assets: Vec<_> = state
        .assets
        .iter()
        .filter(|a| a.region_id == query.region_id)
        .cloned()
        .collect();
    let result = match req.k {
        Some(k) => top_k(&state.schema, &query, &assets, k)?,
        None => best_match(&state.schema, &query, &assets)?,
    };
    Ok(to_document(StatusCode::OK, &result))
}

pub async fn get_assets(State(state): State<AppState>) -> Response {
    to_document(StatusCode::OK, &*state.assets)
}

pub async fn post_eval(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let records = load_predictions(&body[..], &state.schema)?;
    let report = evaluate(&records, &state.schema)?;
    Ok(document(StatusCode::OK, report.to_json()))
}
