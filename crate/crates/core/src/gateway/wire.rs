//! JSON wire protocol for remote backends, and a router that serves any
//! [`Backends`] bundle over it.
//!
//! | endpoint        | request                  | response                         |
//! |-----------------|--------------------------|----------------------------------|
//! | `/v1/generate`  | [`GenerationRequest`]    | `{"completions": [..]}`          |
//! | `/v1/classify`  | `{"text": ..}`           | `{"probs": {"crime": ..}}`       |
//! | `/v1/embed`     | `{"texts": [..]}`        | `{"embeddings": [{dim, values}]}`|
//! | `/v1/score`     | `{"text": ..}`           | `{mean_nll_per_token, token_count}` |
//!
//! Failures use a 4xx/5xx status with `{"error": code, "detail": ..}`.

use std::collections::BTreeMap;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::{Backends, Embedding, GatewayError, GenerationRequest};

pub const GENERATE_PATH: &str = "/v1/generate";
pub const CLASSIFY_PATH: &str = "/v1/classify";
pub const EMBED_PATH: &str = "/v1/embed";
pub const SCORE_PATH: &str = "/v1/score";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub completions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub probs: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Embedding>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub detail: String,
}

impl ErrorBody {
    pub const EMPTY_TEXT: &'static str = "empty_text";
    pub const INVALID_REQUEST: &'static str = "invalid_request";
    pub const BACKEND: &'static str = "backend_failure";
}

struct WireError(GatewayError);

impl IntoResponse for WireError {
    fn into_response(self) -> Response {
        let (status, code) = match &self.0 {
            GatewayError::EmptyText => (StatusCode::BAD_REQUEST, ErrorBody::EMPTY_TEXT),
            GatewayError::InvalidRequest(_) => (StatusCode::BAD_REQUEST, ErrorBody::INVALID_REQUEST),
            _ => (StatusCode::BAD_GATEWAY, ErrorBody::BACKEND),
        };
        let body = ErrorBody {
            error: code.to_string(),
            detail: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

async fn blocking<T, F>(f: F) -> Result<T, WireError>
where
    F: FnOnce() -> Result<T, GatewayError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| {
            WireError(GatewayError::BackendUnavailable {
                endpoint: "worker".into(),
                detail: e.to_string(),
                raw: String::new(),
            })
        })?
        .map_err(WireError)
}

async fn generate(
    State(b): State<Backends>,
    Json(req): Json<GenerationRequest>,
) -> Result<Json<GenerateResponse>, WireError> {
    let completions = blocking(move || b.generator.generate_text(&req)).await?;
    Ok(Json(GenerateResponse { completions }))
}

async fn classify(
    State(b): State<Backends>,
    Json(req): Json<TextRequest>,
) -> Result<Json<ClassifyResponse>, WireError> {
    let dist = blocking(move || b.classifier.classify_genre(&req.text)).await?;
    let probs = BTreeMap::from(dist)
        .into_iter()
        .map(|(g, p)| (g.key().to_string(), p))
        .collect();
    Ok(Json(ClassifyResponse { probs }))
}

async fn embed(State(b): State<Backends>, Json(req): Json<EmbedRequest>) -> Result<Json<EmbedResponse>, WireError> {
    let embeddings = blocking(move || b.embedder.embed_texts(&req.texts)).await?;
    Ok(Json(EmbedResponse { embeddings }))
}

async fn score(
    State(b): State<Backends>,
    Json(req): Json<TextRequest>,
) -> Result<Json<super::PerplexityScore>, WireError> {
    Ok(Json(blocking(move || b.scorer.score_perplexity(&req.text)).await?))
}

/// Serves `backends` over the wire protocol, e.g. to host the mocks for remote clients.
pub fn backend_router(backends: Backends) -> Router {
    Router::new()
        .route(GENERATE_PATH, post(generate))
        .route(CLASSIFY_PATH, post(classify))
        .route(EMBED_PATH, post(embed))
        .route(SCORE_PATH, post(score))
        .with_state(backends)
}
