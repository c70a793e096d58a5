//! HTTP API over an [`Orchestrator`].
//!
//! | method | path                              | body / reply                         |
//! |--------|-----------------------------------|--------------------------------------|
//! | POST   | `/v1/sessions`                    | `{genre, starting_words, seed?}` → `{id}` |
//! | GET    | `/v1/sessions/{id}`               | [`SessionView`]                      |
//! | POST   | `/v1/sessions/{id}/steer`         | `{genre?, words?}` → [`SessionView`] |
//! | GET    | `/v1/sessions/{id}/script`        | rendered script, `text/plain`        |
//! | GET    | `/v1/sessions/{id}/presentation`  | [`PresentationView`]                 |
//! | GET    | `/v1/config`                      | genres offered by the engine         |
//!
//! Runs start in the background; clients poll the session until its status
//! leaves `pending`/`running`. Errors are `{error, stage}` with status 400,
//! 404 or 502.

use std::path::Path;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::domain::{Genre, Plot, Script};
use crate::pipeline::{Orchestrator, PipelineError, PresentationView};
use crate::session::{Session, SessionError, SessionStatus, StageFailure, SteerEvent};
use crate::text::fnv1a64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreateSession {
    pub genre: String,
    pub starting_words: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteerRequest {
    #[serde(default)]
    pub genre: Option<String>,
    #[serde(default)]
    pub words: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub stage: Option<String>,
}

/// What a client needs to draw a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub status: SessionStatus,
    pub genre: Genre,
    pub seed: u64,
    pub starting_words: String,
    pub script_text: String,
    pub scene_count: usize,
    pub plot: Option<Plot>,
    pub script: Option<Script>,
    pub presentation: PresentationView,
    pub history: Vec<SteerEvent>,
    pub failure: Option<StageFailure>,
    pub warnings: Vec<String>,
}

impl SessionView {
    pub fn of(s: &Session) -> Self {
        Self {
            id: s.id.clone(),
            status: s.status,
            genre: s.genre,
            seed: s.seed,
            starting_words: s.starting_words.clone(),
            script_text: s.rendered_script(),
            scene_count: s.scene_count(),
            plot: s.plot.clone(),
            script: s.script.clone(),
            presentation: PresentationView::of(s),
            history: s.history.clone(),
            failure: s.failure.clone(),
            warnings: s.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreOption {
    pub key: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiConfig {
    pub api_base: String,
    pub genres: Vec<GenreOption>,
}

pub struct HttpError(StatusCode, ApiError);

impl HttpError {
    fn bad_request(msg: impl Into<String>) -> Self {
        Self(
            StatusCode::BAD_REQUEST,
            ApiError {
                error: msg.into(),
                stage: None,
            },
        )
    }
}

impl From<PipelineError> for HttpError {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Session(SessionError::UnknownSession(_)) => StatusCode::NOT_FOUND,
            PipelineError::InvalidSteer(_) | PipelineError::NotSteerable { .. } | PipelineError::InvalidInput(_) => {
                StatusCode::BAD_REQUEST
            }
            _ => StatusCode::BAD_GATEWAY,
        };
        Self(
            status,
            ApiError {
                stage: e.stage_name().map(str::to_string),
                error: e.to_string(),
            },
        )
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn parse_genre(s: &str) -> Result<Genre, HttpError> {
    s.parse()
        .map_err(|e: crate::domain::UnknownGenre| HttpError::bad_request(e.to_string()))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, PipelineError> + Send + 'static,
) -> Result<T, HttpError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| {
            HttpError(
                StatusCode::INTERNAL_SERVER_ERROR,
                ApiError {
                    error: e.to_string(),
                    stage: None,
                },
            )
        })?
        .map_err(HttpError::from)
}

async fn create(State(o): State<Orchestrator>, Json(req): Json<CreateSession>) -> Result<Response, HttpError> {
    let genre = parse_genre(&req.genre)?;
    let words = req.starting_words.clone();
    let o2 = o.clone();
    let id = blocking(move || {
        let seed = req.seed.unwrap_or_else(|| fnv1a64(words.as_bytes()));
        o2.create(genre, &words, seed)
    })
    .await?;
    let run_id = id.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = o.run(&run_id) {
            log::error!("session {run_id}: {e}");
        }
    });
    Ok((StatusCode::CREATED, Json(Created { id })).into_response())
}

async fn show(State(o): State<Orchestrator>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionView>, HttpError> {
    Ok(Json(SessionView::of(&blocking(move || o.get(&id)).await?)))
}

async fn steer(
    State(o): State<Orchestrator>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<SteerRequest>,
) -> Result<Json<SessionView>, HttpError> {
    let genre = req
        .genre
        .as_deref()
        .filter(|g| !g.trim().is_empty())
        .map(parse_genre)
        .transpose()?;
    let event = SteerEvent::now(genre, req.words);
    Ok(Json(SessionView::of(&blocking(move || o.steer(&id, event)).await?)))
}

async fn script(State(o): State<Orchestrator>, UrlPath(id): UrlPath<String>) -> Result<Response, HttpError> {
    let s = blocking(move || o.get(&id)).await?;
    Ok((
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        s.rendered_script(),
    )
        .into_response())
}

async fn presentation(
    State(o): State<Orchestrator>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<PresentationView>, HttpError> {
    Ok(Json(blocking(move || o.presentation(&id)).await?))
}

async fn ui_config() -> Json<UiConfig> {
    Json(UiConfig {
        api_base: "/v1".into(),
        genres: Genre::ALL
            .iter()
            .map(|g| GenreOption {
                key: g.key().into(),
                label: g.display_name().into(),
            })
            .collect(),
    })
}

pub fn api_router(orchestrator: Orchestrator) -> Router {
    Router::new()
        .route("/v1/sessions", post(create))
        .route("/v1/sessions/{id}", get(show))
        .route("/v1/sessions/{id}/steer", post(steer))
        .route("/v1/sessions/{id}/script", get(script))
        .route("/v1/sessions/{id}/presentation", get(presentation))
        .route("/v1/config", get(ui_config))
        .with_state(orchestrator)
}

/// The API plus a static bundle served for every other path.
pub fn app(orchestrator: Orchestrator, static_dir: Option<&Path>) -> Router {
    let api = api_router(orchestrator);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
