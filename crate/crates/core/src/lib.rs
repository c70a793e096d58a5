//! Genre-controlled script generation with per-scene video retrieval.

pub mod config;
pub mod dialogue;
pub mod domain;
pub mod gateway;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod scene;
pub mod server;
pub mod session;
pub mod text;
pub mod video;

pub use config::EngineConfig;
pub use domain::{render_script, DialogueTurn, Genre, Plot, PlotSentence, Scene, SceneHeader, Script};
pub use gateway::Backends;
pub use pipeline::{Engine, Orchestrator, PipelineError};
pub use session::{Session, SessionManager, SessionStatus, SessionStore, SteerEvent};
