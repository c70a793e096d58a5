//! Engine configuration, read from a JSON document.
//!
//! ```json
//! {
//!   "backends": { "generator": "http://gpu-box:8000" },
//!   "rescore": { "num_candidates": 10, "top_k": 4 },
//!   "banlist_path": "banlist.txt",
//!   "music_map_path": "music.json",
//!   "session_dir": "sessions",
//!   "index_path": "index"
//! }
//! ```
//!
//! Every field is optional. Environment variables for backend URLs take
//! precedence over the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::BackendUrls;
use crate::plot::{DecodingParams, RescoreConfig};
use crate::scene::MatchMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub backends: BackendUrls,
    pub rescore: RescoreConfig,
    pub dialogue: DecodingParams,
    pub scene: DecodingParams,
    /// Built-in placeholder list when unset.
    pub banlist_path: Option<PathBuf>,
    pub banlist_mode: MatchMode,
    /// Built-in map when unset.
    pub music_map_path: Option<PathBuf>,
    pub session_dir: PathBuf,
    pub index_path: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            backends: BackendUrls::default(),
            rescore: RescoreConfig::default(),
            dialogue: DecodingParams {
                max_new_tokens: 160,
                ..DecodingParams::default()
            },
            scene: DecodingParams {
                max_new_tokens: 80,
                ..DecodingParams::default()
            },
            banlist_path: None,
            banlist_mode: MatchMode::Word,
            music_map_path: None,
            session_dir: PathBuf::from("sessions"),
            index_path: None,
        }
    }
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Relative paths in the file are taken relative to the file's directory.
    pub fn load_relative(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.banlist_path.as_mut().map(fix);
        cfg.music_map_path.as_mut().map(fix);
        cfg.index_path.as_mut().map(fix);
        fix(&mut cfg.session_dir);
        Ok(cfg)
    }

    /// Backend URLs from the file overlaid with the environment.
    pub fn resolved_backends(&self) -> BackendUrls {
        self.backends.clone().overlay(BackendUrls::from_env())
    }
}
