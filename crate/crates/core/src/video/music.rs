//! Genre-keyed background music.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VideoError;
use crate::domain::Genre;

pub const DEFAULT_KEY: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MusicTrack {
    pub uri: String,
    pub mood_tag: String,
}

/// Map from genre key (`crime`, `sci-fi`, ...) and `default` to a track.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MusicMap(pub BTreeMap<String, MusicTrack>);

impl MusicMap {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../../data/music.json")).expect("builtin music map parses")
    }

    pub fn load(path: &Path) -> Result<Self, VideoError> {
        let text = std::fs::read_to_string(path).map_err(|e| VideoError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| VideoError::BadInput(format!("{}: {e}", path.display())))
    }

    /// Genre-free scripts use the `default` entry.
    pub fn select_music(&self, genre: Genre) -> Result<MusicTrack, VideoError> {
        let key = if genre.is_free() { DEFAULT_KEY } else { genre.key() };
        self.0
            .get(key)
            .cloned()
            .ok_or_else(|| VideoError::MissingMusicEntry(key.to_string()))
    }
}
