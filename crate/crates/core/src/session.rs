//! Steerable generation sessions and their persistence.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{render_script, Genre, Plot, PlotCandidate, Script};
use crate::video::{ClipRecord, MusicTrack};

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session record {id} is corrupt: {detail}")]
    CorruptSessionRecord { id: String, detail: String },
    #[error("session store: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Pending,
    Running,
    Complete,
    Failed,
}

impl SessionStatus {
    /// Pending, then running, then complete or failed.
    pub fn can_become(self, next: SessionStatus) -> bool {
        use SessionStatus::*;
        matches!(
            (self, next),
            (Pending, Running) | (Running, Complete) | (Running, Failed)
        ) || self == next
    }

    pub fn is_final(self) -> bool {
        matches!(self, SessionStatus::Complete | SessionStatus::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteerEvent {
    pub timestamp_ms: u64,
    pub new_genre: Option<Genre>,
    pub injected_words: Option<String>,
}

impl SteerEvent {
    pub fn now(new_genre: Option<Genre>, injected_words: Option<String>) -> Self {
        let timestamp_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Self {
            timestamp_ms,
            new_genre,
            injected_words: injected_words.filter(|w| !w.trim().is_empty()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.new_genre.is_some() || self.injected_words.as_deref().is_some_and(|w| !w.trim().is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationSlot {
    pub scene_index: usize,
    pub clip: Option<ClipRecord>,
    pub score: Option<f64>,
    /// Retrieval had to drop at least one filter.
    pub relaxed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub genre: Genre,
    pub starting_words: String,
    pub seed: u64,
    pub status: SessionStatus,
    pub plot: Option<Plot>,
    #[serde(default)]
    pub candidates: Vec<PlotCandidate>,
    pub script: Option<Script>,
    #[serde(default)]
    pub presentation: Vec<PresentationSlot>,
    pub music: Option<MusicTrack>,
    #[serde(default)]
    pub history: Vec<SteerEvent>,
    pub failure: Option<StageFailure>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Session {
    pub fn new(id: String, genre: Genre, starting_words: &str, seed: u64) -> Self {
        Self {
            id,
            genre,
            starting_words: starting_words.to_string(),
            seed,
            status: SessionStatus::Pending,
            plot: None,
            candidates: Vec::new(),
            script: None,
            presentation: Vec::new(),
            music: None,
            history: Vec::new(),
            failure: None,
            warnings: Vec::new(),
        }
    }

    pub fn with_new_id(genre: Genre, starting_words: &str, seed: u64) -> Self {
        Self::new(ulid::Ulid::new().to_string(), genre, starting_words, seed)
    }

    pub fn set_status(&mut self, next: SessionStatus) {
        debug_assert!(self.status.can_become(next), "{:?} -> {next:?}", self.status);
        self.status = next;
    }

    pub fn rendered_script(&self) -> String {
        self.script.as_ref().map(render_script).unwrap_or_default()
    }

    pub fn scene_count(&self) -> usize {
        self.script.as_ref().map_or(0, |s| s.scenes.len())
    }

    /// Scene, sentence and presentation counts agree.
    pub fn cardinalities_agree(&self) -> bool {
        let sentences = self.plot.as_ref().map_or(0, |p| p.sentences.len());
        sentences == self.scene_count() && self.scene_count() == self.presentation.len()
    }
}

/// One JSON file per session.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    pub fn open(dir: &Path) -> Result<Self, SessionError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Option<PathBuf> {
        valid_id(id).then(|| self.dir.join(format!("{id}.json")))
    }

    pub fn persist(&self, session: &Session) -> Result<(), SessionError> {
        let path = self
            .path(&session.id)
            .ok_or_else(|| SessionError::CorruptSessionRecord {
                id: session.id.clone(),
                detail: "id is not a file-safe token".into(),
            })?;
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_vec_pretty(session).map_err(|e| SessionError::CorruptSessionRecord {
            id: session.id.clone(),
            detail: e.to_string(),
        })?;
        std::fs::write(&tmp, body)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn restore(&self, id: &str) -> Result<Session, SessionError> {
        let path = self
            .path(id)
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(SessionError::UnknownSession(id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let session: Session = serde_json::from_str(&text).map_err(|e| SessionError::CorruptSessionRecord {
            id: id.to_string(),
            detail: e.to_string(),
        })?;
        if session.id != id {
            return Err(SessionError::CorruptSessionRecord {
                id: id.to_string(),
                detail: format!("record holds session {}", session.id),
            });
        }
        Ok(session)
    }
}

/// A cached session: readers take snapshots, writers hold the session's
/// writer lock for the whole of a run or steer.
#[derive(Debug)]
pub struct SessionSlot {
    state: RwLock<Session>,
    writer: Mutex<()>,
}

impl SessionSlot {
    fn new(session: Session) -> Self {
        Self {
            state: RwLock::new(session),
            writer: Mutex::new(()),
        }
    }

    pub fn snapshot(&self) -> Session {
        self.state.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Serializes writers of this session.
    pub fn lock_writer(&self) -> MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn replace(&self, session: Session) {
        *self.state.write().unwrap_or_else(|e| e.into_inner()) = session;
    }
}

/// In-memory cache in front of an optional [`SessionStore`].
#[derive(Debug, Default)]
pub struct SessionManager {
    store: Option<SessionStore>,
    cache: Mutex<HashMap<String, Arc<SessionSlot>>>,
}

impl SessionManager {
    pub fn new(store: Option<SessionStore>) -> Self {
        Self {
            store,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn in_memory() -> Self {
        Self::new(None)
    }

    pub fn insert(&self, session: Session) -> Result<Arc<SessionSlot>, SessionError> {
        if let Some(store) = &self.store {
            store.persist(&session)?;
        }
        let slot = Arc::new(SessionSlot::new(session.clone()));
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(session.id, slot.clone());
        Ok(slot)
    }

    pub fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, SessionError> {
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(slot) = cache.get(id) {
            return Ok(slot.clone());
        }
        let store = self
            .store
            .as_ref()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        let slot = Arc::new(SessionSlot::new(store.restore(id)?));
        cache.insert(id.to_string(), slot.clone());
        Ok(slot)
    }

    pub fn get(&self, id: &str) -> Result<Session, SessionError> {
        Ok(self.slot(id)?.snapshot())
    }

    /// Publishes a new state for readers and persists it. Callers should
    /// hold the slot's writer lock.
    pub fn commit(&self, slot: &SessionSlot, session: Session) -> Result<(), SessionError> {
        if let Some(store) = &self.store {
            store.persist(&session)?;
        }
        slot.replace(session);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Session {
        let mut s = Session::new("01HZTESTSESSION".into(), Genre::War, "The convoy", 9);
        s.history.push(SteerEvent::now(Some(Genre::Romance), Some("  ".into())));
        s
    }

    #[test]
    fn status_transitions_are_monotone() {
        use SessionStatus::*;
        assert!(Pending.can_become(Running));
        assert!(Running.can_become(Failed));
        assert!(!Complete.can_become(Running));
        assert!(!Pending.can_become(Complete));
        assert!(!Failed.can_become(Complete));
    }

    #[test]
    fn steer_event_validity() {
        assert!(!SteerEvent::now(None, Some(" ".into())).is_valid());
        assert!(SteerEvent::now(None, Some("a storm".into())).is_valid());
        assert!(SteerEvent::now(Some(Genre::War), None).is_valid());
    }

    #[test]
    fn store_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::open(dir.path()).unwrap();
        let s = sample();
        store.persist(&s).unwrap();
        store.persist(&s).unwrap();
        assert_eq!(store.restore(&s.id).unwrap(), s);
        assert!(matches!(store.restore("NOPE"), Err(SessionError::UnknownSession(_))));
        assert!(matches!(store.restore("../etc"), Err(SessionError::UnknownSession(_))));
        std::fs::write(dir.path().join("BROKEN.json"), "{").unwrap();
        assert!(matches!(
            store.restore("BROKEN"),
            Err(SessionError::CorruptSessionRecord { .. })
        ));
    }

    #[test]
    fn manager_restores_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let s = sample();
        SessionManager::new(Some(SessionStore::open(dir.path()).unwrap()))
            .insert(s.clone())
            .unwrap();
        let fresh = SessionManager::new(Some(SessionStore::open(dir.path()).unwrap()));
        assert_eq!(fresh.get(&s.id).unwrap(), s);
        assert!(matches!(
            SessionManager::in_memory().get(&s.id),
            Err(SessionError::UnknownSession(_))
        ));
    }

    #[test]
    fn generated_ids_sort_by_creation() {
        let a = Session::with_new_id(Genre::Crime, "x", 0);
        std::thread::sleep(std::time::Duration::from_millis(2));
        let b = Session::with_new_id(Genre::Crime, "x", 0);
        assert!(a.id < b.id);
        assert!(valid_id(&a.id));
    }
}
