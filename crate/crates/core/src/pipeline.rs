//! End-to-end pipeline: plot, per-sentence dialogue and scene, assembly,
//! per-sentence clip retrieval and music.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::EngineConfig;
use crate::dialogue::{generate_dialogue, Dialogue};
use crate::domain::{Genre, Plot, PlotCandidate, PlotSentence, Scene};
use crate::gateway::Backends;
use crate::plot::{generate_plot, sample_continuations, score_candidates, segment_plot, PlotError};
use crate::scene::{assemble_script, build_scenes, generate_scene_description, BanList, SceneParts};
use crate::session::{
    PresentationSlot, Session, SessionError, SessionManager, SessionStatus, StageFailure, SteerEvent,
};
use crate::text::{derive_seed, normalize_whitespace};
use crate::video::{load_index, retrieve_clip, MusicMap, MusicTrack, RetrievalConstraints, VideoIndex};

pub const STAGE_PLOT: &str = "plot";
pub const STAGE_DIALOGUE: &str = "dialogue";
pub const STAGE_SCENE: &str = "scene";
pub const STAGE_ASSEMBLY: &str = "assembly";
pub const STAGE_RETRIEVAL: &str = "retrieval";
pub const STAGE_MUSIC: &str = "music";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid steer: {0}")]
    InvalidSteer(String),
    #[error("session {id} is {status:?} and cannot be steered")]
    NotSteerable { id: String, status: SessionStatus },
    #[error("{0}")]
    InvalidInput(String),
    #[error("{stage} stage failed: {cause}")]
    Stage { stage: &'static str, cause: String },
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("setup: {0}")]
    Setup(String),
}

impl PipelineError {
    fn stage(stage: &'static str, cause: impl std::fmt::Display) -> Self {
        PipelineError::Stage {
            stage,
            cause: cause.to_string(),
        }
    }

    pub fn stage_name(&self) -> Option<&'static str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

/// Everything a run needs. Cheap to clone and share across threads.
#[derive(Debug, Clone)]
pub struct Engine {
    pub backends: Backends,
    pub config: EngineConfig,
    pub banlist: Arc<BanList>,
    pub music: Arc<MusicMap>,
    pub index: Option<Arc<VideoIndex>>,
}

/// One expanded plot sentence.
struct Expansion {
    dialogue: Dialogue,
    parts: SceneParts,
}

impl Engine {
    /// Mock backends, built-in banlist and music, no video index.
    pub fn mock() -> Self {
        Self::new(Backends::mock(), EngineConfig::default())
    }

    pub fn new(backends: Backends, config: EngineConfig) -> Self {
        Self {
            backends,
            config,
            banlist: Arc::new(BanList::builtin()),
            music: Arc::new(MusicMap::builtin()),
            index: None,
        }
    }

    /// Loads the banlist, music map and index named in `config`.
    pub fn from_config(backends: Backends, config: EngineConfig) -> Result<Self, PipelineError> {
        let banlist = match &config.banlist_path {
            Some(p) => BanList::load(p, config.banlist_mode).map_err(|e| PipelineError::Setup(e.to_string()))?,
            None => BanList::builtin(),
        };
        let music = match &config.music_map_path {
            Some(p) => MusicMap::load(p).map_err(|e| PipelineError::Setup(e.to_string()))?,
            None => MusicMap::builtin(),
        };
        let index = match &config.index_path {
            Some(p) => Some(Arc::new(
                load_index(p).map_err(|e| PipelineError::Setup(e.to_string()))?,
            )),
            None => None,
        };
        Ok(Self {
            backends,
            config,
            banlist: Arc::new(banlist),
            music: Arc::new(music),
            index,
        })
    }

    pub fn with_index(mut self, index: VideoIndex) -> Self {
        self.index = Some(Arc::new(index));
        self
    }

    pub fn with_banlist(mut self, banlist: BanList) -> Self {
        self.banlist = Arc::new(banlist);
        self
    }

    fn expand_one(&self, sentence: &PlotSentence, seed: u64) -> Result<Expansion, PipelineError> {
        let i = sentence.index as u64;
        let dialogue = generate_dialogue(
            self.backends.generator.as_ref(),
            sentence,
            &self.config.dialogue,
            derive_seed(seed, STAGE_DIALOGUE, i),
        )
        .map_err(|e| PipelineError::stage(STAGE_DIALOGUE, e))?;
        let parts = generate_scene_description(
            self.backends.generator.as_ref(),
            &dialogue,
            &self.config.scene,
            derive_seed(seed, STAGE_SCENE, i),
        )
        .map_err(|e| PipelineError::stage(STAGE_SCENE, e))?;
        Ok(Expansion { dialogue, parts })
    }

    /// Dialogue and scene parts for each sentence. Sentences run in
    /// parallel; results come back in sentence order.
    fn expand(&self, sentences: &[PlotSentence], seed: u64) -> Result<(Vec<Dialogue>, Vec<SceneParts>), PipelineError> {
        let expansions = sentences
            .par_iter()
            .map(|s| self.expand_one(s, seed))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(expansions.into_iter().map(|e| (e.dialogue, e.parts)).unzip())
    }

    fn constraints(genre: Genre, scene: &Scene) -> RetrievalConstraints {
        RetrievalConstraints {
            genre: (!genre.is_free()).then_some(genre),
            time_of_day: scene.header.time_of_day.is_known().then_some(scene.header.time_of_day),
            min_char_count: Some(scene.distinct_speakers() as u32),
            required_genders: None,
        }
    }

    /// One slot per scene, in scene order. Without an index every slot is
    /// empty and a warning is returned.
    fn present(
        &self,
        genre: Genre,
        scenes: &[Scene],
    ) -> Result<(Vec<PresentationSlot>, Option<String>), PipelineError> {
        let index = match &self.index {
            Some(index) if !index.is_empty() => index,
            _ => {
                let slots = scenes
                    .iter()
                    .map(|s| PresentationSlot {
                        scene_index: s.source_sentence.index,
                        clip: None,
                        score: None,
                        relaxed: false,
                    })
                    .collect();
                return Ok((slots, Some("video index is empty; scenes have no clips".into())));
            }
        };
        let slots = scenes
            .par_iter()
            .map(|scene| {
                let r = retrieve_clip(
                    self.backends.embedder.as_ref(),
                    &scene.source_sentence.text,
                    index,
                    &Self::constraints(genre, scene),
                )
                .map_err(|e| PipelineError::stage(STAGE_RETRIEVAL, e))?;
                let best = r.best().cloned();
                Ok(PresentationSlot {
                    scene_index: scene.source_sentence.index,
                    score: best.as_ref().map(|h| h.score),
                    clip: best.map(|h| h.clip),
                    relaxed: r.relaxed(),
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok((slots, None))
    }

    fn music_for(&self, genre: Genre) -> Result<MusicTrack, PipelineError> {
        self.music
            .select_music(genre)
            .map_err(|e| PipelineError::stage(STAGE_MUSIC, e))
    }

    fn run_stages(&self, session: &mut Session) -> Result<(), PipelineError> {
        let selection = generate_plot(
            &self.backends,
            session.genre,
            &session.starting_words,
            &self.config.rescore,
            session.seed,
        )
        .map_err(|e| PipelineError::stage(STAGE_PLOT, e))?;
        let plot = selection.plot;
        session.candidates = selection.candidates;
        let (dialogues, parts) = self.expand(&plot.sentences, session.seed)?;
        let assembly = assemble_script(&plot, &dialogues, &parts, &self.banlist)
            .map_err(|e| PipelineError::stage(STAGE_ASSEMBLY, e))?;
        let (presentation, warning) = self.present(session.genre, &assembly.script.scenes)?;
        session.music = Some(self.music_for(session.genre)?);
        session.warnings.extend(warning);
        session.plot = Some(plot);
        session.script = Some(assembly.script);
        session.presentation = presentation;
        Ok(())
    }

    /// Runs every stage on a pending or running session and returns it
    /// complete, or failed with the stage and cause recorded.
    pub fn execute(&self, mut session: Session) -> Session {
        if session.status == SessionStatus::Pending {
            session.set_status(SessionStatus::Running);
        }
        match self.run_stages(&mut session) {
            Ok(()) => session.set_status(SessionStatus::Complete),
            Err(e) => {
                log::warn!("session {} failed: {e}", session.id);
                session.failure = Some(StageFailure {
                    stage: e.stage_name().unwrap_or("pipeline").to_string(),
                    cause: e.to_string(),
                });
                session.set_status(SessionStatus::Failed);
            }
        }
        session
    }

    pub fn run_pipeline(&self, genre: Genre, starting_words: &str, seed: u64) -> Session {
        self.execute(Session::with_new_id(genre, starting_words, seed))
    }

    /// Continues a complete session. Only the new plot sentences are
    /// expanded; earlier scenes and slots are left as they are. On error the
    /// input session is untouched.
    pub fn steer(&self, session: &Session, event: SteerEvent) -> Result<Session, PipelineError> {
        if !event.is_valid() {
            return Err(PipelineError::InvalidSteer("give a genre or some words".into()));
        }
        if !matches!(session.status, SessionStatus::Running | SessionStatus::Complete) {
            return Err(PipelineError::NotSteerable {
                id: session.id.clone(),
                status: session.status,
            });
        }
        let (Some(plot), Some(script)) = (&session.plot, &session.script) else {
            return Err(PipelineError::NotSteerable {
                id: session.id.clone(),
                status: session.status,
            });
        };
        let mut next = session.clone();
        let genre = event.new_genre.unwrap_or(session.genre);
        let words = event.injected_words.clone().unwrap_or_default();
        next.history.push(event);
        let seed = session.seed.wrapping_add(next.history.len() as u64);

        let new_part = self.steer_plot(genre, plot, &words, seed)?;
        let offset = plot.sentences.len();
        let new_sentences: Vec<PlotSentence> = segment_plot(&new_part)
            .map_err(|e| PipelineError::stage(STAGE_PLOT, e))?
            .into_iter()
            .map(|s| PlotSentence {
                index: s.index + offset,
                text: s.text,
            })
            .collect();
        let (dialogues, parts) = self.expand(&new_sentences, seed)?;
        let (scenes, redactions) = build_scenes(&new_sentences, &dialogues, &parts, &self.banlist)
            .map_err(|e| PipelineError::stage(STAGE_ASSEMBLY, e))?;
        for r in &redactions {
            log::info!("redacted `{}` from scene {} {}", r.redaction.term, r.scene, r.field);
        }
        let (slots, warning) = self.present(genre, &scenes)?;

        let mut new_plot = Plot {
            text: normalize_whitespace(&format!("{} {new_part}", plot.text)),
            genre,
            sentences: plot.sentences.clone(),
        };
        new_plot.sentences.extend(new_sentences);
        let mut new_script = script.clone();
        new_script.genre = genre;
        new_script.plot = new_plot.clone();
        new_script.scenes.extend(scenes);

        next.genre = genre;
        next.plot = Some(new_plot);
        next.script = Some(new_script);
        next.presentation.extend(slots);
        next.music = Some(self.music_for(genre)?);
        if let Some(w) = warning.filter(|w| !next.warnings.contains(w)) {
            next.warnings.push(w);
        }
        Ok(next)
    }

    /// New plot text: the injected words plus the best continuation of
    /// `plot + words` under the current genre's control code.
    fn steer_plot(&self, genre: Genre, plot: &Plot, words: &str, seed: u64) -> Result<String, PipelineError> {
        let context = normalize_whitespace(&format!("{} {words}", plot.text));
        let cfg = if genre.is_free() {
            crate::plot::RescoreConfig {
                num_candidates: 1,
                ..self.config.rescore
            }
        } else {
            self.config.rescore
        };
        let plot_err = |e: PlotError| PipelineError::stage(STAGE_PLOT, e);
        let continuations =
            sample_continuations(self.backends.generator.as_ref(), genre, &context, &cfg, seed).map_err(plot_err)?;
        let mut candidates: Vec<PlotCandidate> = continuations
            .iter()
            .enumerate()
            .map(|(i, c)| PlotCandidate {
                text: normalize_whitespace(&format!("{words} {c}")),
                candidate_index: i,
                target_genre_prob: None,
            })
            .filter(|c| !c.text.is_empty())
            .collect();
        if candidates.is_empty() {
            return Err(plot_err(PlotError::AllCandidatesEmpty));
        }
        let selected = if genre.is_free() {
            0
        } else {
            score_candidates(self.backends.classifier.as_ref(), &mut candidates, genre).map_err(plot_err)?
        };
        Ok(candidates.swap_remove(selected).text)
    }
}

/// Runs and steers sessions held by a [`SessionManager`], one writer per
/// session at a time.
#[derive(Debug, Clone)]
pub struct Orchestrator {
    pub engine: Arc<Engine>,
    pub sessions: Arc<SessionManager>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresentationView {
    pub status: SessionStatus,
    pub clips: Vec<ClipRef>,
    pub music: Option<MusicTrack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRef {
    pub scene_index: usize,
    pub clip_id: Option<String>,
    pub uri: Option<String>,
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
    pub score: Option<f64>,
    pub relaxed: bool,
}

impl PresentationView {
    pub fn of(session: &Session) -> Self {
        let mut slots: Vec<&PresentationSlot> = session.presentation.iter().collect();
        slots.sort_by_key(|s| s.scene_index);
        Self {
            status: session.status,
            clips: slots
                .into_iter()
                .map(|s| ClipRef {
                    scene_index: s.scene_index,
                    clip_id: s.clip.as_ref().map(|c| c.id.clone()),
                    uri: s.clip.as_ref().map(|c| c.video_uri.clone()),
                    start_s: s.clip.as_ref().map(|c| c.start_s),
                    end_s: s.clip.as_ref().map(|c| c.end_s),
                    score: s.score,
                    relaxed: s.relaxed,
                })
                .collect(),
            music: session.music.clone(),
        }
    }
}

impl Orchestrator {
    pub fn new(engine: Engine, sessions: SessionManager) -> Self {
        Self {
            engine: Arc::new(engine),
            sessions: Arc::new(sessions),
        }
    }

    /// Registers a pending session and returns its id without running it.
    pub fn create(&self, genre: Genre, starting_words: &str, seed: u64) -> Result<String, PipelineError> {
        if starting_words.trim().is_empty() {
            return Err(PipelineError::InvalidInput("starting words are empty".into()));
        }
        let session = Session::with_new_id(genre, starting_words, seed);
        let id = session.id.clone();
        self.sessions.insert(session)?;
        Ok(id)
    }

    /// Runs a pending session to completion. Blocking.
    pub fn run(&self, id: &str) -> Result<Session, PipelineError> {
        let slot = self.sessions.slot(id)?;
        let _writer = slot.lock_writer();
        let mut session = slot.snapshot();
        if session.status != SessionStatus::Pending {
            return Ok(session);
        }
        session.set_status(SessionStatus::Running);
        self.sessions.commit(&slot, session.clone())?;
        let done = self.engine.execute(session);
        self.sessions.commit(&slot, done.clone())?;
        Ok(done)
    }

    /// Waits for any run or steer in progress, then steers. Blocking.
    pub fn steer(&self, id: &str, event: SteerEvent) -> Result<Session, PipelineError> {
        if !event.is_valid() {
            return Err(PipelineError::InvalidSteer("give a genre or some words".into()));
        }
        let slot = self.sessions.slot(id)?;
        let _writer = slot.lock_writer();
        let next = self.engine.steer(&slot.snapshot(), event)?;
        self.sessions.commit(&slot, next.clone())?;
        Ok(next)
    }

    pub fn get(&self, id: &str) -> Result<Session, PipelineError> {
        Ok(self.sessions.get(id)?)
    }

    pub fn presentation(&self, id: &str) -> Result<PresentationView, PipelineError> {
        Ok(PresentationView::of(&self.get(id)?))
    }
}
