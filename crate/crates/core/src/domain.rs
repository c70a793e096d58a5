//! Plots, scenes, dialogue turns and scripts, plus the canonical text rendering.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::normalize_whitespace;

/// Script genre. `GenreFree` runs the pipeline without a control code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Genre {
    Crime,
    #[serde(alias = "scifi")]
    SciFi,
    War,
    Romance,
    GenreFree,
}

impl Genre {
    /// Genres the classifier predicts over, in canonical order.
    pub const CLASSES: [Genre; 4] = [Genre::Crime, Genre::SciFi, Genre::War, Genre::Romance];

    pub const ALL: [Genre; 5] = [Genre::Crime, Genre::SciFi, Genre::War, Genre::Romance, Genre::GenreFree];

    /// Lowercase genre word used inside the control code, `None` for `GenreFree`.
    pub fn control_word(self) -> Option<&'static str> {
        match self {
            Genre::Crime => Some("crime"),
            Genre::SciFi => Some("sci-fi"),
            Genre::War => Some("war"),
            Genre::Romance => Some("romance"),
            Genre::GenreFree => None,
        }
    }

    /// Full control-code sentence, e.g. `"This is a crime plot."`.
    pub fn control_code(self) -> Option<String> {
        self.control_word().map(|w| format!("This is a {w} plot."))
    }

    /// Stable machine key (matches the serde form).
    pub fn key(self) -> &'static str {
        match self {
            Genre::Crime => "crime",
            Genre::SciFi => "sci-fi",
            Genre::War => "war",
            Genre::Romance => "romance",
            Genre::GenreFree => "genre-free",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Genre::Crime => "Crime",
            Genre::SciFi => "Sci-Fi",
            Genre::War => "War",
            Genre::Romance => "Romance",
            Genre::GenreFree => "Genre-Free",
        }
    }

    pub fn is_free(self) -> bool {
        self == Genre::GenreFree
    }
}

impl fmt::Display for Genre {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown genre `{0}`")]
pub struct UnknownGenre(pub String);

impl FromStr for Genre {
    type Err = UnknownGenre;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded: String = s
            .trim()
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .flat_map(char::to_lowercase)
            .collect();
        match folded.as_str() {
            "crime" => Ok(Genre::Crime),
            "scifi" => Ok(Genre::SciFi),
            "war" => Ok(Genre::War),
            "romance" => Ok(Genre::Romance),
            "genrefree" | "free" | "none" => Ok(Genre::GenreFree),
            _ => Err(UnknownGenre(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotCandidate {
    pub text: String,
    pub candidate_index: usize,
    /// Classifier probability of the requested genre, filled by rescoring.
    pub target_genre_prob: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PlotSentence {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plot {
    pub text: String,
    pub genre: Genre,
    pub sentences: Vec<PlotSentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueTurn {
    pub speaker: String,
    pub utterance: String,
}

pub const MAX_SPEAKER_CHARS: usize = 30;

impl DialogueTurn {
    pub fn new(speaker: impl Into<String>, utterance: impl Into<String>) -> Self {
        Self {
            speaker: speaker.into(),
            utterance: utterance.into(),
        }
    }

    pub fn speaker_is_valid(&self) -> bool {
        let s = self.speaker.trim();
        !s.is_empty() && self.speaker.chars().count() <= MAX_SPEAKER_CHARS && !self.speaker.contains(['\n', '\r', ':'])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Setting {
    Int,
    Ext,
    IntExt,
    Unknown,
}

impl Setting {
    fn heading(self) -> &'static str {
        match self {
            Setting::Int => "INT",
            Setting::Ext => "EXT",
            Setting::IntExt => "INT./EXT",
            Setting::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TimeOfDay {
    Day,
    Night,
    Unknown,
}

impl TimeOfDay {
    pub fn is_known(self) -> bool {
        self != TimeOfDay::Unknown
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TimeOfDay::Day => "DAY",
            TimeOfDay::Night => "NIGHT",
            TimeOfDay::Unknown => "UNKNOWN",
        }
    }
}

impl FromStr for TimeOfDay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "DAY" => Ok(TimeOfDay::Day),
            "NIGHT" => Ok(TimeOfDay::Night),
            "UNKNOWN" => Ok(TimeOfDay::Unknown),
            other => Err(format!("unknown time of day `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneHeader {
    pub setting: Setting,
    pub location: String,
    pub time_of_day: TimeOfDay,
}

impl SceneHeader {
    pub fn new(setting: Setting, location: &str, time_of_day: TimeOfDay) -> Self {
        Self {
            setting,
            location: normalize_whitespace(location).to_uppercase(),
            time_of_day,
        }
    }

    /// Header used when a generated scene has no parseable heading.
    pub fn unknown() -> Self {
        Self::new(Setting::Unknown, "UNKNOWN", TimeOfDay::Unknown)
    }

    /// `"<SETTING>. <LOCATION> - <TIME>"`; the time part is omitted when unknown.
    pub fn to_line(&self) -> String {
        let mut line = format!("{}. {}", self.setting.heading(), self.location);
        if self.time_of_day.is_known() {
            line.push_str(" - ");
            line.push_str(self.time_of_day.as_str());
        }
        line
    }
}

/// Fallback markers recorded while building a scene.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneFlags {
    /// Scene generation produced no parseable header.
    pub header_fallback: bool,
    /// Scene generation produced no description text.
    pub description_missing: bool,
    /// Dialogue generation failed twice and a narrator line was used.
    pub dialogue_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scene {
    pub header: SceneHeader,
    pub description: String,
    pub turns: Vec<DialogueTurn>,
    pub source_sentence: PlotSentence,
    #[serde(default)]
    pub flags: SceneFlags,
}

impl Scene {
    pub fn distinct_speakers(&self) -> usize {
        let mut names: Vec<String> = self.turns.iter().map(|t| t.speaker.to_uppercase()).collect();
        names.sort();
        names.dedup();
        names.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    pub genre: Genre,
    pub plot: Plot,
    pub scenes: Vec<Scene>,
}

impl Script {
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

fn render_scene(scene: &Scene) -> String {
    let mut out = scene.header.to_line();
    out.push_str("\n\n");
    if !scene.description.is_empty() {
        out.push_str(&scene.description);
        out.push_str("\n\n");
    }
    let turns: Vec<String> = scene
        .turns
        .iter()
        .map(|t| format!("{}\n  {}", t.speaker.to_uppercase(), t.utterance))
        .collect();
    out.push_str(&turns.join("\n\n"));
    out
}

/// Canonical screenplay-like rendering. Scenes are separated by two blank lines.
pub fn render_script(script: &Script) -> String {
    script
        .scenes
        .iter()
        .map(render_scene)
        .collect::<Vec<_>>()
        .join("\n\n\n")
}

/// A broken script invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    SceneCount { scenes: usize, sentences: usize },
    NoPlotSentences,
    SentenceIndex { position: usize, found: usize },
    EmptySentence { position: usize },
    PlotTextMismatch,
    SceneSource { scene: usize, found: usize },
    EmptyDialogue { scene: usize },
    InvalidSpeaker { scene: usize, turn: usize },
    EmptyUtterance { scene: usize, turn: usize },
    MissingDescription { scene: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SceneCount { scenes, sentences } => {
                write!(f, "cardinality: {scenes} scenes for {sentences} plot sentences")
            }
            Violation::NoPlotSentences => write!(f, "plot has no sentences"),
            Violation::SentenceIndex { position, found } => {
                write!(f, "plot sentence {position} carries index {found}")
            }
            Violation::EmptySentence { position } => write!(f, "plot sentence {position} is empty"),
            Violation::PlotTextMismatch => write!(f, "plot sentences do not reconstruct the plot text"),
            Violation::SceneSource { scene, found } => {
                write!(f, "scene {scene} is built from sentence {found}")
            }
            Violation::EmptyDialogue { scene } => write!(f, "empty dialogue in scene {scene}"),
            Violation::InvalidSpeaker { scene, turn } => {
                write!(f, "invalid speaker in scene {scene} turn {turn}")
            }
            Violation::EmptyUtterance { scene, turn } => {
                write!(f, "empty utterance in scene {scene} turn {turn}")
            }
            Violation::MissingDescription { scene } => {
                write!(f, "scene {scene} has an empty description without a fallback flag")
            }
        }
    }
}

/// Lists every broken invariant; an empty list means the script is valid.
pub fn validate_script(script: &Script) -> Vec<Violation> {
    let mut out = Vec::new();
    let plot = &script.plot;
    if plot.sentences.is_empty() {
        out.push(Violation::NoPlotSentences);
    }
    for (position, s) in plot.sentences.iter().enumerate() {
        if s.index != position {
            out.push(Violation::SentenceIndex {
                position,
                found: s.index,
            });
        }
        if s.text.trim().is_empty() {
            out.push(Violation::EmptySentence { position });
        }
    }
    let joined = plot
        .sentences
        .iter()
        .map(|s| s.text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    if !plot.sentences.is_empty() && normalize_whitespace(&joined) != normalize_whitespace(&plot.text) {
        out.push(Violation::PlotTextMismatch);
    }
    if script.scenes.len() != plot.sentences.len() {
        out.push(Violation::SceneCount {
            scenes: script.scenes.len(),
            sentences: plot.sentences.len(),
        });
    }
    for (i, scene) in script.scenes.iter().enumerate() {
        if scene.source_sentence.index != i {
            out.push(Violation::SceneSource {
                scene: i,
                found: scene.source_sentence.index,
            });
        }
        if scene.turns.is_empty() {
            out.push(Violation::EmptyDialogue { scene: i });
        }
        for (t, turn) in scene.turns.iter().enumerate() {
            if !turn.speaker_is_valid() {
                out.push(Violation::InvalidSpeaker { scene: i, turn: t });
            }
            if turn.utterance.trim().is_empty() {
                out.push(Violation::EmptyUtterance { scene: i, turn: t });
            }
        }
        if scene.description.trim().is_empty() && !(scene.flags.description_missing || scene.flags.header_fallback) {
            out.push(Violation::MissingDescription { scene: i });
        }
    }
    out
}
