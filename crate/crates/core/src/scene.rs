//! Scene descriptions from dialogue, scene-header parsing, banned-word
//! filtering and script assembly.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::LazyLock;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::Dialogue;
use crate::domain::{DialogueTurn, Plot, PlotSentence, Scene, SceneFlags, SceneHeader, Script, Setting, TimeOfDay};
use crate::gateway::{GatewayError, TextGenerator};
use crate::plot::DecodingParams;

pub const SCENE_PROMPT_PREFIX: &str = "Dialogue:\n";
pub const SCENE_PROMPT_MARKER: &str = "\nScene:\n";
pub const REDACTION: &str = "████";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("expected {sentences} dialogues and scene parts, got {dialogues} and {parts}")]
    CardinalityMismatch {
        sentences: usize,
        dialogues: usize,
        parts: usize,
    },
    #[error("dialogue {position} belongs to sentence {found}, expected {expected}")]
    Misaligned {
        position: usize,
        expected: usize,
        found: usize,
    },
    #[error("dialogue has no turns")]
    EmptyDialogue,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Header and description generated for one dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneParts {
    pub header: SceneHeader,
    pub description: String,
    /// The first output line was not a scene header.
    pub header_fallback: bool,
}

pub fn render_turns(turns: &[DialogueTurn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker, t.utterance))
        .collect::<Vec<_>>()
        .join("\n")
}

/// `"Dialogue:\n{turns}\nScene:\n"`.
pub fn build_scene_prompt(turns: &[DialogueTurn]) -> String {
    format!("{SCENE_PROMPT_PREFIX}{}{SCENE_PROMPT_MARKER}", render_turns(turns))
}

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    RegexBuilder::new(r"^\s*(INT\./EXT|INT/EXT|INT|EXT)(?:\.\s*|\s+)([^-–—\s].*?)(?:\s*[-–—]\s*(DAY|NIGHT))?\s*$")
        .case_insensitive(true)
        .build()
        .expect("header pattern compiles")
});

/// Total parser; a line without a setting prefix yields `(UNKNOWN, "", UNKNOWN)`.
pub fn parse_scene_header(line: &str) -> SceneHeader {
    let failed = SceneHeader::new(Setting::Unknown, "", TimeOfDay::Unknown);
    let Some(caps) = HEADER.captures(line) else {
        return failed;
    };
    let setting = match caps[1].to_ascii_uppercase().as_str() {
        "INT" => Setting::Int,
        "EXT" => Setting::Ext,
        _ => Setting::IntExt,
    };
    let location = caps[2].trim().trim_end_matches(['.', '-', '–', '—']).trim();
    if location.is_empty() {
        return failed;
    }
    let time = caps
        .get(3)
        .and_then(|m| m.as_str().parse().ok())
        .unwrap_or(TimeOfDay::Unknown);
    SceneHeader::new(setting, location, time)
}

fn header_parsed(h: &SceneHeader) -> bool {
    h.setting != Setting::Unknown && !h.location.is_empty()
}

/// Splits raw model output into header and description.
pub fn split_scene_output(raw: &str) -> SceneParts {
    let text = raw.trim();
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let header = parse_scene_header(first);
    if header_parsed(&header) {
        SceneParts {
            header,
            description: rest.trim().to_string(),
            header_fallback: false,
        }
    } else {
        SceneParts {
            header: SceneHeader::unknown(),
            description: text.to_string(),
            header_fallback: true,
        }
    }
}

pub fn generate_scene_description(
    generator: &dyn TextGenerator,
    dialogue: &Dialogue,
    decoding: &DecodingParams,
    seed: u64,
) -> Result<SceneParts, SceneError> {
    if dialogue.turns.is_empty() {
        return Err(SceneError::EmptyDialogue);
    }
    let request = decoding.request(build_scene_prompt(&dialogue.turns), 1, seed, None);
    let raw = generator
        .generate_text(&request)?
        .into_iter()
        .next()
        .unwrap_or_default();
    Ok(split_scene_output(&raw))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    #[default]
    Word,
    Substring,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BanListError {
    #[error("banlist contains an empty term")]
    EmptyTerm,
    #[error("reading banlist: {0}")]
    Io(String),
}

/// Lowercase terms matched case-insensitively.
#[derive(Debug, Clone)]
pub struct BanList {
    terms: BTreeSet<String>,
    mode: MatchMode,
    pattern: Option<Regex>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redaction {
    pub term: String,
    /// Byte offset in the unfiltered text.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub clean_text: String,
    pub redactions: Vec<Redaction>,
}

impl BanList {
    pub fn new<I, S>(terms: I, mode: MatchMode) -> Result<Self, BanListError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = BTreeSet::new();
        for t in terms {
            let t = t.as_ref().trim().to_lowercase();
            if t.is_empty() {
                return Err(BanListError::EmptyTerm);
            }
            set.insert(t);
        }
        let pattern = (!set.is_empty()).then(|| {
            // Longest first so overlapping terms redact the widest match.
            let mut ordered: Vec<&String> = set.iter().collect();
            ordered.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
            let alt = ordered.iter().map(|t| regex::escape(t)).collect::<Vec<_>>().join("|");
            let src = match mode {
                MatchMode::Word => format!(r"\b(?:{alt})\b"),
                MatchMode::Substring => format!("(?:{alt})"),
            };
            RegexBuilder::new(&src)
                .case_insensitive(true)
                .build()
                .expect("escaped terms compile")
        });
        Ok(Self {
            terms: set,
            mode,
            pattern,
        })
    }

    pub fn empty() -> Self {
        Self::new(Vec::<String>::new(), MatchMode::Word).expect("empty list is valid")
    }

    /// One term per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, mode: MatchMode) -> Result<Self, BanListError> {
        let terms = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty());
        Self::new(terms, mode)
    }

    pub fn load(path: &Path, mode: MatchMode) -> Result<Self, BanListError> {
        let text = std::fs::read_to_string(path).map_err(|e| BanListError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text, mode)
    }

    /// The placeholder list shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(include_str!("../data/banlist.txt"), MatchMode::Word).expect("builtin banlist is valid")
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains_banned(&self, text: &str) -> bool {
        self.pattern.as_ref().is_some_and(|p| p.is_match(text))
    }
}

pub fn filter_banned_content(text: &str, banlist: &BanList) -> FilterOutcome {
    let Some(pattern) = &banlist.pattern else {
        return FilterOutcome {
            clean_text: text.to_string(),
            redactions: Vec::new(),
        };
    };
    let mut redactions = Vec::new();
    let clean_text = pattern
        .replace_all(text, |caps: &regex::Captures<'_>| {
            let m = caps.get(0).expect("whole match");
            redactions.push(Redaction {
                term: m.as_str().to_lowercase(),
                position: m.start(),
            });
            REDACTION
        })
        .into_owned();
    FilterOutcome { clean_text, redactions }
}

/// Redactions made while assembling, located by scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRedaction {
    pub scene: usize,
    pub field: String,
    pub redaction: Redaction,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assembly {
    pub script: Script,
    pub redactions: Vec<SceneRedaction>,
}

struct Redactor<'a> {
    banlist: &'a BanList,
    scene: usize,
    log: Vec<SceneRedaction>,
}

impl Redactor<'_> {
    fn clean(&mut self, field: &str, text: &str) -> String {
        let out = filter_banned_content(text, self.banlist);
        self.log
            .extend(out.redactions.into_iter().map(|redaction| SceneRedaction {
                scene: self.scene,
                field: field.to_string(),
                redaction,
            }));
        out.clean_text
    }
}

/// Builds scenes for `sentences` in order. Used directly when appending to
/// an existing script.
pub fn build_scenes(
    sentences: &[PlotSentence],
    dialogues: &[Dialogue],
    parts: &[SceneParts],
    banlist: &BanList,
) -> Result<(Vec<Scene>, Vec<SceneRedaction>), SceneError> {
    if dialogues.len() != sentences.len() || parts.len() != sentences.len() {
        return Err(SceneError::CardinalityMismatch {
            sentences: sentences.len(),
            dialogues: dialogues.len(),
            parts: parts.len(),
        });
    }
    let mut scenes = Vec::with_capacity(sentences.len());
    let mut log = Vec::new();
    for (position, ((sentence, dialogue), part)) in sentences.iter().zip(dialogues).zip(parts).enumerate() {
        if dialogue.source_sentence.index != sentence.index {
            return Err(SceneError::Misaligned {
                position,
                expected: sentence.index,
                found: dialogue.source_sentence.index,
            });
        }
        if dialogue.turns.is_empty() {
            return Err(SceneError::EmptyDialogue);
        }
        let mut r = Redactor {
            banlist,
            scene: sentence.index,
            log: Vec::new(),
        };
        let header = SceneHeader {
            location: r.clean("location", &part.header.location),
            ..part.header.clone()
        };
        let description = r.clean("description", &part.description);
        let turns = dialogue
            .turns
            .iter()
            .map(|t| DialogueTurn {
                speaker: r.clean("speaker", &t.speaker),
                utterance: r.clean("utterance", &t.utterance),
            })
            .collect();
        log.append(&mut r.log);
        scenes.push(Scene {
            header,
            flags: SceneFlags {
                header_fallback: part.header_fallback,
                description_missing: description.trim().is_empty(),
                dialogue_fallback: dialogue.fallback,
            },
            description,
            turns,
            source_sentence: sentence.clone(),
        });
    }
    Ok((scenes, log))
}

pub fn assemble_script(
    plot: &Plot,
    dialogues: &[Dialogue],
    parts: &[SceneParts],
    banlist: &BanList,
) -> Result<Assembly, SceneError> {
    let (scenes, redactions) = build_scenes(&plot.sentences, dialogues, parts, banlist)?;
    for r in &redactions {
        log::info!("redacted `{}` from scene {} {}", r.redaction.term, r.scene, r.field);
    }
    Ok(Assembly {
        script: Script {
            genre: plot.genre,
            plot: plot.clone(),
            scenes,
        },
        redactions,
    })
}
