//! Plot-guided dialogue generation as inverse dialogue summarization.
//!
//! A summarization corpus pairs a dialogue with its summary. Swapping the
//! direction gives training text of the form
//!
//! ```text
//! Summary: <summary>
//! Dialogue:
//! <Name>: <utterance>
//! ...
//! <|endofdialogue|>
//! ```
//!
//! At inference each plot sentence is used as the summary, and the model
//! writes the whole dialogue in one call.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DialogueTurn, PlotSentence, MAX_SPEAKER_CHARS};
use crate::gateway::{GatewayError, TextGenerator};
use crate::plot::DecodingParams;

pub const SUMMARY_PREFIX: &str = "Summary: ";
pub const DIALOGUE_PROMPT_MARKER: &str = "\nDialogue:\n";
pub const END_OF_DIALOGUE: &str = "<|endofdialogue|>";
/// Generation stops at the first blank line.
pub const DIALOGUE_STOP: &str = "\n\n";
pub const NARRATOR: &str = "NARRATOR";

#[derive(Debug, Error)]
pub enum DialogueError {
    #[error("no dialogue turns could be parsed")]
    DialogueParseError,
    #[error("record {index} is malformed: {reason}")]
    MalformedRecord { index: usize, reason: String },
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// One summary/dialogue pair from a summarization corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummarizationRecord {
    pub summary: String,
    #[serde(rename = "dialogue")]
    pub dialogue_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub turns: Vec<DialogueTurn>,
    pub source_sentence: PlotSentence,
    pub raw_text: String,
    /// Fewer than two distinct speakers.
    pub monologue: bool,
    /// Both generation attempts failed to parse; a narrator line stands in.
    pub fallback: bool,
}

fn summary_header(summary: &str) -> String {
    format!("{SUMMARY_PREFIX}{summary}{DIALOGUE_PROMPT_MARKER}")
}

/// `"Summary: {sentence}\nDialogue:\n"`.
pub fn build_dialogue_prompt(sentence: &PlotSentence) -> String {
    summary_header(&sentence.text)
}

static TURN_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\p{Lu}[\p{L}\p{N}'’.\-]*(?: \p{Lu}[\p{L}\p{N}'’.\-]*){0,2}):\s*(.*)$")
        .expect("turn pattern compiles")
});

fn match_turn(line: &str) -> Option<(String, String)> {
    let caps = TURN_LINE.captures(line)?;
    let name = caps.get(1)?.as_str();
    if name.chars().count() > MAX_SPEAKER_CHARS {
        return None;
    }
    Some((
        name.to_string(),
        caps.get(2).map_or("", |m| m.as_str()).trim().to_string(),
    ))
}

/// Parses `Name: utterance` lines. Other lines continue the previous turn;
/// lines before the first turn are dropped, as are turns left without words.
pub fn parse_dialogue(raw: &str) -> Result<Vec<DialogueTurn>, DialogueError> {
    let mut turns: Vec<DialogueTurn> = Vec::new();
    for line in raw.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((speaker, utterance)) = match_turn(line) {
            turns.push(DialogueTurn { speaker, utterance });
        } else if let Some(last) = turns.last_mut() {
            if !last.utterance.is_empty() {
                last.utterance.push(' ');
            }
            last.utterance.push_str(line);
        }
    }
    turns.retain(|t| !t.utterance.is_empty());
    if turns.is_empty() {
        return Err(DialogueError::DialogueParseError);
    }
    Ok(turns)
}

fn distinct_speakers(turns: &[DialogueTurn]) -> usize {
    let mut names: Vec<&str> = turns.iter().map(|t| t.speaker.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    names.len()
}

/// One-shot dialogue for a plot sentence. Unparseable output is retried once
/// with `seed + 1`; a second failure yields a flagged narrator monologue.
pub fn generate_dialogue(
    generator: &dyn TextGenerator,
    sentence: &PlotSentence,
    decoding: &DecodingParams,
    seed: u64,
) -> Result<Dialogue, DialogueError> {
    let prompt = build_dialogue_prompt(sentence);
    let mut raw_text = String::new();
    for attempt_seed in [seed, seed.wrapping_add(1)] {
        let request = decoding.request(prompt.clone(), 1, attempt_seed, Some(DIALOGUE_STOP));
        raw_text = generator
            .generate_text(&request)?
            .into_iter()
            .next()
            .unwrap_or_default();
        if let Ok(turns) = parse_dialogue(&raw_text) {
            return Ok(Dialogue {
                monologue: distinct_speakers(&turns) < 2,
                turns,
                source_sentence: sentence.clone(),
                raw_text,
                fallback: false,
            });
        }
        log::debug!(
            "dialogue for sentence {} unparseable with seed {attempt_seed}",
            sentence.index
        );
    }
    Ok(Dialogue {
        turns: vec![DialogueTurn::new(NARRATOR, sentence.text.clone())],
        source_sentence: sentence.clone(),
        raw_text,
        monologue: true,
        fallback: true,
    })
}

static PERSON_TAG: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"#(Person\d+)#").expect("person tag pattern compiles"));

impl SummarizationRecord {
    /// Normalizes line endings and `#PersonN#` speaker tags.
    pub fn normalized(summary: &str, dialogue: &str) -> Self {
        let dialogue = dialogue.replace("\r\n", "\n").replace('\r', "\n");
        Self {
            summary: summary.trim().to_string(),
            dialogue_text: PERSON_TAG.replace_all(dialogue.trim(), "$1").into_owned(),
        }
    }

    fn check(&self, index: usize) -> Result<(), DialogueError> {
        let bad = |reason: &str| DialogueError::MalformedRecord {
            index,
            reason: reason.to_string(),
        };
        if self.summary.trim().is_empty() {
            return Err(bad("empty summary"));
        }
        if self.summary.contains('\n') {
            return Err(bad("summary spans several lines"));
        }
        if !self.dialogue_text.lines().any(|l| match_turn(l.trim()).is_some()) {
            return Err(bad("dialogue has no `Name: utterance` line"));
        }
        Ok(())
    }
}

/// Training strings in summary-to-dialogue direction, one per record, order kept.
pub fn invert_summarization_corpus(records: &[SummarizationRecord]) -> Result<Vec<String>, DialogueError> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.check(i)?;
            Ok(format!(
                "{}{}\n{END_OF_DIALOGUE}",
                summary_header(&r.summary),
                r.dialogue_text
            ))
        })
        .collect()
}

/// Reads `{"summary", "dialogue"}` records, one JSON object per line.
pub fn load_records(path: &Path) -> Result<Vec<SummarizationRecord>, DialogueError> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (index, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: SummarizationRecord = serde_json::from_str(&line).map_err(|e| DialogueError::MalformedRecord {
            index,
            reason: e.to_string(),
        })?;
        out.push(SummarizationRecord::normalized(&raw.summary, &raw.dialogue_text));
    }
    Ok(out)
}

#[derive(Serialize)]
struct TrainingLine<'a> {
    text: &'a str,
}

/// Writes one `{"text": ...}` object per line; newlines survive as JSON escapes.
pub fn write_training_corpus<W: Write>(strings: &[String], mut out: W) -> std::io::Result<()> {
    for s in strings {
        serde_json::to_writer(&mut out, &TrainingLine { text: s })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
