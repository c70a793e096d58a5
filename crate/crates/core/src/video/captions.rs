//! Caption sentence segmentation, including unpunctuated auto-captions.

use serde::{Deserialize, Serialize};

use crate::plot::segment_plot;

pub const MAX_CHUNK_TOKENS: usize = 25;
pub const DISCOURSE_CUES: [&str; 5] = ["and", "but", "so", "then", "because"];

/// One timed caption line as delivered with a video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionCue {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

/// All captions of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionTrack {
    pub video_uri: String,
    pub cues: Vec<CaptionCue>,
}

/// A caption sentence with the time span it was given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSentence {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

fn has_terminal_punctuation(text: &str) -> bool {
    text.contains(['.', '!', '?'])
}

fn is_cue(token: &str) -> bool {
    let t = token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase();
    DISCOURSE_CUES.contains(&t.as_str())
}

/// Greedy chunks of at most 25 tokens. A chunk that would overflow is cut
/// before the last discourse cue it contains, or hard at 25 tokens.
fn chunk_unpunctuated(tokens: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = tokens;
    while rest.len() > MAX_CHUNK_TOKENS {
        let window = &rest[..MAX_CHUNK_TOKENS];
        let cut = (1..MAX_CHUNK_TOKENS)
            .rev()
            .find(|&i| is_cue(window[i]))
            .unwrap_or(MAX_CHUNK_TOKENS);
        out.push(rest[..cut].join(" "));
        rest = &rest[cut..];
    }
    if !rest.is_empty() {
        out.push(rest.join(" "));
    }
    out
}

/// Splits caption text into sentences. Punctuated text follows the plot
/// sentence rules; otherwise the chunking fallback applies.
pub fn segment_caption(raw: &str) -> Vec<String> {
    if has_terminal_punctuation(raw) {
        if let Ok(sentences) = segment_plot(raw) {
            return sentences.into_iter().map(|s| s.text).collect();
        }
    }
    let tokens: Vec<&str> = raw.split_whitespace().collect();
    chunk_unpunctuated(&tokens)
}

/// Segments a cue and shares its time span out in proportion to token counts.
pub fn segment_cue(cue: &CaptionCue) -> Vec<TimedSentence> {
    let sentences = segment_caption(&cue.text);
    let counts: Vec<usize> = sentences.iter().map(|s| s.split_whitespace().count().max(1)).collect();
    let total: usize = counts.iter().sum();
    let span = cue.end_s - cue.start_s;
    let mut seen = 0usize;
    sentences
        .into_iter()
        .zip(counts)
        .map(|(text, n)| {
            let start_s = cue.start_s + span * seen as f64 / total as f64;
            seen += n;
            let end_s = if seen == total {
                cue.end_s
            } else {
                cue.start_s + span * seen as f64 / total as f64
            };
            TimedSentence { start_s, end_s, text }
        })
        .collect()
}
