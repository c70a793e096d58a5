//! Turning a timed caption sentence plus detector output into a clip record.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::annotations::{speaker_mask, FrameAnnotation, Gender};
use super::VideoError;
use crate::domain::{Genre, TimeOfDay};
use crate::gateway::GenreClassifier;
use crate::scene::BanList;

/// Clips losing more than this share of their duration to the talking-head
/// filter are rejected.
pub const MAX_SPEAKER_SHARE: f64 = 0.8;
/// Minimum classifier probability for a genre tag.
pub const GENRE_TAG_THRESHOLD: f64 = 0.5;
pub const UNKNOWN_LOCATION: &str = "UNKNOWN";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub video_uri: String,
    pub start_s: f64,
    pub end_s: f64,
    pub caption: String,
    pub genre_tag: Option<Genre>,
    pub location: String,
    pub time_of_day: TimeOfDay,
    pub char_count: u32,
    /// Sorted multiset, one entry per character.
    pub genders: Vec<Gender>,
    pub embedding_row: usize,
}

/// A clip before metadata tagging and embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipDraft {
    pub id: String,
    pub video_uri: String,
    pub start_s: f64,
    pub end_s: f64,
    pub caption: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    SpeakerDominated,
    BannedCaption,
    EmptyCaption,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::SpeakerDominated => "speaker_dominated",
            RejectReason::BannedCaption => "banned_caption",
            RejectReason::EmptyCaption => "empty_caption",
        }
    }
}

/// Most frequent value; ties go to the value seen first.
fn mode<T: Clone + Eq + Hash>(values: impl IntoIterator<Item = T>) -> Option<(T, usize, bool)> {
    let mut counts: HashMap<T, (usize, usize)> = HashMap::new();
    for (i, v) in values.into_iter().enumerate() {
        counts.entry(v).or_insert((0, i)).0 += 1;
    }
    let best = counts
        .iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .map(|(v, (n, _))| (v.clone(), *n))?;
    let tied = counts.values().filter(|(n, _)| *n == best.1).count() > 1;
    Some((best.0, best.1, tied))
}

fn in_clip(a: &FrameAnnotation, start_s: f64, end_s: f64) -> bool {
    let s = f64::from(a.second);
    s >= start_s && s < end_s
}

/// Tags a draft with metadata from the whole video's annotations.
///
/// `annotations` must be sorted by second; the talking-head filter runs over
/// the full video so runs crossing clip borders are still detected.
pub fn ingest_clip(
    draft: ClipDraft,
    annotations: &[FrameAnnotation],
    classifier: &dyn GenreClassifier,
    banlist: &BanList,
) -> Result<ClipRecord, VideoError> {
    let reject = |reason| VideoError::RejectedClip {
        id: draft.id.clone(),
        reason,
    };
    if draft.caption.trim().is_empty() {
        return Err(reject(RejectReason::EmptyCaption));
    }
    if draft.start_s.is_nan() || draft.end_s.is_nan() || draft.end_s <= draft.start_s {
        return Err(VideoError::BadInput(format!("clip {} has no duration", draft.id)));
    }
    if banlist.contains_banned(&draft.caption) {
        return Err(reject(RejectReason::BannedCaption));
    }
    let mask = speaker_mask(annotations);
    let inside: Vec<(&FrameAnnotation, bool)> = annotations
        .iter()
        .zip(mask)
        .filter(|(a, _)| in_clip(a, draft.start_s, draft.end_s))
        .collect();
    let deleted = inside.iter().filter(|(_, d)| *d).count() as f64;
    if deleted / (draft.end_s - draft.start_s) > MAX_SPEAKER_SHARE {
        return Err(reject(RejectReason::SpeakerDominated));
    }

    let cast = mode(inside.iter().map(|(a, _)| {
        let mut g: Vec<Gender> = a.faces.iter().map(|f| f.gender).collect();
        g.sort();
        g
    }))
    .map(|(g, _, _)| g)
    .unwrap_or_default();
    let time_of_day = match mode(inside.iter().map(|(a, _)| a.time_of_day)) {
        Some((t, _, false)) => t,
        _ => TimeOfDay::Unknown,
    };
    let location = mode(
        inside
            .iter()
            .map(|(a, _)| a.location_label.trim())
            .filter(|l| !l.is_empty()),
    )
    .map_or_else(|| UNKNOWN_LOCATION.to_string(), |(l, _, _)| l.to_string());

    let dist = classifier.classify_genre(&draft.caption)?;
    let genre_tag = dist.argmax().filter(|g| dist.prob(*g) >= GENRE_TAG_THRESHOLD);

    Ok(ClipRecord {
        id: draft.id,
        video_uri: draft.video_uri,
        start_s: draft.start_s,
        end_s: draft.end_s,
        caption: draft.caption,
        genre_tag,
        location,
        time_of_day,
        char_count: cast.len() as u32,
        genders: cast,
        embedding_row: 0,
    })
}
