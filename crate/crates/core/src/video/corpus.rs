//! Builds a [`VideoIndex`] from caption and annotation directories.
//!
//! `captions/<video>.json` holds a [`CaptionTrack`]; the matching detector
//! output is `annotations/<video>.jsonl`. Clip ids are `<video>#<n>` with
//! `n` counting caption sentences of that video.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::annotations::{load_annotations, FrameAnnotation};
use super::captions::{segment_cue, CaptionTrack};
use super::index::{build_index, VideoIndex};
use super::ingest::{ingest_clip, ClipDraft, ClipRecord};
use super::VideoError;
use crate::gateway::Backends;
use crate::scene::BanList;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub videos: usize,
    pub kept: usize,
    /// `(clip id, reason)` for every rejected clip.
    pub rejected: Vec<(String, String)>,
}

/// Caption sentences of one video as drafts, in time order.
pub fn drafts_for_track(video: &str, track: &CaptionTrack) -> Vec<ClipDraft> {
    let mut cues = track.cues.clone();
    cues.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
    cues.iter()
        .flat_map(segment_cue)
        .enumerate()
        .map(|(n, s)| ClipDraft {
            id: format!("{video}#{n}"),
            video_uri: track.video_uri.clone(),
            start_s: s.start_s,
            end_s: s.end_s,
            caption: s.text,
        })
        .collect()
}

/// Ingests every draft of one video, collecting rejections instead of failing.
pub fn ingest_track(
    video: &str,
    track: &CaptionTrack,
    annotations: &[FrameAnnotation],
    backends: &Backends,
    banlist: &BanList,
    report: &mut BuildReport,
) -> Result<Vec<ClipRecord>, VideoError> {
    let mut out = Vec::new();
    for draft in drafts_for_track(video, track) {
        match ingest_clip(draft, annotations, backends.classifier.as_ref(), banlist) {
            Ok(c) => out.push(c),
            Err(VideoError::RejectedClip { id, reason }) => {
                log::info!("rejected {id}: {}", reason.as_str());
                report.rejected.push((id, reason.as_str().to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn caption_files(dir: &Path) -> Result<Vec<PathBuf>, VideoError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| VideoError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn build_database(
    captions_dir: &Path,
    annotations_dir: &Path,
    backends: &Backends,
    banlist: &BanList,
) -> Result<(VideoIndex, BuildReport), VideoError> {
    let mut report = BuildReport::default();
    let mut clips = Vec::new();
    for path in caption_files(captions_dir)? {
        let video = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = std::fs::read_to_string(&path).map_err(|e| VideoError::io(&path, e))?;
        let track: CaptionTrack =
            serde_json::from_str(&text).map_err(|e| VideoError::BadInput(format!("{}: {e}", path.display())))?;
        let ann_path = annotations_dir.join(format!("{video}.jsonl"));
        let annotations = if ann_path.exists() {
            load_annotations(&ann_path)?
        } else {
            log::warn!("no annotations for {video}; metadata will be unknown");
            Vec::new()
        };
        clips.extend(ingest_track(
            &video,
            &track,
            &annotations,
            backends,
            banlist,
            &mut report,
        )?);
        report.videos += 1;
    }
    report.kept = clips.len();
    let index = build_index(backends.embedder.as_ref(), clips)?;
    Ok((index, report))
}
