//! Per-second detector output and the talking-head filter.

use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::TimeOfDay;

use super::VideoError;

pub const MAX_FACES: usize = 32;
/// Half-width of the centred box, in normalized coordinates.
pub const CENTER_BOX: f64 = 0.2;
pub const MIN_SPEAKER_AREA: f64 = 0.05;
pub const MAX_SPEAKER_AREA: f64 = 0.5;
/// Shortest run of speaker-like seconds that is deleted.
pub const MIN_SPEAKER_RUN: usize = 3;
/// Largest face-centre movement within a deleted run.
pub const MAX_SPEAKER_DRIFT: f64 = 0.05;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Gender {
    M,
    F,
    U,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Face {
    pub center_x: f64,
    pub center_y: f64,
    pub area_fraction: f64,
    pub gender: Gender,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAnnotation {
    pub second: u32,
    #[serde(default)]
    pub faces: Vec<Face>,
    #[serde(default)]
    pub location_label: String,
    #[serde(default = "unknown_time")]
    pub time_of_day: TimeOfDay,
}

fn unknown_time() -> TimeOfDay {
    TimeOfDay::Unknown
}

impl Face {
    fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.center_x)
            && (0.0..=1.0).contains(&self.center_y)
            && self.area_fraction > 0.0
            && self.area_fraction <= 1.0
    }
}

impl FrameAnnotation {
    pub fn validate(&self) -> Result<(), String> {
        if self.faces.len() > MAX_FACES {
            return Err(format!(
                "second {}: {} faces exceeds {MAX_FACES}",
                self.second,
                self.faces.len()
            ));
        }
        if let Some(f) = self.faces.iter().find(|f| !f.is_valid()) {
            return Err(format!("second {}: face out of range: {f:?}", self.second));
        }
        Ok(())
    }

    /// Exactly one centred face of talking-head size.
    pub fn is_speaker_like(&self) -> bool {
        let [face] = self.faces.as_slice() else {
            return false;
        };
        (face.center_x - 0.5).abs() <= CENTER_BOX + EPS
            && (face.center_y - 0.5).abs() <= CENTER_BOX + EPS
            && face.area_fraction >= MIN_SPEAKER_AREA - EPS
            && face.area_fraction <= MAX_SPEAKER_AREA + EPS
    }
}

/// Half-open `[start, end)` range of seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SecondRange {
    pub start: u32,
    pub end: u32,
}

impl SecondRange {
    pub fn len(&self) -> u32 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

fn drift_ok(window: &[&FrameAnnotation]) -> bool {
    let centers: Vec<(f64, f64)> = window
        .iter()
        .map(|a| (a.faces[0].center_x, a.faces[0].center_y))
        .collect();
    centers.iter().enumerate().all(|(i, a)| {
        centers[i + 1..]
            .iter()
            .all(|b| (a.0 - b.0).abs().max((a.1 - b.1).abs()) <= MAX_SPEAKER_DRIFT + EPS)
    })
}

/// Marks each annotation that belongs to a deleted talking-head run.
///
/// Any longer stationary run is covered by its stationary three-second
/// windows, so checking windows of exactly `MIN_SPEAKER_RUN` suffices.
pub fn speaker_mask(annotations: &[FrameAnnotation]) -> Vec<bool> {
    let mut mask = vec![false; annotations.len()];
    if annotations.len() < MIN_SPEAKER_RUN {
        return mask;
    }
    for start in 0..=annotations.len() - MIN_SPEAKER_RUN {
        let window: Vec<&FrameAnnotation> = annotations[start..start + MIN_SPEAKER_RUN].iter().collect();
        let consecutive = window.windows(2).all(|p| p[1].second == p[0].second + 1);
        if consecutive && window.iter().all(|a| a.is_speaker_like()) && drift_ok(&window) {
            mask[start..start + MIN_SPEAKER_RUN].iter_mut().for_each(|m| *m = true);
        }
    }
    mask
}

/// Seconds that survive the talking-head filter, merged into maximal ranges.
/// Input must be sorted by second.
pub fn filter_speaker_segments(annotations: &[FrameAnnotation]) -> Vec<SecondRange> {
    let mask = speaker_mask(annotations);
    let mut out: Vec<SecondRange> = Vec::new();
    for (a, deleted) in annotations.iter().zip(mask) {
        if deleted {
            continue;
        }
        match out.last_mut() {
            Some(r) if r.end == a.second => r.end += 1,
            _ => out.push(SecondRange {
                start: a.second,
                end: a.second + 1,
            }),
        }
    }
    out
}

/// Reads one [`FrameAnnotation`] per line and sorts by second.
pub fn load_annotations(path: &Path) -> Result<Vec<FrameAnnotation>, VideoError> {
    let file = std::fs::File::open(path).map_err(|e| VideoError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| VideoError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let a: FrameAnnotation = serde_json::from_str(&line)
            .map_err(|e| VideoError::BadInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
        a.validate()
            .map_err(|e| VideoError::BadInput(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(a);
    }
    out.sort_by_key(|a| a.second);
    Ok(out)
}
