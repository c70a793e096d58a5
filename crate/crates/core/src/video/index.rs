//! Embedding index over clip captions and its on-disk form.
//!
//! An index directory holds `manifest.jsonl` (one [`ClipRecord`] per line)
//! and `matrix.vsdb`:
//!
//! ```text
//! "VSDB" | 0x01 | dim: u32 LE | rows: u32 LE | rows * dim f32 LE, row-major
//! ```

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ingest::ClipRecord;
use super::VideoError;
use crate::gateway::SentenceEmbedder;

pub const MAGIC: &[u8; 4] = b"VSDB";
pub const FORMAT_VERSION: u8 = 1;
pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const MATRIX_FILE: &str = "matrix.vsdb";
pub const NORM_TOLERANCE: f64 = 1e-5;
const HEADER_LEN: usize = 4 + 1 + 4 + 4;
const EMBED_BATCH: usize = 64;
const DIM_PROBE: &str = "dimension probe";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptKind {
    BadMagic,
    Version,
    Dimension,
    RowCountMismatch,
    Norm,
    Manifest,
}

impl fmt::Display for CorruptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorruptKind::BadMagic => "bad_magic",
            CorruptKind::Version => "version",
            CorruptKind::Dimension => "dimension",
            CorruptKind::RowCountMismatch => "row_count_mismatch",
            CorruptKind::Norm => "norm",
            CorruptKind::Manifest => "manifest",
        };
        f.write_str(s)
    }
}

/// Immutable once built; safe to share between readers.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoIndex {
    pub dim: usize,
    /// Row-major, `clips.len() * dim` values.
    pub matrix: Vec<f32>,
    pub clips: Vec<ClipRecord>,
    pub version: u8,
}

impl VideoIndex {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            matrix: Vec::new(),
            clips: Vec::new(),
            version: FORMAT_VERSION,
        }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.id == id)
    }
}

fn corrupt(kind: CorruptKind, detail: impl Into<String>) -> VideoError {
    VideoError::CorruptIndex {
        kind,
        detail: detail.into(),
    }
}

fn row_norm(row: &[f32]) -> f64 {
    row.iter().map(|v| f64::from(*v) * f64::from(*v)).sum::<f64>().sqrt()
}

/// Embeds captions in clip order and assigns `embedding_row`.
pub fn build_index(embedder: &dyn SentenceEmbedder, mut clips: Vec<ClipRecord>) -> Result<VideoIndex, VideoError> {
    let mut seen = HashSet::new();
    for c in &clips {
        if !seen.insert(c.id.as_str()) {
            return Err(VideoError::DuplicateClipId(c.id.clone()));
        }
        if c.caption.trim().is_empty() {
            return Err(VideoError::BadInput(format!("clip {} has an empty caption", c.id)));
        }
    }
    if clips.is_empty() {
        let probe = embedder.embed_texts(&[DIM_PROBE.to_string()])?;
        let dim = probe.first().map_or(0, |e| e.values.len());
        return Ok(VideoIndex::empty(dim));
    }
    let mut dim = 0;
    let mut matrix = Vec::new();
    for (batch_no, batch) in clips.chunks(EMBED_BATCH).enumerate() {
        let texts: Vec<String> = batch.iter().map(|c| c.caption.clone()).collect();
        let embeddings = embedder.embed_texts(&texts)?;
        for (offset, e) in embeddings.into_iter().enumerate() {
            let clip = &batch[offset];
            if dim == 0 {
                dim = e.values.len();
            }
            if e.values.len() != dim {
                return Err(VideoError::BadInput(format!(
                    "clip {} embedded with dimension {}",
                    clip.id,
                    e.values.len()
                )));
            }
            if e.is_zero() {
                return Err(VideoError::ZeroEmbedding(clip.id.clone()));
            }
            debug_assert_eq!(batch_no * EMBED_BATCH + offset, matrix.len() / dim);
            matrix.extend_from_slice(&e.values);
        }
    }
    for (row, clip) in clips.iter_mut().enumerate() {
        clip.embedding_row = row;
    }
    Ok(VideoIndex {
        dim,
        matrix,
        clips,
        version: FORMAT_VERSION,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), VideoError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| VideoError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| VideoError::io(&tmp, e))?;
    f.sync_all().map_err(|e| VideoError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| VideoError::io(path, e))
}

pub fn encode_matrix(index: &VideoIndex) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + index.matrix.len() * 4);
    out.extend_from_slice(MAGIC);
    out.push(index.version);
    out.extend_from_slice(&(index.dim as u32).to_le_bytes());
    out.extend_from_slice(&(index.clips.len() as u32).to_le_bytes());
    for v in &index.matrix {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Decodes a matrix file into `(dim, rows, values)`.
pub fn decode_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), VideoError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(corrupt(CorruptKind::BadMagic, "matrix file does not start with VSDB"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(corrupt(CorruptKind::RowCountMismatch, "matrix header is truncated"));
    }
    if bytes[4] != FORMAT_VERSION {
        return Err(corrupt(
            CorruptKind::Version,
            format!("unsupported version {}", bytes[4]),
        ));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes")) as usize;
    let (dim, rows) = (word(5), word(9));
    if dim == 0 && rows > 0 {
        return Err(corrupt(CorruptKind::Dimension, "rows with zero dimension"));
    }
    let body = &bytes[HEADER_LEN..];
    let expected = rows.checked_mul(dim).and_then(|n| n.checked_mul(4));
    if expected != Some(body.len()) {
        return Err(corrupt(
            CorruptKind::RowCountMismatch,
            format!(
                "{rows} rows of dimension {dim} need {expected:?} bytes, found {}",
                body.len()
            ),
        ));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
        .collect();
    Ok((dim, rows, values))
}

pub fn save_index(index: &VideoIndex, dir: &Path) -> Result<(), VideoError> {
    std::fs::create_dir_all(dir).map_err(|e| VideoError::io(dir, e))?;
    let mut manifest = Vec::new();
    for clip in &index.clips {
        serde_json::to_writer(&mut manifest, clip).map_err(|e| VideoError::BadInput(e.to_string()))?;
        manifest.push(b'\n');
    }
    write_atomic(&dir.join(MATRIX_FILE), &encode_matrix(index))?;
    write_atomic(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn load_index(dir: &Path) -> Result<VideoIndex, VideoError> {
    let matrix_path = dir.join(MATRIX_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&matrix_path).map_err(|e| VideoError::io(&matrix_path, e))?;
    let (dim, rows, matrix) = decode_matrix(&bytes)?;
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| VideoError::io(&manifest_path, e))?;
    let clips = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<ClipRecord>(l)
                .map_err(|e| corrupt(CorruptKind::Manifest, format!("line {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if clips.len() != rows {
        return Err(corrupt(
            CorruptKind::RowCountMismatch,
            format!("manifest has {} clips, matrix has {rows} rows", clips.len()),
        ));
    }
    let mut ids = HashSet::new();
    for (i, c) in clips.iter().enumerate() {
        if c.embedding_row != i {
            return Err(corrupt(
                CorruptKind::Manifest,
                format!("clip {} claims row {}", c.id, c.embedding_row),
            ));
        }
        if !ids.insert(c.id.as_str()) {
            return Err(corrupt(CorruptKind::Manifest, format!("duplicate clip id {}", c.id)));
        }
    }
    let index = VideoIndex {
        dim,
        matrix,
        clips,
        version: FORMAT_VERSION,
    };
    for i in 0..rows {
        let n = row_norm(index.row(i));
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(corrupt(CorruptKind::Norm, format!("row {i} has norm {n}")));
        }
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TimeOfDay;
    use crate::gateway::MockEmbedder;

    pub(crate) fn clip(id: &str, caption: &str) -> ClipRecord {
        ClipRecord {
            id: id.into(),
            video_uri: format!("{id}.mp4"),
            start_s: 0.0,
            end_s: 1.5,
            caption: caption.into(),
            genre_tag: None,
            location: "UNKNOWN".into(),
            time_of_day: TimeOfDay::Unknown,
            char_count: 0,
            genders: vec![],
            embedding_row: 99,
        }
    }

    fn three() -> VideoIndex {
        build_index(
            &MockEmbedder::default(),
            vec![
                clip("a", "a ship lands"),
                clip("b", "troops march"),
                clip("c", "two lovers talk"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn build_assigns_rows() {
        let idx = three();
        assert_eq!(idx.len(), 3);
        assert_eq!(
            idx.clips.iter().map(|c| c.embedding_row).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(idx.matrix.len(), 3 * idx.dim);
        let empty = build_index(&MockEmbedder::default(), vec![]).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.dim, 256);
    }

    #[test]
    fn build_rejects_bad_clips() {
        let e = build_index(&MockEmbedder::default(), vec![clip("a", "x"), clip("a", "y")]).unwrap_err();
        assert!(matches!(e, VideoError::DuplicateClipId(id) if id == "a"));
        let e = build_index(&MockEmbedder::default(), vec![clip("a", "!!!")]).unwrap_err();
        assert!(matches!(e, VideoError::ZeroEmbedding(_)));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let idx = three();
        save_index(&idx, dir.path()).unwrap();
        assert_eq!(load_index(dir.path()).unwrap(), idx);
    }

    fn kind(e: VideoError) -> CorruptKind {
        match e {
            VideoError::CorruptIndex { kind, .. } => kind,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let idx = three();
        save_index(&idx, dir.path()).unwrap();
        let path = dir.path().join(MATRIX_FILE);
        let good = std::fs::read(&path).unwrap();

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert_eq!(kind(load_index(dir.path()).unwrap_err()), CorruptKind::RowCountMismatch);

        let mut bad = good.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert_eq!(kind(load_index(dir.path()).unwrap_err()), CorruptKind::BadMagic);

        let mut bad = good.clone();
        bad[4] = 2;
        std::fs::write(&path, &bad).unwrap();
        assert_eq!(kind(load_index(dir.path()).unwrap_err()), CorruptKind::Version);

        let mut bad = good.clone();
        bad[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&5.0f32.to_le_bytes());
        std::fs::write(&path, &bad).unwrap();
        assert_eq!(kind(load_index(dir.path()).unwrap_err()), CorruptKind::Norm);

        std::fs::write(&path, &good).unwrap();
        let manifest = dir.path().join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest).unwrap();
        let first_two: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        std::fs::write(&manifest, first_two).unwrap();
        assert_eq!(kind(load_index(dir.path()).unwrap_err()), CorruptKind::RowCountMismatch);

        std::fs::write(&manifest, "{not json\n").unwrap();
        assert_eq!(kind(load_index(dir.path()).unwrap_err()), CorruptKind::Manifest);
    }
}
