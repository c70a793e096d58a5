//! Video database construction and retrieval.

pub mod annotations;
pub mod captions;
pub mod corpus;
pub mod index;
pub mod ingest;
pub mod music;
pub mod retrieve;

use std::path::Path;

use thiserror::Error;

use crate::gateway::GatewayError;

pub use annotations::{filter_speaker_segments, Face, FrameAnnotation, Gender, SecondRange};
pub use captions::{segment_caption, CaptionCue, CaptionTrack};
pub use corpus::{build_database, BuildReport};
pub use index::{build_index, load_index, save_index, CorruptKind, VideoIndex};
pub use ingest::{ingest_clip, ClipDraft, ClipRecord, RejectReason};
pub use music::{MusicMap, MusicTrack};
pub use retrieve::{rank_by_embedding, retrieve_clip, Filter, Hit, Retrieval, RetrievalConstraints};

#[derive(Debug, Error)]
pub enum VideoError {
    #[error("clip {id} rejected: {}", reason.as_str())]
    RejectedClip { id: String, reason: RejectReason },
    #[error("duplicate clip id {0}")]
    DuplicateClipId(String),
    #[error("caption of clip {0} embeds to the zero vector")]
    ZeroEmbedding(String),
    #[error("corrupt index ({kind}): {detail}")]
    CorruptIndex { kind: CorruptKind, detail: String },
    #[error("the video index is empty")]
    EmptyIndex,
    #[error("no music configured for `{0}`")]
    MissingMusicEntry(String),
    #[error("{0}")]
    BadInput(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl VideoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        VideoError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
