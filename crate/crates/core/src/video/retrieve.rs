//! Metadata-filtered cosine retrieval over a [`VideoIndex`].

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::annotations::Gender;
use super::index::VideoIndex;
use super::ingest::ClipRecord;
use super::VideoError;
use crate::domain::{Genre, TimeOfDay};
use crate::gateway::{cosine, embed_one, Embedding, SentenceEmbedder};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalConstraints {
    pub genre: Option<Genre>,
    pub time_of_day: Option<TimeOfDay>,
    pub min_char_count: Option<u32>,
    /// Multiset that must be contained in the clip's genders.
    pub required_genders: Option<Vec<Gender>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Filter {
    Genre,
    TimeOfDay,
    CharCount,
    Genders,
}

impl Filter {
    /// Order in which filters are dropped when nothing survives.
    pub const RELAXATION: [Filter; 4] = [Filter::Genders, Filter::CharCount, Filter::TimeOfDay, Filter::Genre];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub clip: ClipRecord,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub hits: Vec<Hit>,
    /// Filters dropped to obtain a non-empty result, in drop order.
    pub relaxed_filters: Vec<Filter>,
}

impl Retrieval {
    pub fn relaxed(&self) -> bool {
        !self.relaxed_filters.is_empty()
    }

    pub fn best(&self) -> Option<&Hit> {
        self.hits.first()
    }
}

fn multiset_contains(have: &[Gender], need: &[Gender]) -> bool {
    [Gender::M, Gender::F, Gender::U]
        .iter()
        .all(|g| need.iter().filter(|x| *x == g).count() <= have.iter().filter(|x| *x == g).count())
}

impl RetrievalConstraints {
    /// Whether `clip` passes `filter`. Unset constraints always pass.
    pub fn passes(&self, filter: Filter, clip: &ClipRecord) -> bool {
        match filter {
            Filter::Genre => self.genre.is_none_or(|g| clip.genre_tag == Some(g)),
            Filter::TimeOfDay => self
                .time_of_day
                .is_none_or(|t| !t.is_known() || !clip.time_of_day.is_known() || clip.time_of_day == t),
            Filter::CharCount => self.min_char_count.is_none_or(|n| clip.char_count >= n),
            Filter::Genders => self
                .required_genders
                .as_ref()
                .is_none_or(|need| multiset_contains(&clip.genders, need)),
        }
    }

    pub fn is_set(&self, filter: Filter) -> bool {
        match filter {
            Filter::Genre => self.genre.is_some(),
            Filter::TimeOfDay => self.time_of_day.is_some(),
            Filter::CharCount => self.min_char_count.is_some(),
            Filter::Genders => self.required_genders.is_some(),
        }
    }

    pub fn admits(&self, clip: &ClipRecord, dropped: &[Filter]) -> bool {
        Filter::RELAXATION
            .iter()
            .filter(|f| !dropped.contains(f))
            .all(|f| self.passes(*f, clip))
    }
}

fn rank_order(a: &Hit, b: &Hit) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.clip.id.cmp(&b.clip.id))
}

/// Ranks every clip admitted by the constraints, relaxing set filters one at
/// a time until something survives.
pub fn rank_by_embedding(
    query: &Embedding,
    index: &VideoIndex,
    constraints: &RetrievalConstraints,
) -> Result<Retrieval, VideoError> {
    if index.is_empty() {
        return Err(VideoError::EmptyIndex);
    }
    if query.values.len() != index.dim {
        return Err(VideoError::BadInput(format!(
            "query dimension {} does not match index dimension {}",
            query.values.len(),
            index.dim
        )));
    }
    let mut dropped = Vec::new();
    let mut steps = Filter::RELAXATION.iter().filter(|f| constraints.is_set(**f));
    loop {
        let mut hits: Vec<Hit> = index
            .clips
            .iter()
            .filter(|c| constraints.admits(c, &dropped))
            .map(|c| Hit {
                clip: c.clone(),
                score: cosine(&query.values, index.row(c.embedding_row)),
            })
            .collect();
        if !hits.is_empty() {
            hits.sort_by(rank_order);
            return Ok(Retrieval {
                hits,
                relaxed_filters: dropped,
            });
        }
        let next = steps.next().expect("with every filter dropped all clips survive");
        dropped.push(*next);
    }
}

pub fn retrieve_clip(
    embedder: &dyn SentenceEmbedder,
    query: &str,
    index: &VideoIndex,
    constraints: &RetrievalConstraints,
) -> Result<Retrieval, VideoError> {
    if index.is_empty() {
        return Err(VideoError::EmptyIndex);
    }
    let q = embed_one(embedder, query)?;
    rank_by_embedding(&q, index, constraints)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockEmbedder;
    use crate::video::index::build_index;

    fn clip(id: &str, caption: &str, time: TimeOfDay, genre: Option<Genre>, genders: Vec<Gender>) -> ClipRecord {
        ClipRecord {
            id: id.into(),
            video_uri: format!("{id}.mp4"),
            start_s: 0.0,
            end_s: 2.0,
            caption: caption.into(),
            genre_tag: genre,
            location: "UNKNOWN".into(),
            time_of_day: time,
            char_count: genders.len() as u32,
            genders,
            embedding_row: 0,
        }
    }

    fn index() -> VideoIndex {
        build_index(
            &MockEmbedder::default(),
            vec![
                clip(
                    "a",
                    "soldiers cross the river at dawn",
                    TimeOfDay::Day,
                    Some(Genre::War),
                    vec![Gender::M],
                ),
                clip(
                    "b",
                    "a quiet street after the rain",
                    TimeOfDay::Night,
                    None,
                    vec![Gender::F, Gender::M],
                ),
            ],
        )
        .unwrap()
    }

    #[test]
    fn self_query_scores_one() {
        let r = retrieve_clip(
            &MockEmbedder::default(),
            "soldiers cross the river at dawn",
            &index(),
            &RetrievalConstraints::default(),
        )
        .unwrap();
        assert_eq!(r.best().unwrap().clip.id, "a");
        assert!((r.best().unwrap().score - 1.0).abs() < 1e-6);
        assert!(!r.relaxed());
    }

    #[test]
    fn hard_filter_beats_score() {
        let c = RetrievalConstraints {
            time_of_day: Some(TimeOfDay::Night),
            ..Default::default()
        };
        let r = retrieve_clip(
            &MockEmbedder::default(),
            "soldiers cross the river at dawn",
            &index(),
            &c,
        )
        .unwrap();
        assert_eq!(r.hits.len(), 1);
        assert_eq!(r.best().unwrap().clip.id, "b");
    }

    #[test]
    fn relaxation_drops_genre_last() {
        let c = RetrievalConstraints {
            genre: Some(Genre::Romance),
            time_of_day: Some(TimeOfDay::Night),
            min_char_count: Some(5),
            required_genders: Some(vec![Gender::F, Gender::F]),
        };
        let r = retrieve_clip(&MockEmbedder::default(), "rain", &index(), &c).unwrap();
        assert_eq!(r.relaxed_filters, Filter::RELAXATION.to_vec());
        assert_eq!(r.hits.len(), 2);

        let c = RetrievalConstraints {
            genre: Some(Genre::War),
            min_char_count: Some(5),
            ..Default::default()
        };
        let r = retrieve_clip(&MockEmbedder::default(), "rain", &index(), &c).unwrap();
        assert_eq!(r.relaxed_filters, vec![Filter::CharCount]);
        assert_eq!(r.hits.len(), 1);
        assert_eq!(r.hits[0].clip.id, "a");
    }

    #[test]
    fn gender_multiset_containment() {
        assert!(multiset_contains(&[Gender::M, Gender::F], &[Gender::F]));
        assert!(!multiset_contains(&[Gender::M, Gender::F], &[Gender::F, Gender::F]));
        assert!(multiset_contains(&[], &[]));
    }

    #[test]
    fn unknown_times_pass_time_filter() {
        let c = RetrievalConstraints {
            time_of_day: Some(TimeOfDay::Day),
            ..Default::default()
        };
        let x = clip("x", "x", TimeOfDay::Unknown, None, vec![]);
        assert!(c.passes(Filter::TimeOfDay, &x));
    }

    #[test]
    fn empty_index_is_an_error() {
        let idx = build_index(&MockEmbedder::default(), vec![]).unwrap();
        assert!(matches!(
            retrieve_clip(&MockEmbedder::default(), "x", &idx, &RetrievalConstraints::default()),
            Err(VideoError::EmptyIndex)
        ));
    }
}
