#![allow(dead_code)]

use std::collections::HashMap;

use axum::Router;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use vscript::domain::TimeOfDay;
use vscript::gateway::{cosine, MockEmbedder, SentenceEmbedder};
use vscript::video::{ClipRecord, Filter, Gender, RetrievalConstraints, VideoIndex};
use vscript::Genre;

/// Serves `router` on an ephemeral port from a background runtime.
pub fn serve(router: Router) -> String {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(format!("http://{}", listener.local_addr().unwrap())).unwrap();
            axum::serve(listener, router).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

const WORDS: [&str; 24] = [
    "soldier",
    "river",
    "night",
    "kiss",
    "gun",
    "ship",
    "orbit",
    "letter",
    "rain",
    "street",
    "detective",
    "dawn",
    "trench",
    "bridge",
    "robot",
    "alley",
    "siege",
    "wedding",
    "cartel",
    "storm",
    "the",
    "a",
    "runs",
    "waits",
];

/// A caption whose hashed embedding is non-zero (colliding tokens can cancel).
pub fn random_caption(rng: &mut StdRng) -> String {
    loop {
        let n = rng.random_range(2..9);
        let s = (0..n)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(" ");
        if !MockEmbedder::default().embed(&s).is_zero() {
            return s;
        }
    }
}

pub fn random_time(rng: &mut StdRng) -> TimeOfDay {
    [TimeOfDay::Day, TimeOfDay::Night, TimeOfDay::Unknown][rng.random_range(0..3)]
}

pub fn random_genders(rng: &mut StdRng, max: usize) -> Vec<Gender> {
    let n = rng.random_range(0..=max);
    let mut g: Vec<Gender> = (0..n)
        .map(|_| [Gender::M, Gender::F, Gender::U][rng.random_range(0..3)])
        .collect();
    g.sort();
    g
}

pub fn random_clips(seed: u64, n: usize) -> Vec<ClipRecord> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let genders = random_genders(&mut rng, 4);
            let start = rng.random_range(0..600) as f64;
            ClipRecord {
                id: format!("v{}#{i}", rng.random_range(0..20)),
                video_uri: format!("videos/v{i}.mp4"),
                start_s: start,
                end_s: start + rng.random_range(1..20) as f64,
                caption: random_caption(&mut rng),
                genre_tag: if rng.random_bool(0.2) {
                    None
                } else {
                    Some(Genre::CLASSES[rng.random_range(0..4)])
                },
                location: "UNKNOWN".into(),
                time_of_day: random_time(&mut rng),
                char_count: genders.len() as u32,
                genders,
                embedding_row: 0,
            }
        })
        .collect()
}

pub fn random_constraints(rng: &mut StdRng) -> RetrievalConstraints {
    RetrievalConstraints {
        genre: rng.random_bool(0.5).then(|| Genre::CLASSES[rng.random_range(0..4)]),
        time_of_day: rng.random_bool(0.5).then(|| random_time(rng)),
        min_char_count: rng.random_bool(0.5).then(|| rng.random_range(0..5)),
        required_genders: rng.random_bool(0.5).then(|| random_genders(rng, 3)),
    }
}

/// Filter semantics written out independently of the library.
pub fn oracle_passes(c: &RetrievalConstraints, f: Filter, clip: &ClipRecord) -> bool {
    match f {
        Filter::Genre => match c.genre {
            None => true,
            Some(g) => clip.genre_tag == Some(g),
        },
        Filter::TimeOfDay => match c.time_of_day {
            None | Some(TimeOfDay::Unknown) => true,
            Some(t) => clip.time_of_day == TimeOfDay::Unknown || clip.time_of_day == t,
        },
        Filter::CharCount => c.min_char_count.is_none_or(|n| clip.char_count >= n),
        Filter::Genders => match &c.required_genders {
            None => true,
            Some(need) => {
                let mut have: HashMap<Gender, i32> = HashMap::new();
                for g in &clip.genders {
                    *have.entry(*g).or_default() += 1;
                }
                for g in need {
                    let e = have.entry(*g).or_default();
                    *e -= 1;
                    if *e < 0 {
                        return false;
                    }
                }
                true
            }
        },
    }
}

fn dot_cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// Brute-force ranking: `(id, score)` pairs and the dropped filters.
pub fn oracle_rank(
    embedder: &dyn SentenceEmbedder,
    query: &str,
    clips: &[ClipRecord],
    c: &RetrievalConstraints,
) -> (Vec<(String, f64)>, Vec<Filter>) {
    let q = embedder.embed_texts(&[query.to_string()]).unwrap().remove(0);
    let rows = embedder
        .embed_texts(&clips.iter().map(|c| c.caption.clone()).collect::<Vec<_>>())
        .unwrap();
    let order = [Filter::Genders, Filter::CharCount, Filter::TimeOfDay, Filter::Genre];
    let set = |f: &Filter| match f {
        Filter::Genre => c.genre.is_some(),
        Filter::TimeOfDay => c.time_of_day.is_some(),
        Filter::CharCount => c.min_char_count.is_some(),
        Filter::Genders => c.required_genders.is_some(),
    };
    let mut dropped = Vec::new();
    for k in 0..=4 {
        if k > 0 {
            let Some(f) = order.iter().filter(|f| set(f)).nth(k - 1) else {
                break;
            };
            dropped.push(*f);
        }
        let mut hits: Vec<(String, f64)> = clips
            .iter()
            .zip(&rows)
            .filter(|(clip, _)| order.iter().all(|f| dropped.contains(f) || oracle_passes(c, *f, clip)))
            .map(|(clip, e)| (clip.id.clone(), dot_cosine(&q.values, &e.values)))
            .collect();
        if !hits.is_empty() {
            hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            return (hits, dropped);
        }
    }
    (Vec::new(), dropped)
}

/// Unique ids, since the manifest rejects duplicates.
pub fn dedup_ids(mut clips: Vec<ClipRecord>) -> Vec<ClipRecord> {
    for (i, c) in clips.iter_mut().enumerate() {
        c.id = format!("{}-{i}", c.id);
    }
    clips
}

pub fn self_cosine(index: &VideoIndex, row: usize) -> f64 {
    cosine(index.row(row), index.row(row))
}
