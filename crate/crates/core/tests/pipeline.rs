mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use vscript::gateway::{
    Embedding, GatewayError, GenerationRequest, Lexicon, MockEmbedder, MockGenerator, SentenceEmbedder, TextGenerator,
};
use vscript::scene::BanList;
use vscript::video::{build_database, build_index, retrieve_clip, VideoIndex};
use vscript::{Backends, Engine, EngineConfig, Genre, SessionStatus, SteerEvent};

/// Answers later calls first.
struct ReverseDelayEmbedder {
    calls: AtomicUsize,
    inner: MockEmbedder,
}

impl SentenceEmbedder for ReverseDelayEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(40u64.saturating_sub(n as u64 * 8)));
        self.inner.embed_texts(texts)
    }
}

struct RecordingGenerator {
    inner: MockGenerator,
    seen: Mutex<Vec<GenerationRequest>>,
}

impl RecordingGenerator {
    fn new() -> Self {
        Self {
            inner: MockGenerator::new(Lexicon::builtin()),
            seen: Mutex::default(),
        }
    }

    fn prompts(&self) -> Vec<GenerationRequest> {
        self.seen.lock().unwrap().clone()
    }
}

impl TextGenerator for RecordingGenerator {
    fn generate_text(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.generate_text(request)
    }
}

/// Fails every request whose prompt contains `needle`.
struct FailingGenerator {
    needle: &'static str,
    inner: MockGenerator,
}

impl TextGenerator for FailingGenerator {
    fn generate_text(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        if request.prompt.contains(self.needle) {
            return Err(GatewayError::BackendUnavailable {
                endpoint: "test".into(),
                detail: "down".into(),
                raw: String::new(),
            });
        }
        self.inner.generate_text(request)
    }
}

fn fixture_index() -> VideoIndex {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    build_database(
        &dir.join("captions"),
        &dir.join("annotations"),
        &Backends::mock(),
        &BanList::builtin(),
    )
    .unwrap()
    .0
}

#[test]
fn slots_follow_scene_order_when_retrieval_finishes_out_of_order() {
    let embedder = Arc::new(ReverseDelayEmbedder {
        calls: AtomicUsize::new(0),
        inner: MockEmbedder::default(),
    });
    let index = fixture_index();
    let engine =
        Engine::new(Backends::mock().with_embedder(embedder), EngineConfig::default()).with_index(index.clone());
    let s = engine.run_pipeline(Genre::Crime, "The detective", 21);
    assert_eq!(s.status, SessionStatus::Complete);
    assert!(s.cardinalities_agree());
    let script = s.script.as_ref().unwrap();
    for (i, (slot, scene)) in s.presentation.iter().zip(&script.scenes).enumerate() {
        assert_eq!(slot.scene_index, i);
        assert_eq!(scene.source_sentence.index, i);
        let direct = retrieve_clip(
            &MockEmbedder::default(),
            &scene.source_sentence.text,
            &index,
            &vscript::video::RetrievalConstraints {
                genre: Some(Genre::Crime),
                time_of_day: scene.header.time_of_day.is_known().then_some(scene.header.time_of_day),
                min_char_count: Some(scene.distinct_speakers() as u32),
                required_genders: None,
            },
        )
        .unwrap();
        assert_eq!(slot.clip.as_ref().map(|c| &c.id), direct.best().map(|h| &h.clip.id));
    }
}

#[test]
fn reruns_are_identical() {
    let engine = Engine::mock().with_index(fixture_index());
    let first = engine.run_pipeline(Genre::SciFi, "The last colony ship", 99);
    for _ in 0..5 {
        let again = engine.run_pipeline(Genre::SciFi, "The last colony ship", 99);
        assert_eq!(again.rendered_script(), first.rendered_script());
        assert_eq!(again.presentation, first.presentation);
        assert_eq!(again.candidates, first.candidates);
    }
    let other = engine.run_pipeline(Genre::SciFi, "The last colony ship", 100);
    assert_ne!(other.rendered_script(), first.rendered_script());
}

#[test]
fn stage_failures_are_recorded() {
    for (needle, stage) in [("plot. ", "plot"), ("Summary:", "dialogue"), ("Scene:", "scene")] {
        let generator = Arc::new(FailingGenerator {
            needle,
            inner: MockGenerator::new(Lexicon::builtin()),
        });
        let engine = Engine::new(Backends::mock().with_generator(generator), EngineConfig::default());
        let s = engine.run_pipeline(Genre::War, "The general", 1);
        assert_eq!(s.status, SessionStatus::Failed);
        let f = s.failure.unwrap();
        assert_eq!(f.stage, stage, "{}", f.cause);
        assert!(f.cause.contains("down"));
        assert!(s.script.is_none());
    }
}

#[test]
fn steering_prompts_carry_the_new_genre_and_words() {
    let generator = Arc::new(RecordingGenerator::new());
    let engine = Engine::new(
        Backends::mock().with_generator(generator.clone()),
        EngineConfig::default(),
    );
    let s = engine.run_pipeline(Genre::Crime, "The detective", 3);
    let before = generator.prompts().len();
    let plot_text = s.plot.as_ref().unwrap().text.clone();

    let steered = engine
        .steer(&s, SteerEvent::now(Some(Genre::Romance), Some("a red rose".into())))
        .unwrap();
    let prompts = generator.prompts();
    let plot_req = &prompts[before];
    assert_eq!(
        plot_req.prompt,
        format!("This is a romance plot. {plot_text} a red rose")
    );
    assert_eq!(plot_req.seed, 4);
    assert_eq!(plot_req.num_candidates, 10);
    assert_eq!(steered.genre, Genre::Romance);
    assert_eq!(steered.music.as_ref().unwrap().mood_tag, "soothing");

    let old = s.script.as_ref().unwrap();
    let new = steered.script.as_ref().unwrap();
    assert_eq!(&new.scenes[..old.scenes.len()], &old.scenes[..]);
    assert!(new.scenes.len() > old.scenes.len());
    assert!(new.scenes[old.scenes.len()]
        .source_sentence
        .text
        .starts_with("a red rose"));
    assert!(steered.cardinalities_agree());

    // Words only: the current genre's control code is still prepended.
    let again = engine
        .steer(&steered, SteerEvent::now(None, Some("at dawn".into())))
        .unwrap();
    let p = &generator.prompts()[prompts.len()];
    assert!(p.prompt.starts_with("This is a romance plot. "));
    assert!(p.prompt.ends_with(" at dawn"));
    assert_eq!(p.seed, 5);
    assert_eq!(again.history.len(), 2);
}

#[test]
fn genre_free_plot_is_a_single_unprefixed_sample() {
    let generator = Arc::new(RecordingGenerator::new());
    let engine = Engine::new(
        Backends::mock().with_generator(generator.clone()),
        EngineConfig::default(),
    );
    let s = engine.run_pipeline(Genre::GenreFree, "Once upon a time", 2);
    assert_eq!(s.status, SessionStatus::Complete);
    let first = &generator.prompts()[0];
    assert_eq!(first.prompt, "Once upon a time");
    assert_eq!(first.num_candidates, 1);
    assert_eq!(s.candidates.len(), 1);
    assert_eq!(s.music.unwrap().mood_tag, "neutral");
}

#[test]
fn empty_index_leaves_slots_empty_with_a_warning() {
    let engine = Engine::mock().with_index(build_index(&MockEmbedder::default(), Vec::new()).unwrap());
    let s = engine.run_pipeline(Genre::War, "The general", 6);
    assert_eq!(s.status, SessionStatus::Complete);
    assert!(s.presentation.iter().all(|p| p.clip.is_none()));
    assert_eq!(s.presentation.len(), s.scene_count());
    assert_eq!(s.warnings.len(), 1);
    let steered = engine.steer(&s, SteerEvent::now(Some(Genre::Crime), None)).unwrap();
    assert_eq!(steered.warnings.len(), 1);
}

#[test]
fn failed_sessions_cannot_be_steered() {
    let generator = Arc::new(FailingGenerator {
        needle: "plot. ",
        inner: MockGenerator::new(Lexicon::builtin()),
    });
    let engine = Engine::new(Backends::mock().with_generator(generator), EngineConfig::default());
    let s = engine.run_pipeline(Genre::War, "The general", 1);
    let err = engine.steer(&s, SteerEvent::now(Some(Genre::Crime), None)).unwrap_err();
    assert!(matches!(err, vscript::PipelineError::NotSteerable { .. }));
}
