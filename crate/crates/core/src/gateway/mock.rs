//! Deterministic in-process backends.
//!
//! None of these carry semantic meaning: they exist so that the whole
//! pipeline is reproducible from a seed and testable without model servers.
//! Outputs are pure functions of their inputs.

use std::collections::HashMap;
use std::sync::Mutex;

use super::{
    Embedding, GatewayError, GenerationRequest, GenreClassifier, GenreDistribution, Lexicon, PerplexityScore,
    PerplexityScorer, SentenceEmbedder, TextGenerator,
};
use crate::dialogue::{DIALOGUE_PROMPT_MARKER, SUMMARY_PREFIX};
use crate::domain::Genre;
use crate::metrics::tokenize;
use crate::scene::{SCENE_PROMPT_MARKER, SCENE_PROMPT_PREFIX};
use crate::text::{derive_seed, fnv1a64, word_tokens, SplitMix64};

/// Additive smoothing of the lexicon classifier.
pub const CLASSIFIER_SMOOTHING: f64 = 0.1;

/// Dimension of the hashing embedder.
pub const MOCK_EMBEDDING_DIM: usize = 256;

const NAMES: [&str; 12] = [
    "Frank", "Maria", "Lena", "Tom", "Iris", "Victor", "Nadia", "Omar", "Grace", "Hugo", "Ruth", "Felix",
];

const OPENINGS: [&str; 4] = [
    "is drawn into a case involving a {a}.",
    "wakes up next to a {a} with no memory of the {b}.",
    "returns home to find the {a} gone.",
    "receives a letter about the {a}.",
];

const PLOT_SENTENCES: [&str; 8] = [
    "{n} discovers a {a} hidden near the {b}.",
    "Soon {n} must confront the {a} before the {b} changes everything.",
    "Meanwhile, {n} learns that the {a} is connected to the {b}.",
    "{n} and {m} argue about the {a} late at night.",
    "In the end, {n} risks everything for the {a}.",
    "A stranger warns {n} that the {a} will return.",
    "{n} follows the {a} across the city.",
    "Years later, {n} still remembers the {b}.",
];

const UTTERANCES: [&str; 8] = [
    "Did you hear about the {w}?",
    "I can't stop thinking about the {w}.",
    "We need to talk about the {w}.",
    "Then we deal with it tonight.",
    "You know I'm right about this.",
    "Not now. Not like this.",
    "Tell me everything about the {w}.",
    "I never wanted any of this.",
];

const LOCATIONS: [&str; 10] = [
    "WAREHOUSE",
    "SPACE STATION",
    "HARBOR",
    "APARTMENT",
    "DINER",
    "TRAIN STATION",
    "FIELD HOSPITAL",
    "ROOFTOP",
    "CHAPEL",
    "PARKING GARAGE",
];

const ATMOSPHERE: [&str; 4] = [
    "Rain streaks the windows.",
    "A single lamp flickers overhead.",
    "Distant sirens fade in and out.",
    "The air is thick with silence.",
];

/// Template-filling text generator driven by a splitmix64 stream.
///
/// It recognizes the three prompt shapes the pipeline emits (plot, dialogue,
/// scene) and answers each with text of the matching surface form.
#[derive(Debug, Clone)]
pub struct MockGenerator {
    lexicons: Vec<Lexicon>,
}

impl MockGenerator {
    pub fn new(lexicons: Vec<Lexicon>) -> Self {
        Self { lexicons }
    }

    fn lexicon(&self, genre: Genre) -> &[String] {
        let i = Genre::CLASSES.iter().position(|g| *g == genre).unwrap_or(0);
        &self.lexicons[i].tokens
    }

    fn request_seed(request: &GenerationRequest) -> u64 {
        let params = format!(
            "{}|{}|{}|{:?}",
            request.max_new_tokens,
            request.top_k,
            request.temperature.to_bits(),
            request.stop_marker
        );
        request.seed ^ fnv1a64(request.prompt.as_bytes()) ^ fnv1a64(params.as_bytes()).rotate_left(29)
    }

    fn compose(&self, prompt: &str, rng: &mut SplitMix64, budget: usize) -> String {
        if prompt.starts_with(SCENE_PROMPT_PREFIX) && prompt.ends_with(SCENE_PROMPT_MARKER) {
            self.compose_scene(prompt, rng)
        } else if prompt.starts_with(SUMMARY_PREFIX) && prompt.ends_with(DIALOGUE_PROMPT_MARKER) {
            self.compose_dialogue(prompt, rng)
        } else {
            self.compose_plot(prompt, rng, budget)
        }
    }

    fn sentence_genre(&self, target: Genre, rng: &mut SplitMix64) -> Genre {
        if target.is_free() {
            return *rng.pick(&Genre::CLASSES);
        }
        if rng.unit() < 0.55 {
            return target;
        }
        let others: Vec<Genre> = Genre::CLASSES.iter().copied().filter(|g| *g != target).collect();
        *rng.pick(&others)
    }

    fn fill(&self, template: &str, genre: Genre, rng: &mut SplitMix64) -> String {
        let words = self.lexicon(genre);
        let n = rng.pick(&NAMES);
        let mut m = rng.pick(&NAMES);
        if m == n {
            m = &NAMES[(NAMES.iter().position(|x| x == n).unwrap() + 1) % NAMES.len()];
        }
        template
            .replace("{n}", n)
            .replace("{m}", m)
            .replace("{a}", rng.pick(words))
            .replace("{b}", rng.pick(words))
    }

    fn compose_plot(&self, prompt: &str, rng: &mut SplitMix64, budget: usize) -> String {
        let (target, context) = Genre::CLASSES
            .iter()
            .find_map(|g| {
                let code = g.control_code()?;
                prompt.strip_prefix(&code).map(|rest| (*g, rest))
            })
            .unwrap_or((Genre::GenreFree, prompt));

        let mut sentences = Vec::new();
        if !context.trim_end().ends_with(['.', '!', '?']) {
            let g = self.sentence_genre(target, rng);
            sentences.push(self.fill(rng.pick(&OPENINGS), g, rng));
        }
        let count = 2 + rng.below(3);
        for _ in 0..count {
            let g = self.sentence_genre(target, rng);
            sentences.push(self.fill(rng.pick(&PLOT_SENTENCES), g, rng));
        }

        let mut out: Vec<String> = Vec::new();
        let mut used = 0;
        for s in sentences {
            let words = s.split_whitespace().count();
            if !out.is_empty() && used + words > budget {
                break;
            }
            used += words;
            out.push(s);
        }
        let text = out.join(" ");
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.len() > budget {
            words[..budget].join(" ")
        } else {
            text
        }
    }

    fn compose_dialogue(&self, prompt: &str, rng: &mut SplitMix64) -> String {
        let summary = prompt
            .strip_prefix(SUMMARY_PREFIX)
            .and_then(|p| p.strip_suffix(DIALOGUE_PROMPT_MARKER))
            .unwrap_or("");
        let mut speakers: Vec<&str> = NAMES
            .iter()
            .copied()
            .filter(|n| summary.split(|c: char| !c.is_alphanumeric()).any(|w| w == *n))
            .collect();
        let wanted = 2 + rng.below(2);
        while speakers.len() < wanted {
            let n = rng.pick(&NAMES);
            if !speakers.contains(n) {
                speakers.push(n);
            }
        }
        speakers.truncate(wanted.max(2));

        let keywords: Vec<String> = word_tokens(summary)
            .into_iter()
            .filter(|w| w.len() > 3 && w.chars().all(char::is_alphabetic))
            .collect();
        let fallback = ["plan".to_string()];
        let keywords: &[String] = if keywords.is_empty() { &fallback } else { &keywords };

        let turns = 3 + rng.below(4);
        let mut lines = Vec::with_capacity(turns);
        let mut speaker = rng.below(speakers.len());
        for _ in 0..turns {
            let utterance = rng.pick(&UTTERANCES).replace("{w}", rng.pick(keywords));
            lines.push(format!("{}: {}", speakers[speaker], utterance));
            speaker = (speaker + 1 + rng.below(speakers.len() - 1)) % speakers.len();
        }
        // Text past the blank line is what a stop marker is expected to cut.
        format!("{}\n\n{}{}", lines.join("\n"), SUMMARY_PREFIX, "And so it continues.")
    }

    fn compose_scene(&self, prompt: &str, rng: &mut SplitMix64) -> String {
        let mut speakers: Vec<&str> = Vec::new();
        for line in prompt.lines() {
            if let Some((name, _)) = line.split_once(": ") {
                if !speakers.contains(&name) && !name.is_empty() {
                    speakers.push(name);
                }
            }
        }
        let setting = match rng.below(10) {
            0..=5 => "INT.",
            6..=8 => "EXT.",
            _ => "INT./EXT.",
        };
        let location = rng.pick(&LOCATIONS);
        let time = if rng.below(2) == 0 { "DAY" } else { "NIGHT" };
        let place = location.to_lowercase();
        let opener = match speakers.as_slice() {
            [] => format!("The {place} is empty."),
            [one] => format!("{one} stands alone in the {place}."),
            [a, b, ..] => format!("{a} and {b} face each other across the {place}."),
        };
        format!("{setting} {location} - {time}\n{opener} {}", rng.pick(&ATMOSPHERE))
    }
}

impl Default for MockGenerator {
    fn default() -> Self {
        Self::new(Lexicon::builtin())
    }
}

fn cut_at_stop(text: String, stop: Option<&str>) -> String {
    match stop.and_then(|m| text.find(m)) {
        Some(pos) => text[..pos].to_string(),
        None => text,
    }
}

impl TextGenerator for MockGenerator {
    fn generate_text(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        request.validate()?;
        let base = Self::request_seed(request);
        let wanted = request.num_candidates as usize;
        let budget = request.max_new_tokens as usize;
        let mut out: Vec<String> = Vec::with_capacity(wanted);
        let mut attempt = 0u64;
        while out.len() < wanted {
            let mut rng = SplitMix64::new(derive_seed(base, "candidate", attempt));
            attempt += 1;
            let text = cut_at_stop(
                self.compose(&request.prompt, &mut rng, budget),
                request.stop_marker.as_deref(),
            );
            // Resample duplicates a bounded number of times; tiny budgets may not allow distinctness.
            if out.contains(&text) && attempt < 16 * wanted as u64 {
                continue;
            }
            out.push(text);
        }
        Ok(out)
    }
}

/// Lexicon-count classifier: `p(g) = (count_g + ε) / Σ_h (count_h + ε)`.
#[derive(Debug, Clone)]
pub struct MockClassifier {
    index: HashMap<String, usize>,
    smoothing: f64,
}

impl MockClassifier {
    pub fn new(lexicons: Vec<Lexicon>) -> Self {
        Self::with_smoothing(lexicons, CLASSIFIER_SMOOTHING)
    }

    pub fn with_smoothing(lexicons: Vec<Lexicon>, smoothing: f64) -> Self {
        let mut index = HashMap::new();
        for lex in &lexicons {
            if let Some(i) = Genre::CLASSES.iter().position(|g| *g == lex.genre) {
                for t in &lex.tokens {
                    index.insert(t.clone(), i);
                }
            }
        }
        Self { index, smoothing }
    }

    /// Lexicon hit counts in [`Genre::CLASSES`] order.
    pub fn counts(&self, text: &str) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for t in word_tokens(text) {
            if let Some(&i) = self.index.get(&t) {
                counts[i] += 1;
            }
        }
        counts
    }
}

impl Default for MockClassifier {
    fn default() -> Self {
        Self::new(Lexicon::builtin())
    }
}

impl GenreClassifier for MockClassifier {
    fn classify_genre(&self, text: &str) -> Result<GenreDistribution, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let weights = self.counts(text).map(|c| c as f64 + self.smoothing);
        GenreDistribution::from_weights(weights)
            .map_err(|e| GatewayError::malformed("mock-classifier", e.to_string(), text))
    }
}

/// Signed feature hashing of lowercase word tokens into 256 buckets.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self {
            dim: MOCK_EMBEDDING_DIM,
        }
    }
}

impl MockEmbedder {
    pub fn embed(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dim];
        for token in word_tokens(text) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 1 { 1.0 } else { -1.0 };
        }
        Embedding::normalized(acc)
    }
}

impl SentenceEmbedder for MockEmbedder {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

/// Hash-derived perplexity. Non-semantic; for plumbing tests only.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl PerplexityScorer for MockScorer {
    fn score_perplexity(&self, text: &str) -> Result<PerplexityScore, GatewayError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let u = (fnv1a64(text.as_bytes()) >> 11) as f64 / (1u64 << 53) as f64;
        Ok(PerplexityScore {
            mean_nll_per_token: 1.5 + 3.0 * u,
            token_count: tokens.len() as u32,
        })
    }
}

/// Wraps a generator and keeps every request it forwards.
pub struct RecordingGenerator<G> {
    inner: G,
    log: Mutex<Vec<GenerationRequest>>,
}

impl<G: TextGenerator> RecordingGenerator<G> {
    pub fn new(inner: G) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.log.lock().expect("request log poisoned").clone()
    }

    pub fn prompts(&self) -> Vec<String> {
        self.requests().into_iter().map(|r| r.prompt).collect()
    }
}

impl<G: TextGenerator> TextGenerator for RecordingGenerator<G> {
    fn generate_text(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        self.log.lock().expect("request log poisoned").push(request.clone());
        self.inner.generate_text(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::cosine;

    fn plot_request(prompt: &str, n: u32, seed: u64) -> GenerationRequest {
        GenerationRequest {
            prompt: prompt.into(),
            max_new_tokens: 200,
            top_k: 4,
            temperature: 1.0,
            num_candidates: n,
            seed,
            stop_marker: None,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let g = MockGenerator::default();
        let r = plot_request("This is a crime plot. A detective", 5, 42);
        assert_eq!(g.generate_text(&r).unwrap(), g.generate_text(&r).unwrap());
    }

    #[test]
    fn candidates_are_distinct() {
        let g = MockGenerator::default();
        let out = g
            .generate_text(&plot_request("This is a war plot. Rain", 3, 9))
            .unwrap();
        assert_eq!(out.len(), 3);
        assert_ne!(out[0], out[1]);
        assert_ne!(out[1], out[2]);
        assert_ne!(out[0], out[2]);
    }

    #[test]
    fn seed_changes_output() {
        let g = MockGenerator::default();
        let a = g.generate_text(&plot_request("Once", 1, 1)).unwrap();
        let b = g.generate_text(&plot_request("Once", 1, 2)).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn stop_marker_truncates() {
        let g = MockGenerator::default();
        let mut r = plot_request("Summary: Tom meets Iris.\nDialogue:\n", 1, 3);
        r.stop_marker = Some("\n\n".into());
        let out = &g.generate_text(&r).unwrap()[0];
        assert!(!out.contains("\n\n"));
        assert!(out.lines().all(|l| l.contains(": ")));
    }

    #[test]
    fn budget_caps_plot_length() {
        let g = MockGenerator::default();
        let mut r = plot_request("This is a crime plot. A", 1, 3);
        r.max_new_tokens = 5;
        let out = &g.generate_text(&r).unwrap()[0];
        assert!(out.split_whitespace().count() <= 5);
    }

    #[test]
    fn classifier_smoothing_formula() {
        let c = MockClassifier::default();
        let d = c.classify_genre("the alien robot boards the spaceship").unwrap();
        assert!((d.prob(Genre::SciFi) - 3.1 / 3.4).abs() < 1e-12);
        assert!((d.prob(Genre::Crime) - 0.1 / 3.4).abs() < 1e-12);
    }

    #[test]
    fn classifier_without_hits_is_uniform() {
        let d = MockClassifier::default()
            .classify_genre("nothing relevant here")
            .unwrap();
        for g in Genre::CLASSES {
            assert!((d.prob(g) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn classifier_rejects_empty_text() {
        assert!(matches!(
            MockClassifier::default().classify_genre("   "),
            Err(GatewayError::EmptyText)
        ));
    }

    #[test]
    fn embedder_contract() {
        let e = MockEmbedder::default();
        let a = e.embed("A b");
        let b = e.embed("b a");
        assert_eq!(a, b);
        assert_eq!(a.dim, 256);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        assert!((cosine(&a.values, &e.embed("a B").values) - 1.0).abs() < 1e-6);
        let z = e.embed("");
        assert!(z.is_zero());
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn embedder_bucket_and_sign_follow_fnv() {
        let e = MockEmbedder::default().embed("word");
        let h = fnv1a64(b"word");
        let bucket = (h % 256) as usize;
        let sign = if h >> 63 == 1 { 1.0 } else { -1.0 };
        assert_eq!(e.values[bucket], sign);
        assert_eq!(e.values.iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn scorer_is_deterministic_and_bounded() {
        let s = MockScorer;
        let a = s.score_perplexity("the quick brown fox").unwrap();
        assert_eq!(a, s.score_perplexity("the quick brown fox").unwrap());
        assert_eq!(a.token_count, 4);
        assert!(a.mean_nll_per_token >= 0.0 && a.mean_nll_per_token <= 20.0);
        assert!(a.perplexity().is_finite());
        assert!(matches!(s.score_perplexity(""), Err(GatewayError::EmptyText)));
    }
}
