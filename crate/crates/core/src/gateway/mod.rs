//! Uniform clients for the four neural services the pipeline depends on:
//! text generation, genre classification, sentence embedding and perplexity
//! scoring.
//!
//! Every service is a trait object so the pipeline can run against the
//! deterministic in-process mocks ([`mock`]) or against remote model servers
//! speaking the JSON wire protocol ([`remote`], [`wire`]).

pub mod lexicon;
pub mod mock;
pub mod remote;
pub mod wire;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Genre;

pub use lexicon::Lexicon;
pub use mock::{MockClassifier, MockEmbedder, MockGenerator, MockScorer};
pub use remote::{RemoteClient, RetryPolicy};

/// Hard cap on candidates per generation request.
pub const MAX_CANDIDATES: u32 = 64;

/// Tolerance on the probability sum of a [`GenreDistribution`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend unavailable at {endpoint}: {detail}")]
    BackendUnavailable {
        endpoint: String,
        detail: String,
        raw: String,
    },
    #[error("malformed reply from {endpoint}: {detail}")]
    BackendMalformedReply {
        endpoint: String,
        detail: String,
        raw: String,
    },
    #[error("text is empty")]
    EmptyText,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl GatewayError {
    pub(crate) fn malformed(endpoint: &str, detail: impl Into<String>, raw: impl Into<String>) -> Self {
        GatewayError::BackendMalformedReply {
            endpoint: endpoint.to_string(),
            detail: detail.into(),
            raw: raw.into(),
        }
    }

    /// Raw payload carried by transport and contract errors.
    pub fn raw_payload(&self) -> Option<&str> {
        match self {
            GatewayError::BackendUnavailable { raw, .. } | GatewayError::BackendMalformedReply { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub top_k: u32,
    pub temperature: f64,
    pub num_candidates: u32,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_marker: Option<String>,
}

impl GenerationRequest {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a positive finite number");
        }
        if self.num_candidates == 0 || self.num_candidates > MAX_CANDIDATES {
            return bad("num_candidates must be within 1..=64");
        }
        if matches!(&self.stop_marker, Some(m) if m.is_empty()) {
            return bad("stop_marker must not be empty");
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("probability for {0} is outside [0, 1]")]
    OutOfRange(Genre),
    #[error("missing probability for {0}")]
    Missing(Genre),
    #[error("unexpected class {0}")]
    UnexpectedClass(Genre),
    #[error("probabilities sum to {0}")]
    NotNormalized(f64),
}

/// Classifier output over the four genre classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Genre, f64>", into = "BTreeMap<Genre, f64>")]
pub struct GenreDistribution {
    probs: [f64; 4],
}

impl GenreDistribution {
    /// Probabilities in [`Genre::CLASSES`] order; must already sum to one.
    pub fn new(probs: [f64; 4]) -> Result<Self, DistributionError> {
        for (g, p) in Genre::CLASSES.iter().zip(probs) {
            if !(0.0..=1.0).contains(&p) {
                return Err(DistributionError::OutOfRange(*g));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(DistributionError::NotNormalized(sum));
        }
        Ok(Self { probs })
    }

    /// Normalizes non-negative weights with a positive sum.
    pub fn from_weights(weights: [f64; 4]) -> Result<Self, DistributionError> {
        for (g, w) in Genre::CLASSES.iter().zip(weights) {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(DistributionError::OutOfRange(*g));
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(DistributionError::NotNormalized(sum));
        }
        Self::new(weights.map(|w| w / sum))
    }

    pub fn uniform() -> Self {
        Self { probs: [0.25; 4] }
    }

    /// Probability of `genre`; `GenreFree` has none.
    pub fn prob(&self, genre: Genre) -> f64 {
        Genre::CLASSES
            .iter()
            .position(|g| *g == genre)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn probs(&self) -> [f64; 4] {
        self.probs
    }

    /// Most probable genre, or `None` when the maximum is shared.
    pub fn argmax(&self) -> Option<Genre> {
        let max = self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut winners = Genre::CLASSES
            .iter()
            .zip(self.probs)
            .filter(|(_, p)| *p == max)
            .map(|(g, _)| *g);
        let first = winners.next();
        match winners.next() {
            Some(_) => None,
            None => first,
        }
    }
}

impl TryFrom<BTreeMap<Genre, f64>> for GenreDistribution {
    type Error = DistributionError;

    fn try_from(map: BTreeMap<Genre, f64>) -> Result<Self, Self::Error> {
        if let Some(g) = map.keys().find(|g| g.is_free()) {
            return Err(DistributionError::UnexpectedClass(*g));
        }
        let mut probs = [0.0; 4];
        for (i, g) in Genre::CLASSES.iter().enumerate() {
            probs[i] = *map.get(g).ok_or(DistributionError::Missing(*g))?;
        }
        Self::new(probs)
    }
}

impl From<GenreDistribution> for BTreeMap<Genre, f64> {
    fn from(d: GenreDistribution) -> Self {
        Genre::CLASSES.iter().copied().zip(d.probs).collect()
    }
}

/// Sentence embedding. Unit norm, or the all-zero sentinel for text with no tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub dim: usize,
    pub values: Vec<f32>,
}

impl Embedding {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim],
        }
    }

    /// L2-normalizes `values`; an all-zero vector becomes the sentinel.
    pub fn normalized(values: Vec<f64>) -> Self {
        let dim = values.len();
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Self::zero(dim);
        }
        Self {
            dim,
            values: values.iter().map(|v| (v / norm) as f32).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Cosine similarity of two equal-length vectors, computed in f64. Zero vectors score 0.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerplexityScore {
    pub mean_nll_per_token: f64,
    pub token_count: u32,
}

impl PerplexityScore {
    pub fn perplexity(&self) -> f64 {
        self.mean_nll_per_token.exp()
    }
}

pub trait TextGenerator: Send + Sync {
    /// Returns exactly `request.num_candidates` completions (continuations only).
    fn generate_text(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError>;
}

pub trait GenreClassifier: Send + Sync {
    fn classify_genre(&self, text: &str) -> Result<GenreDistribution, GatewayError>;
}

pub trait SentenceEmbedder: Send + Sync {
    /// One embedding per input, order preserved.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError>;
}

pub trait PerplexityScorer: Send + Sync {
    fn score_perplexity(&self, text: &str) -> Result<PerplexityScore, GatewayError>;
}

/// Remote endpoints; any `None` falls back to the in-process mock.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendUrls {
    pub generator: Option<String>,
    pub classifier: Option<String>,
    pub embedder: Option<String>,
    pub scorer: Option<String>,
    /// Forwarded as `Authorization: Bearer <token>`.
    pub api_token: Option<String>,
}

impl BackendUrls {
    pub const GEN_ENV: &'static str = "VSCRIPT_GEN_URL";
    pub const CLS_ENV: &'static str = "VSCRIPT_CLS_URL";
    pub const EMB_ENV: &'static str = "VSCRIPT_EMB_URL";
    pub const SCORE_ENV: &'static str = "VSCRIPT_SCORE_URL";
    pub const TOKEN_ENV: &'static str = "VSCRIPT_API_TOKEN";

    pub fn from_env() -> Self {
        let var = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        Self {
            generator: var(Self::GEN_ENV),
            classifier: var(Self::CLS_ENV),
            embedder: var(Self::EMB_ENV),
            scorer: var(Self::SCORE_ENV),
            api_token: var(Self::TOKEN_ENV),
        }
    }

    /// Fields set in `other` win.
    pub fn overlay(mut self, other: BackendUrls) -> Self {
        self.generator = other.generator.or(self.generator);
        self.classifier = other.classifier.or(self.classifier);
        self.embedder = other.embedder.or(self.embedder);
        self.scorer = other.scorer.or(self.scorer);
        self.api_token = other.api_token.or(self.api_token);
        self
    }
}

/// The four services bundled for the pipeline.
#[derive(Clone)]
pub struct Backends {
    pub generator: Arc<dyn TextGenerator>,
    pub classifier: Arc<dyn GenreClassifier>,
    pub embedder: Arc<dyn SentenceEmbedder>,
    pub scorer: Arc<dyn PerplexityScorer>,
}

impl Backends {
    pub fn mock() -> Self {
        let lexicons = Lexicon::builtin();
        Self {
            generator: Arc::new(MockGenerator::new(lexicons.clone())),
            classifier: Arc::new(MockClassifier::new(lexicons)),
            embedder: Arc::new(MockEmbedder::default()),
            scorer: Arc::new(MockScorer),
        }
    }

    pub fn from_urls(urls: &BackendUrls) -> Self {
        let mut b = Self::mock();
        let client = |url: &String| Arc::new(RemoteClient::new(url, urls.api_token.clone()));
        if let Some(url) = &urls.generator {
            b.generator = client(url);
        }
        if let Some(url) = &urls.classifier {
            b.classifier = client(url);
        }
        if let Some(url) = &urls.embedder {
            b.embedder = client(url);
        }
        if let Some(url) = &urls.scorer {
            b.scorer = client(url);
        }
        b
    }

    pub fn from_env() -> Self {
        Self::from_urls(&BackendUrls::from_env())
    }

    pub fn with_generator(mut self, generator: Arc<dyn TextGenerator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_classifier(mut self, classifier: Arc<dyn GenreClassifier>) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn SentenceEmbedder>) -> Self {
        self.embedder = embedder;
        self
    }
}

impl std::fmt::Debug for Backends {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Backends").finish_non_exhaustive()
    }
}

/// Embeds a single text.
pub fn embed_one(embedder: &dyn SentenceEmbedder, text: &str) -> Result<Embedding, GatewayError> {
    let mut out = embedder.embed_texts(&[text.to_string()])?;
    out.pop()
        .ok_or_else(|| GatewayError::malformed("embed", "no embedding returned", ""))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> GenerationRequest {
        GenerationRequest {
            prompt: "x".into(),
            max_new_tokens: 10,
            top_k: 4,
            temperature: 1.0,
            num_candidates: 3,
            seed: 1,
            stop_marker: None,
        }
    }

    #[test]
    fn request_validation() {
        assert!(request().validate().is_ok());
        let mut r = request();
        r.num_candidates = 65;
        assert!(matches!(r.validate(), Err(GatewayError::InvalidRequest(_))));
        let mut r = request();
        r.temperature = 0.0;
        assert!(r.validate().is_err());
        let mut r = request();
        r.top_k = 0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn distribution_checks() {
        assert!(GenreDistribution::new([0.25; 4]).is_ok());
        assert_eq!(
            GenreDistribution::new([0.5, 0.5, 0.5, 0.0]),
            Err(DistributionError::NotNormalized(1.5))
        );
        let d = GenreDistribution::from_weights([1.0, 3.0, 0.0, 0.0]).unwrap();
        assert_eq!(d.argmax(), Some(Genre::SciFi));
        assert_eq!(d.prob(Genre::SciFi), 0.75);
        assert_eq!(d.prob(Genre::GenreFree), 0.0);
        assert_eq!(GenreDistribution::uniform().argmax(), None);
    }

    #[test]
    fn distribution_wire_form() {
        let d = GenreDistribution::from_weights([1.0, 1.0, 1.0, 1.0]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"crime":0.25,"sci-fi":0.25,"war":0.25,"romance":0.25}"#);
        assert_eq!(serde_json::from_str::<GenreDistribution>(&json).unwrap(), d);
        assert!(serde_json::from_str::<GenreDistribution>(r#"{"crime":1.0}"#).is_err());
    }

    #[test]
    fn cosine_hand_values() {
        let h = std::f32::consts::FRAC_1_SQRT_2;
        assert!((cosine(&[1.0, 0.0], &[h, h]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn normalized_embedding_has_unit_norm() {
        let e = Embedding::normalized(vec![3.0, 4.0]);
        assert!((e.norm() - 1.0).abs() < 1e-6);
        assert!(Embedding::normalized(vec![0.0; 3]).is_zero());
    }
}
