//! Blocking HTTP client for remotely hosted backends.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{
    ClassifyResponse, EmbedRequest, EmbedResponse, ErrorBody, GenerateResponse, TextRequest, CLASSIFY_PATH, EMBED_PATH,
    GENERATE_PATH, SCORE_PATH,
};
use super::{
    Embedding, GatewayError, GenerationRequest, GenreClassifier, GenreDistribution, PerplexityScore, PerplexityScorer,
    SentenceEmbedder, TextGenerator,
};
use crate::domain::Genre;

/// Remote classifiers are renormalized when their sum is this close to one.
const REMOTE_SUM_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub retries: u32,
    pub backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            retries: 1,
            backoff: Duration::from_millis(500),
        }
    }
}

/// One client serves all four endpoint families of a base URL.
#[derive(Clone)]
pub struct RemoteClient {
    agent: ureq::Agent,
    base_url: String,
    token: Option<String>,
    policy: RetryPolicy,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("base_url", &self.base_url)
            .field("policy", &self.policy)
            .finish_non_exhaustive()
    }
}

enum Attempt {
    Retryable(GatewayError),
    Final(GatewayError),
}

impl RemoteClient {
    pub fn new(base_url: &str, token: Option<String>) -> Self {
        Self::with_policy(base_url, token, RetryPolicy::default())
    }

    pub fn with_policy(base_url: &str, token: Option<String>, policy: RetryPolicy) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(policy.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            token,
            policy,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn post<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        path: &str,
        body: &Req,
    ) -> Result<(Resp, String), GatewayError> {
        let url = format!("{}{}", self.base_url, path);
        let payload =
            serde_json::to_string(body).map_err(|e| GatewayError::InvalidRequest(format!("encoding request: {e}")))?;
        let mut attempt = 0;
        loop {
            match self.post_once(&url, &payload) {
                Ok(ok) => return Ok(ok),
                Err(Attempt::Final(e)) => return Err(e),
                Err(Attempt::Retryable(e)) => {
                    if attempt >= self.policy.retries {
                        return Err(e);
                    }
                    attempt += 1;
                    log::warn!("retrying {url} after transport failure: {e}");
                    std::thread::sleep(self.policy.backoff);
                }
            }
        }
    }

    fn post_once<Resp: DeserializeOwned>(&self, url: &str, payload: &str) -> Result<(Resp, String), Attempt> {
        let unavailable = |detail: String, raw: String| GatewayError::BackendUnavailable {
            endpoint: url.to_string(),
            detail,
            raw,
        };
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req
            .send(payload)
            .map_err(|e| Attempt::Retryable(unavailable(e.to_string(), String::new())))?;
        let status = resp.status().as_u16();
        let raw = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retryable(unavailable(format!("reading body: {e}"), String::new())))?;
        match status {
            200..=299 => serde_json::from_str(&raw)
                .map(|v| (v, raw.clone()))
                .map_err(|e| Attempt::Final(GatewayError::malformed(url, e.to_string(), raw))),
            500..=599 => Err(Attempt::Retryable(unavailable(format!("status {status}"), raw))),
            _ => {
                let body: Option<ErrorBody> = serde_json::from_str(&raw).ok();
                Err(Attempt::Final(match body {
                    Some(b) if b.error == ErrorBody::EMPTY_TEXT => GatewayError::EmptyText,
                    Some(b) => GatewayError::InvalidRequest(format!("status {status}: {}", b.error)),
                    None => GatewayError::malformed(url, format!("status {status}"), raw),
                }))
            }
        }
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}{}", self.base_url, path)
    }
}

impl TextGenerator for RemoteClient {
    fn generate_text(&self, request: &GenerationRequest) -> Result<Vec<String>, GatewayError> {
        request.validate()?;
        let (resp, raw): (GenerateResponse, String) = self.post(GENERATE_PATH, request)?;
        if resp.completions.len() != request.num_candidates as usize {
            return Err(GatewayError::malformed(
                &self.endpoint(GENERATE_PATH),
                format!(
                    "expected {} completions, got {}",
                    request.num_candidates,
                    resp.completions.len()
                ),
                raw,
            ));
        }
        Ok(resp.completions)
    }
}

impl GenreClassifier for RemoteClient {
    fn classify_genre(&self, text: &str) -> Result<GenreDistribution, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let (resp, raw): (ClassifyResponse, String) =
            self.post(CLASSIFY_PATH, &TextRequest { text: text.to_string() })?;
        let probs = resp.probs;
        let malformed = |detail: String| GatewayError::malformed(&self.endpoint(CLASSIFY_PATH), detail, raw.clone());
        let mut weights = [0.0; 4];
        for (key, p) in &probs {
            let genre: Genre = key.parse().map_err(|_| malformed(format!("unknown class `{key}`")))?;
            let slot = Genre::CLASSES
                .iter()
                .position(|g| *g == genre)
                .ok_or_else(|| malformed(format!("unexpected class `{key}`")))?;
            weights[slot] = *p;
        }
        if probs.len() != 4 {
            return Err(malformed(format!("expected 4 classes, got {}", probs.len())));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > REMOTE_SUM_SLACK {
            return Err(malformed(format!("probabilities sum to {sum}")));
        }
        GenreDistribution::from_weights(weights).map_err(|e| malformed(e.to_string()))
    }
}

impl SentenceEmbedder for RemoteClient {
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Embedding>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        let (resp, raw): (EmbedResponse, String) = self.post(EMBED_PATH, &EmbedRequest { texts: texts.to_vec() })?;
        let malformed = |detail: String| GatewayError::malformed(&self.endpoint(EMBED_PATH), detail, raw.clone());
        if resp.embeddings.len() != texts.len() {
            return Err(malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.embeddings.len()
            )));
        }
        let dim = resp.embeddings.first().map_or(0, |e| e.values.len());
        if dim == 0 {
            return Err(malformed("embedding dimension is zero".into()));
        }
        resp.embeddings
            .into_iter()
            .map(|e| {
                if e.values.len() != dim || e.dim != dim {
                    return Err(malformed("inconsistent embedding dimensions".into()));
                }
                if e.values.iter().any(|v| !v.is_finite()) {
                    return Err(malformed("non-finite embedding value".into()));
                }
                Ok(Embedding::normalized(e.values.iter().map(|&v| f64::from(v)).collect()))
            })
            .collect()
    }
}

impl PerplexityScorer for RemoteClient {
    fn score_perplexity(&self, text: &str) -> Result<PerplexityScore, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyText);
        }
        let (score, raw): (PerplexityScore, String) = self.post(SCORE_PATH, &TextRequest { text: text.to_string() })?;
        if !(score.mean_nll_per_token >= 0.0 && score.mean_nll_per_token.is_finite()) || score.token_count == 0 {
            return Err(GatewayError::malformed(
                &self.endpoint(SCORE_PATH),
                "score outside contract",
                raw,
            ));
        }
        Ok(score)
    }
}
