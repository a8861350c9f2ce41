//! Chat-completion and embedding clients.
//!
//! [`Client`] wraps a [`ChatBackend`] (a vendor router or a mock) with request
//! validation, a persistent response cache, bounded retries and a per-route
//! in-flight ceiling. Every stage of the harness talks to providers through
//! it, so a warm cache replays a run without touching the network.

mod cache;
mod mock;
mod retry;
mod simulated;
mod vendors;

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{CacheRecord, ResponseCache, CACHE_SCHEMA_VERSION};
pub use mock::{MockEmbedder, MockProvider};
pub use retry::{Limiter, RetryPolicy};
pub use simulated::SimulatedLlm;
pub use vendors::{vendor_for_model, HttpEmbedder, HttpRouter, Vendor};

pub const DEFAULT_TOP_P: f64 = 0.9;
pub const DEFAULT_MAX_TOKENS: u32 = 1024;
pub const DEFAULT_EMBEDDING_DIMENSION: usize = 3072;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ProviderError {
    #[error("transport failure ({provider}): {message}")]
    Transport { provider: String, message: String },

    #[error("{provider} returned HTTP {status}: {message}")]
    Http {
        provider: String,
        status: u16,
        message: String,
    },

    #[error("malformed provider response: {0}")]
    Malformed(String),

    #[error("invalid request: {0}")]
    Precondition(String),

    #[error("missing credentials for {provider}: set {var}")]
    MissingCredentials { provider: String, var: String },

    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<ProviderError>,
    },
}

impl ProviderError {
    /// Transport failures, rate limiting (429) and server errors (5xx).
    pub fn is_retriable(&self) -> bool {
        match self {
            ProviderError::Transport { .. } => true,
            ProviderError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }

    /// Client-side rejections that will not succeed on retry.
    pub fn is_permanent(&self) -> bool {
        matches!(self, ProviderError::Http { .. }) && !self.is_retriable()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

impl Message {
    pub fn user(text: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            text: text.into(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            text: text.into(),
        }
    }
}

/// One chat-completion request.
///
/// `replicate` distinguishes otherwise identical requests that must produce
/// independent samples (k temperature samples, a retry after a malformed
/// verdict). It participates in the cache key but is never sent to vendors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub system_text: Option<String>,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub replicate: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            system_text: None,
            messages,
            temperature: 1.0,
            top_p: DEFAULT_TOP_P,
            max_tokens: DEFAULT_MAX_TOKENS,
            replicate: 0,
        }
    }

    pub fn user(model_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::new(model_id, vec![Message::user(text)])
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system_text = Some(system.into());
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_replicate(mut self, replicate: u32) -> Self {
        self.replicate = replicate;
        self
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |m: String| Err(ProviderError::Precondition(m));
        if self.model_id.trim().is_empty() {
            return bad("model_id is empty".into());
        }
        if self.messages.is_empty() {
            return bad("messages is empty".into());
        }
        for (i, m) in self.messages.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return bad(format!("message {i} has role {:?}, expected {expected:?}", m.role));
            }
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return bad("conversation must end with a user turn".into());
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad(format!("temperature {} must be finite and >= 0", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} must lie in (0, 1]", self.top_p));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        Ok(())
    }

    /// Canonical JSON: keys sorted, UTF-8, no insignificant whitespace.
    pub fn canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn cache_key(&self) -> CacheKey {
        CacheKey::of("chat", &self.canonical_json())
    }
}

pub(crate) fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json's default Map is a BTreeMap, so keys come out sorted at every depth.
    let v = serde_json::to_value(value).expect("request types always serialize");
    serde_json::to_string(&v).expect("values always serialize")
}

pub fn cache_key(request: &ChatRequest) -> CacheKey {
    request.cache_key()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(String);

impl CacheKey {
    fn of(kind: &str, canonical: &str) -> CacheKey {
        let mut h = Sha256::new();
        h.update(kind.as_bytes());
        h.update([0u8]);
        h.update(canonical.as_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub model_id: String,
    pub usage: Usage,
    #[serde(default)]
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Self {
        EmbeddingVector { values }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

pub trait ChatBackend: Send + Sync {
    /// Name of the rate-limit bucket a model's requests share.
    fn route(&self, model_id: &str) -> String {
        let _ = model_id;
        "default".to_string()
    }

    fn chat(&self, request: &ChatRequest) -> Result<Completion, ProviderError>;
}

pub trait EmbedBackend: Send + Sync {
    fn route(&self) -> String {
        "embedding".to_string()
    }

    fn embed(
        &self,
        model: &str,
        texts: &[String],
        dimension: usize,
    ) -> Result<Vec<Vec<f64>>, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSettings {
    pub model: String,
    pub dimension: usize,
    /// Inputs longer than this many characters are truncated with a warning.
    pub max_chars: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            model: "gemini-embedding-001".to_string(),
            dimension: DEFAULT_EMBEDDING_DIMENSION,
            max_chars: 8000,
        }
    }
}

#[derive(Serialize)]
struct EmbedKey<'a> {
    model: &'a str,
    dimension: usize,
    text: &'a str,
}

#[derive(Debug, Default)]
struct Counters {
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

pub struct Client {
    chat: Arc<dyn ChatBackend>,
    embedder: Option<Arc<dyn EmbedBackend>>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    limiter: Limiter,
    embedding: EmbeddingSettings,
    inflight: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
    counters: Counters,
}

impl Client {
    pub fn new(chat: Arc<dyn ChatBackend>) -> Self {
        Client {
            chat,
            embedder: None,
            cache: None,
            retry: RetryPolicy::default(),
            limiter: Limiter::new(DEFAULT_MAX_IN_FLIGHT),
            embedding: EmbeddingSettings::default(),
            inflight: Mutex::new(HashMap::new()),
            counters: Counters::default(),
        }
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn EmbedBackend>, settings: EmbeddingSettings) -> Self {
        self.embedder = Some(embedder);
        self.embedding = settings;
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.limiter = Limiter::new(max_in_flight);
        self
    }

    pub fn embedding_settings(&self) -> &EmbeddingSettings {
        &self.embedding
    }

    /// Calls that reached a backend (cache misses, counting retries).
    pub fn network_calls(&self) -> u64 {
        self.counters.network_calls.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.counters.cache_hits.load(Ordering::SeqCst)
    }

    fn key_lock(&self, key: &CacheKey) -> Arc<Mutex<()>> {
        let mut map = self.inflight.lock().expect("inflight map poisoned");
        map.entry(key.clone()).or_default().clone()
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<Completion, ProviderError> {
        request.validate()?;
        let key = request.cache_key();
        if let Some(hit) = self.cached_completion(&key) {
            return Ok(hit);
        }
        // Single flight per key: concurrent identical requests wait for the
        // first one and then read its cached result.
        let lock = self.key_lock(&key);
        let _guard = lock.lock().expect("key lock poisoned");
        if let Some(hit) = self.cached_completion(&key) {
            return Ok(hit);
        }

        let route = self.chat.route(&request.model_id);
        let mut completion = self.retry.run(|| {
            let _permit = self.limiter.acquire(&route);
            self.counters.network_calls.fetch_add(1, Ordering::SeqCst);
            self.chat.chat(request)
        })?;
        completion.text.truncate(completion.text.trim_end().len());
        if completion.text.trim().is_empty() {
            return Err(ProviderError::Malformed(format!(
                "empty completion from {}",
                request.model_id
            )));
        }
        completion.cached = false;
        if let Some(cache) = &self.cache {
            cache
                .insert_chat(&key, request, &completion)
                .map_err(|e| ProviderError::Transport {
                    provider: "cache".into(),
                    message: e.to_string(),
                })?;
        }
        Ok(completion)
    }

    fn cached_completion(&self, key: &CacheKey) -> Option<Completion> {
        let mut hit = self.cache.as_ref()?.get_chat(key)?;
        hit.cached = true;
        self.counters.cache_hits.fetch_add(1, Ordering::SeqCst);
        Some(hit)
    }

    /// Embeds `texts` in order; cached vectors are reused and only misses are
    /// sent to the backend, in one batch.
    pub fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.is_empty() {
            return Err(ProviderError::Precondition("no texts to embed".into()));
        }
        if let Some(i) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(ProviderError::Precondition(format!("text {i} is empty")));
        }
        let embedder = self
            .embedder
            .as_ref()
            .ok_or_else(|| ProviderError::Precondition("no embedding backend configured".into()))?;
        let settings = &self.embedding;
        let inputs: Vec<String> = texts
            .iter()
            .map(|t| truncate_chars(t, settings.max_chars))
            .collect();
        let keys: Vec<CacheKey> = inputs
            .iter()
            .map(|t| {
                CacheKey::of(
                    "embed",
                    &canonical_json(&EmbedKey {
                        model: &settings.model,
                        dimension: settings.dimension,
                        text: t,
                    }),
                )
            })
            .collect();

        let mut out: Vec<Option<Vec<f64>>> = keys
            .iter()
            .map(|k| self.cache.as_ref().and_then(|c| c.get_embedding(k)))
            .collect();
        let hits = out.iter().filter(|v| v.is_some()).count();
        self.counters.cache_hits.fetch_add(hits as u64, Ordering::SeqCst);

        let missing: Vec<usize> = (0..out.len()).filter(|i| out[*i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<String> = missing.iter().map(|i| inputs[*i].clone()).collect();
            let route = embedder.route();
            let vectors = self.retry.run(|| {
                let _permit = self.limiter.acquire(&route);
                self.counters.network_calls.fetch_add(1, Ordering::SeqCst);
                embedder.embed(&settings.model, &batch, settings.dimension)
            })?;
            if vectors.len() != batch.len() {
                return Err(ProviderError::Malformed(format!(
                    "asked for {} embeddings, got {}",
                    batch.len(),
                    vectors.len()
                )));
            }
            for (slot, vector) in missing.into_iter().zip(vectors) {
                if let Some(cache) = &self.cache {
                    cache
                        .insert_embedding(&keys[slot], &settings.model, &inputs[slot], &vector)
                        .map_err(|e| ProviderError::Transport {
                            provider: "cache".into(),
                            message: e.to_string(),
                        })?;
                }
                out[slot] = Some(vector);
            }
        }

        let vectors: Vec<EmbeddingVector> = out
            .into_iter()
            .map(|v| EmbeddingVector::new(v.expect("every slot filled")))
            .collect();
        let dim = vectors[0].dimension();
        if dim == 0 || vectors.iter().any(|v| v.dimension() != dim) {
            return Err(ProviderError::Malformed(format!(
                "embedding dimensions disagree: {:?}",
                vectors.iter().map(EmbeddingVector::dimension).collect::<Vec<_>>()
            )));
        }
        if dim != settings.dimension {
            return Err(ProviderError::Malformed(format!(
                "expected {}-dimensional embeddings, got {dim}",
                settings.dimension
            )));
        }
        Ok(vectors)
    }
}

fn truncate_chars(text: &str, max_chars: usize) -> String {
    match text.char_indices().nth(max_chars) {
        Some((cut, _)) => {
            tracing::warn!(max_chars, "embedding input truncated");
            text[..cut].to_string()
        }
        None => text.to_string(),
    }
}
