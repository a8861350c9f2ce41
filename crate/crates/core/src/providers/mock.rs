use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, Completion, EmbedBackend, ProviderError, Usage};

type Responder = Box<dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync>;

/// A scripted chat backend. Deterministic whenever its responder is.
pub struct MockProvider {
    responder: Responder,
    calls: AtomicUsize,
    log: Mutex<Vec<ChatRequest>>,
}

impl MockProvider {
    pub fn new<F>(responder: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    {
        MockProvider {
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Answers every request with the same text.
    pub fn constant(text: impl Into<String>) -> Self {
        let text = text.into();
        MockProvider::new(move |_| Ok(text.clone()))
    }

    /// Answers from a queue in call order, repeating the last entry when drained.
    pub fn sequence<I, S>(texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let texts: Vec<String> = texts.into_iter().map(Into::into).collect();
        assert!(!texts.is_empty(), "sequence mock needs at least one reply");
        let next = AtomicUsize::new(0);
        MockProvider::new(move |_| {
            let i = next.fetch_add(1, Ordering::SeqCst).min(texts.len() - 1);
            Ok(texts[i].clone())
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl ChatBackend for MockProvider {
    fn chat(&self, request: &ChatRequest) -> Result<Completion, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log.lock().expect("mock log poisoned").push(request.clone());
        let text = (self.responder)(request)?;
        let input_tokens = request
            .messages
            .iter()
            .map(|m| m.text.split_whitespace().count() as u64)
            .sum();
        Ok(completion_for(&text, request, input_tokens))
    }
}

fn completion_for(text: &str, request: &ChatRequest, input_tokens: u64) -> Completion {
    Completion {
        text: text.to_string(),
        model_id: request.model_id.clone(),
        usage: Usage {
            input_tokens,
            output_tokens: text.split_whitespace().count() as u64,
        },
        cached: false,
    }
}

enum EmbedMode {
    /// Unit basis vector chosen by a hash of the whole text.
    Basis,
    /// Hashed bag of lowercase words, L2-normalised.
    BagOfWords,
    Table(HashMap<String, Vec<f64>>),
}

/// Deterministic embedding backend for tests and offline runs.
pub struct MockEmbedder {
    mode: EmbedMode,
    calls: AtomicUsize,
}

fn hash64(text: &str) -> u64 {
    let d = Sha256::digest(text.as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

impl MockEmbedder {
    pub fn basis() -> Self {
        MockEmbedder {
            mode: EmbedMode::Basis,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn bag_of_words() -> Self {
        MockEmbedder {
            mode: EmbedMode::BagOfWords,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn table(entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        MockEmbedder {
            mode: EmbedMode::Table(entries.into_iter().collect()),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn vector(&self, text: &str, dimension: usize) -> Result<Vec<f64>, ProviderError> {
        match &self.mode {
            EmbedMode::Basis => {
                let mut v = vec![0.0; dimension];
                v[(hash64(text) % dimension as u64) as usize] = 1.0;
                Ok(v)
            }
            EmbedMode::BagOfWords => {
                let mut v = vec![0.0; dimension];
                for word in text
                    .split(|c: char| !c.is_alphanumeric())
                    .filter(|w| !w.is_empty())
                {
                    let h = hash64(&word.to_lowercase());
                    let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
                    v[((h >> 1) % dimension as u64) as usize] += sign;
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                } else {
                    v[0] = 1.0;
                }
                Ok(v)
            }
            EmbedMode::Table(map) => map
                .get(text)
                .cloned()
                .ok_or_else(|| ProviderError::Malformed(format!("no scripted embedding for {text:?}"))),
        }
    }
}

impl EmbedBackend for MockEmbedder {
    fn embed(&self, _model: &str, texts: &[String], dimension: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        texts.iter().map(|t| self.vector(t, dimension)).collect()
    }
}
