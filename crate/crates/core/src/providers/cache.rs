use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, Completion};
use crate::error::{Error, Result};

pub const CACHE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Chat,
    Embed,
}

/// One line of the append-only cache file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheRecord {
    pub schema_version: u32,
    pub digest: CacheKey,
    pub kind: RecordKind,
    pub request: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<Completion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

#[derive(Default)]
struct State {
    chat: HashMap<CacheKey, Completion>,
    embed: HashMap<CacheKey, Vec<f64>>,
    writer: Option<BufWriter<File>>,
}

/// Request/response store backed by a JSONL file; entries are never rewritten.
pub struct ResponseCache {
    path: Option<PathBuf>,
    state: Mutex<State>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            state: Mutex::new(State::default()),
        }
    }

    /// Loads every complete record in `path` and appends new ones to it.
    /// A torn final line (interrupted write) is skipped.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut state = State::default();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    Err(e) => {
                        tracing::warn!(path = %path.display(), line = n + 1, "skipping unreadable cache line: {e}");
                        continue;
                    }
                };
                match (record.kind, record.completion, record.embedding) {
                    (RecordKind::Chat, Some(c), _) => {
                        state.chat.entry(record.digest).or_insert(c);
                    }
                    (RecordKind::Embed, _, Some(v)) => {
                        state.embed.entry(record.digest).or_insert(v);
                    }
                    _ => tracing::warn!(line = n + 1, "cache record without payload"),
                }
            }
        }
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        state.writer = Some(BufWriter::new(file));
        Ok(ResponseCache {
            path: Some(path),
            state: Mutex::new(state),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        let s = self.state.lock().expect("cache poisoned");
        s.chat.len() + s.embed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_chat(&self, key: &CacheKey) -> Option<Completion> {
        self.state.lock().expect("cache poisoned").chat.get(key).cloned()
    }

    pub fn get_embedding(&self, key: &CacheKey) -> Option<Vec<f64>> {
        self.state.lock().expect("cache poisoned").embed.get(key).cloned()
    }

    fn append(&self, state: &mut State, record: &CacheRecord) -> Result<()> {
        if let Some(w) = state.writer.as_mut() {
            let path = self.path.clone().unwrap_or_default();
            let line = serde_json::to_string(record)?;
            writeln!(w, "{line}").map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    /// Stores a completion unless the key is already present.
    pub fn insert_chat(&self, key: &CacheKey, request: &ChatRequest, completion: &Completion) -> Result<()> {
        let mut state = self.state.lock().expect("cache poisoned");
        if state.chat.contains_key(key) {
            return Ok(());
        }
        let mut stored = completion.clone();
        stored.cached = false;
        let record = CacheRecord {
            schema_version: CACHE_SCHEMA_VERSION,
            digest: key.clone(),
            kind: RecordKind::Chat,
            request: serde_json::to_value(request)?,
            completion: Some(stored.clone()),
            embedding: None,
        };
        self.append(&mut state, &record)?;
        state.chat.insert(key.clone(), stored);
        Ok(())
    }

    pub fn insert_embedding(&self, key: &CacheKey, model: &str, text: &str, vector: &[f64]) -> Result<()> {
        let mut state = self.state.lock().expect("cache poisoned");
        if state.embed.contains_key(key) {
            return Ok(());
        }
        let record = CacheRecord {
            schema_version: CACHE_SCHEMA_VERSION,
            digest: key.clone(),
            kind: RecordKind::Embed,
            request: serde_json::json!({ "model": model, "text": text }),
            completion: None,
            embedding: Some(vector.to_vec()),
        };
        self.append(&mut state, &record)?;
        state.embed.insert(key.clone(), vector.to_vec());
        Ok(())
    }
}
