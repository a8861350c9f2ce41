//! Vendor wire formats over blocking HTTPS.
//!
//! Credentials come from `OPENAI_API_KEY`, `ANTHROPIC_API_KEY` and
//! `GEMINI_API_KEY`; base URLs may be overridden with `OPENAI_BASE_URL`,
//! `ANTHROPIC_BASE_URL` and `GEMINI_BASE_URL`.

use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, Completion, EmbedBackend, ProviderError, Role, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Vendor {
    OpenAi,
    Anthropic,
    Gemini,
}

impl Vendor {
    pub fn name(self) -> &'static str {
        match self {
            Vendor::OpenAi => "openai",
            Vendor::Anthropic => "anthropic",
            Vendor::Gemini => "gemini",
        }
    }

    fn key_var(self) -> &'static str {
        match self {
            Vendor::OpenAi => "OPENAI_API_KEY",
            Vendor::Anthropic => "ANTHROPIC_API_KEY",
            Vendor::Gemini => "GEMINI_API_KEY",
        }
    }

    fn base_var(self) -> &'static str {
        match self {
            Vendor::OpenAi => "OPENAI_BASE_URL",
            Vendor::Anthropic => "ANTHROPIC_BASE_URL",
            Vendor::Gemini => "GEMINI_BASE_URL",
        }
    }

    fn default_base(self) -> &'static str {
        match self {
            Vendor::OpenAi => "https://api.openai.com",
            Vendor::Anthropic => "https://api.anthropic.com",
            Vendor::Gemini => "https://generativelanguage.googleapis.com",
        }
    }
}

/// Resolves a model id to its vendor and the name the vendor expects.
///
/// An explicit `vendor/` prefix wins; otherwise `claude*` goes to Anthropic,
/// `gemini*` to Gemini and everything else to OpenAI.
pub fn vendor_for_model(model_id: &str) -> (Vendor, &str) {
    if let Some((prefix, rest)) = model_id.split_once('/') {
        match prefix {
            "openai" => return (Vendor::OpenAi, rest),
            "anthropic" => return (Vendor::Anthropic, rest),
            "gemini" | "google" => return (Vendor::Gemini, rest),
            _ => {}
        }
    }
    let lower = model_id.to_ascii_lowercase();
    if lower.starts_with("claude") {
        (Vendor::Anthropic, model_id)
    } else if lower.starts_with("gemini") {
        (Vendor::Gemini, model_id)
    } else {
        (Vendor::OpenAi, model_id)
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    base_url: String,
    api_key: Option<String>,
}

impl Endpoint {
    fn from_env(vendor: Vendor) -> Endpoint {
        Endpoint {
            base_url: std::env::var(vendor.base_var())
                .unwrap_or_else(|_| vendor.default_base().to_string())
                .trim_end_matches('/')
                .to_string(),
            api_key: std::env::var(vendor.key_var()).ok().filter(|k| !k.is_empty()),
        }
    }

    fn key(&self, vendor: Vendor) -> Result<&str, ProviderError> {
        self.api_key
            .as_deref()
            .ok_or_else(|| ProviderError::MissingCredentials {
                provider: vendor.name().into(),
                var: vendor.key_var().into(),
            })
    }
}

/// Routes each request to its vendor by model id.
pub struct HttpRouter {
    http: reqwest::blocking::Client,
    endpoints: [(Vendor, Endpoint); 3],
}

fn http_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(180))
        .build()
        .expect("TLS backend initialises")
}

impl HttpRouter {
    pub fn from_env() -> Self {
        HttpRouter {
            http: http_client(),
            endpoints: [
                (Vendor::OpenAi, Endpoint::from_env(Vendor::OpenAi)),
                (Vendor::Anthropic, Endpoint::from_env(Vendor::Anthropic)),
                (Vendor::Gemini, Endpoint::from_env(Vendor::Gemini)),
            ],
        }
    }

    /// Points one vendor at an explicit base URL and key.
    pub fn with_endpoint(mut self, vendor: Vendor, base_url: &str, api_key: Option<&str>) -> Self {
        for (v, e) in self.endpoints.iter_mut() {
            if *v == vendor {
                *e = Endpoint {
                    base_url: base_url.trim_end_matches('/').to_string(),
                    api_key: api_key.map(str::to_string),
                };
            }
        }
        self
    }

    fn endpoint(&self, vendor: Vendor) -> &Endpoint {
        &self
            .endpoints
            .iter()
            .find(|(v, _)| *v == vendor)
            .expect("all vendors configured")
            .1
    }
}

fn post(
    http: &reqwest::blocking::Client,
    vendor: Vendor,
    url: &str,
    headers: &[(&str, &str)],
    body: &Value,
) -> Result<Value, ProviderError> {
    let mut req = http.post(url).json(body);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let resp = req.send().map_err(|e| ProviderError::Transport {
        provider: vendor.name().into(),
        message: e.to_string(),
    })?;
    let status = resp.status().as_u16();
    let text = resp.text().map_err(|e| ProviderError::Transport {
        provider: vendor.name().into(),
        message: e.to_string(),
    })?;
    if !(200..300).contains(&status) {
        let message = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| {
                v.pointer("/error/message")
                    .and_then(Value::as_str)
                    .map(str::to_string)
            })
            .unwrap_or(text);
        return Err(ProviderError::Http {
            provider: vendor.name().into(),
            status,
            message,
        });
    }
    serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(format!("{}: {e}", vendor.name())))
}

fn token_count(v: &Value, pointer: &str) -> u64 {
    v.pointer(pointer).and_then(Value::as_u64).unwrap_or(0)
}

pub(crate) fn openai_chat_body(model: &str, request: &ChatRequest) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &request.system_text {
        messages.push(json!({ "role": "system", "content": system }));
    }
    for m in &request.messages {
        let role = match m.role {
            Role::User => "user",
            Role::Assistant => "assistant",
        };
        messages.push(json!({ "role": role, "content": m.text }));
    }
    json!({
        "model": model,
        "messages": messages,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_tokens,
    })
}

pub(crate) fn anthropic_chat_body(model: &str, request: &ChatRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            json!({ "role": role, "content": m.text })
        })
        .collect();
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": request.temperature,
        "top_p": request.top_p,
        "max_tokens": request.max_tokens,
    });
    if let Some(system) = &request.system_text {
        body["system"] = json!(system);
    }
    body
}

pub(crate) fn gemini_chat_body(request: &ChatRequest) -> Value {
    let contents: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::User => "user",
                Role::Assistant => "model",
            };
            json!({ "role": role, "parts": [{ "text": m.text }] })
        })
        .collect();
    let mut body = json!({
        "contents": contents,
        "generationConfig": {
            "temperature": request.temperature,
            "topP": request.top_p,
            "maxOutputTokens": request.max_tokens,
        },
    });
    if let Some(system) = &request.system_text {
        body["systemInstruction"] = json!({ "parts": [{ "text": system }] });
    }
    body
}

pub(crate) fn parse_openai_chat(v: &Value) -> Result<(String, Usage), ProviderError> {
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("openai: no choices[0].message.content".into()))?;
    Ok((
        text.to_string(),
        Usage {
            input_tokens: token_count(v, "/usage/prompt_tokens"),
            output_tokens: token_count(v, "/usage/completion_tokens"),
        },
    ))
}

pub(crate) fn parse_anthropic_chat(v: &Value) -> Result<(String, Usage), ProviderError> {
    let blocks = v
        .get("content")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Malformed("anthropic: no content array".into()))?;
    let text: String = blocks
        .iter()
        .filter(|b| b.get("type").and_then(Value::as_str) == Some("text"))
        .filter_map(|b| b.get("text").and_then(Value::as_str))
        .collect();
    Ok((
        text,
        Usage {
            input_tokens: token_count(v, "/usage/input_tokens"),
            output_tokens: token_count(v, "/usage/output_tokens"),
        },
    ))
}

pub(crate) fn parse_gemini_chat(v: &Value) -> Result<(String, Usage), ProviderError> {
    let parts = v
        .pointer("/candidates/0/content/parts")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Malformed("gemini: no candidates[0].content.parts".into()))?;
    let text: String = parts
        .iter()
        .filter(|p| p.get("thought").and_then(Value::as_bool) != Some(true))
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect();
    Ok((
        text,
        Usage {
            input_tokens: token_count(v, "/usageMetadata/promptTokenCount"),
            output_tokens: token_count(v, "/usageMetadata/candidatesTokenCount"),
        },
    ))
}

impl ChatBackend for HttpRouter {
    fn route(&self, model_id: &str) -> String {
        vendor_for_model(model_id).0.name().to_string()
    }

    fn chat(&self, request: &ChatRequest) -> Result<Completion, ProviderError> {
        let (vendor, model) = vendor_for_model(&request.model_id);
        let ep = self.endpoint(vendor);
        let key = ep.key(vendor)?;
        let (text, usage) = match vendor {
            Vendor::OpenAi => {
                let auth = format!("Bearer {key}");
                let v = post(
                    &self.http,
                    vendor,
                    &format!("{}/v1/chat/completions", ep.base_url),
                    &[("authorization", &auth)],
                    &openai_chat_body(model, request),
                )?;
                parse_openai_chat(&v)?
            }
            Vendor::Anthropic => {
                let v = post(
                    &self.http,
                    vendor,
                    &format!("{}/v1/messages", ep.base_url),
                    &[("x-api-key", key), ("anthropic-version", "2023-06-01")],
                    &anthropic_chat_body(model, request),
                )?;
                parse_anthropic_chat(&v)?
            }
            Vendor::Gemini => {
                let v = post(
                    &self.http,
                    vendor,
                    &format!("{}/v1beta/models/{model}:generateContent", ep.base_url),
                    &[("x-goog-api-key", key)],
                    &gemini_chat_body(request),
                )?;
                parse_gemini_chat(&v)?
            }
        };
        Ok(Completion {
            text,
            model_id: request.model_id.clone(),
            usage,
            cached: false,
        })
    }
}

/// Embedding endpoint of one vendor, chosen from the embedding model id.
pub struct HttpEmbedder {
    router: HttpRouter,
}

impl HttpEmbedder {
    pub fn from_env() -> Self {
        HttpEmbedder {
            router: HttpRouter::from_env(),
        }
    }

    pub fn with_router(router: HttpRouter) -> Self {
        HttpEmbedder { router }
    }
}

fn vectors_at(items: &[Value], field: &str) -> Result<Vec<Vec<f64>>, ProviderError> {
    items
        .iter()
        .map(|item| {
            item.get(field)
                .and_then(Value::as_array)
                .ok_or_else(|| ProviderError::Malformed(format!("embedding item lacks {field}")))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| ProviderError::Malformed("non-numeric embedding value".into()))
                })
                .collect()
        })
        .collect()
}

impl EmbedBackend for HttpEmbedder {
    fn embed(&self, model: &str, texts: &[String], dimension: usize) -> Result<Vec<Vec<f64>>, ProviderError> {
        let (vendor, name) = vendor_for_model(model);
        let ep = self.router.endpoint(vendor);
        let key = ep.key(vendor)?;
        match vendor {
            Vendor::Gemini => {
                let requests: Vec<Value> = texts
                    .iter()
                    .map(|t| {
                        json!({
                            "model": format!("models/{name}"),
                            "content": { "parts": [{ "text": t }] },
                            "outputDimensionality": dimension,
                        })
                    })
                    .collect();
                let v = post(
                    &self.router.http,
                    vendor,
                    &format!("{}/v1beta/models/{name}:batchEmbedContents", ep.base_url),
                    &[("x-goog-api-key", key)],
                    &json!({ "requests": requests }),
                )?;
                let items = v
                    .get("embeddings")
                    .and_then(Value::as_array)
                    .ok_or_else(|| ProviderError::Malformed("gemini: no embeddings array".into()))?;
                vectors_at(items, "values")
            }
            Vendor::OpenAi => {
                let auth = format!("Bearer {key}");
                let v = post(
                    &self.router.http,
                    vendor,
                    &format!("{}/v1/embeddings", ep.base_url),
                    &[("authorization", &auth)],
                    &json!({ "model": name, "input": texts, "dimensions": dimension }),
                )?;
                let items = v
                    .get("data")
                    .and_then(Value::as_array)
                    .ok_or_else(|| ProviderError::Malformed("openai: no data array".into()))?;
                vectors_at(items, "embedding")
            }
            Vendor::Anthropic => Err(ProviderError::Precondition(format!(
                "anthropic has no embedding endpoint (model {model})"
            ))),
        }
    }
}
