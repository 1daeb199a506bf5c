//! Chat-completion access for every agent, with content-addressed replay
//! and scripted mocks.
//!
//! Requests hash to a stable key over a canonical serialization (sorted
//! keys, compact separators, image bytes replaced by their SHA-256). A
//! [`Gateway`] can record each answered request as `<key>.json` so later
//! runs replay byte-for-byte without a model.

mod backends;
pub mod schema;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use backends::{Backend, CacheStore, LiveBackend, MockBackend, NullBackend, ReplayBackend};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("replay cache miss for {0}")]
    CacheMiss(String),
    #[error("backend error: {0}")]
    BackendError(String),
    #[error("mock script exhausted for tag `{0}`")]
    ScriptExhausted(String),
    #[error("structured output for `{tag}` did not match the schema: {reason}")]
    SchemaParseFailure { tag: String, reason: String },
    #[error("missing image {0}")]
    MissingImage(String),
    #[error("no language model configured")]
    Unavailable,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContentPart {
    Text { text: String },
    Image { path: String, sha256: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: MessageRole,
    pub content: Vec<ContentPart>,
}

impl Message {
    pub fn text(&self) -> String {
        self.content
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub messages: Vec<Message>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub schema: Option<Value>,
    pub tag: String,
}

impl LlmRequest {
    pub fn new(tag: impl Into<String>, model_id: impl Into<String>) -> Self {
        LlmRequest {
            messages: Vec::new(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: 4096,
            schema: None,
            tag: tag.into(),
        }
    }

    pub fn system(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: MessageRole::System,
            content: vec![ContentPart::Text { text: text.into() }],
        });
        self
    }

    pub fn user(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: MessageRole::User,
            content: vec![ContentPart::Text { text: text.into() }],
        });
        self
    }

    pub fn assistant(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: MessageRole::Assistant,
            content: vec![ContentPart::Text { text: text.into() }],
        });
        self
    }

    /// A user turn carrying images; each image is hashed now.
    pub fn user_with_images<P: AsRef<Path>>(mut self, text: impl Into<String>, images: &[P]) -> Result<Self, LlmError> {
        let mut content = vec![ContentPart::Text { text: text.into() }];
        for p in images {
            let p = p.as_ref();
            let bytes = fs::read(p).map_err(|_| LlmError::MissingImage(p.display().to_string()))?;
            content.push(ContentPart::Image {
                path: p.display().to_string(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        self.messages.push(Message {
            role: MessageRole::User,
            content,
        });
        Ok(self)
    }

    pub fn with_schema(mut self, schema: Value) -> Self {
        self.schema = Some(schema);
        self
    }

    pub fn with_temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn images(&self) -> impl Iterator<Item = (&str, &str)> {
        self.messages.iter().flat_map(|m| &m.content).filter_map(|p| match p {
            ContentPart::Image { path, sha256 } => Some((path.as_str(), sha256.as_str())),
            ContentPart::Text { .. } => None,
        })
    }

    fn check(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::InvalidRequest("negative temperature".into()));
        }
        Ok(())
    }

    /// Canonical form hashed by [`cache_key`]. Image paths are left out so
    /// the key depends only on image bytes.
    pub fn canonical(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let content: Vec<Value> = m
                    .content
                    .iter()
                    .map(|p| match p {
                        ContentPart::Text { text } => json!({"type": "text", "text": text}),
                        ContentPart::Image { sha256, .. } => json!({"type": "image", "sha256": sha256}),
                    })
                    .collect();
                json!({"role": m.role, "content": content})
            })
            .collect();
        json!({
            "messages": messages,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "schema": self.schema,
            "tag": self.tag,
        })
    }
}

/// Hex SHA-256 of the compact, key-sorted canonical JSON.
pub fn cache_key(req: &LlmRequest) -> String {
    let text = serde_json::to_string(&req.canonical()).expect("canonical json serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Live,
    Replay,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmResponse {
    pub text: String,
    pub structured: Option<Value>,
    pub usage: Usage,
    pub provenance: Provenance,
}

/// `llm.json`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script_path: Option<PathBuf>,
    #[serde(default)]
    pub model_ids: BTreeMap<String, String>,
}

pub struct Gateway {
    backend: Box<dyn Backend>,
    recorder: Option<CacheStore>,
    model_ids: BTreeMap<String, String>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.name())
            .field("recording", &self.recorder.is_some())
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Gateway {
            backend,
            recorder: None,
            model_ids: BTreeMap::new(),
        }
    }

    pub fn mock(backend: MockBackend) -> Self {
        Gateway::new(Box::new(backend))
    }

    pub fn replay(dir: impl Into<PathBuf>) -> Self {
        Gateway::new(Box::new(ReplayBackend::new(dir)))
    }

    /// A gateway with no model behind it; optional agent tiers skip.
    pub fn null() -> Self {
        Gateway::new(Box::new(NullBackend))
    }

    /// Also write every answered request into `dir`.
    pub fn recording(mut self, dir: impl Into<PathBuf>) -> Self {
        self.recorder = Some(CacheStore::new(dir));
        self
    }

    pub fn with_model_ids(mut self, ids: BTreeMap<String, String>) -> Self {
        self.model_ids = ids;
        self
    }

    pub fn from_config(cfg: &GatewayConfig, base: &Path) -> Result<Self, LlmError> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let gw = match cfg.mode.as_str() {
            "mock" => {
                let script = cfg
                    .script_path
                    .as_deref()
                    .ok_or_else(|| LlmError::Config("mock mode needs script_path".into()))?;
                Gateway::mock(MockBackend::from_file(&resolve(script))?)
            }
            "replay" => {
                let dir = cfg
                    .cache_dir
                    .as_deref()
                    .ok_or_else(|| LlmError::Config("replay mode needs cache_dir".into()))?;
                return Ok(Gateway::replay(resolve(dir)).with_model_ids(cfg.model_ids.clone()));
            }
            "live" => {
                let endpoint = cfg
                    .endpoint
                    .clone()
                    .ok_or_else(|| LlmError::Config("live mode needs endpoint".into()))?;
                let key = match &cfg.api_key_env {
                    Some(var) => Some(std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?),
                    None => None,
                };
                Gateway::new(Box::new(LiveBackend::new(endpoint, key)))
            }
            "null" => Gateway::null(),
            other => return Err(LlmError::Config(format!("unknown mode `{other}`"))),
        };
        let gw = match &cfg.cache_dir {
            Some(dir) => gw.recording(resolve(dir)),
            None => gw,
        };
        Ok(gw.with_model_ids(cfg.model_ids.clone()))
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let cfg: GatewayConfig =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Gateway::from_config(&cfg, path.parent().unwrap_or(Path::new(".")))
    }

    /// Model id configured for an agent, falling back to `default`, then to
    /// the agent name itself.
    pub fn model_for(&self, agent: &str) -> String {
        self.model_ids
            .get(agent)
            .or_else(|| self.model_ids.get("default"))
            .cloned()
            .unwrap_or_else(|| agent.to_string())
    }

    pub fn is_available(&self) -> bool {
        self.backend.name() != "null"
    }

    pub fn complete(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        req.check()?;
        let key = cache_key(req);
        let (text, usage) = self.backend.call(req, &key)?;
        if let Some(store) = &self.recorder {
            store.put(&key, req, &text, usage)?;
        }
        let structured = match &req.schema {
            None => None,
            Some(s) => {
                let fail = |reason: String| LlmError::SchemaParseFailure {
                    tag: req.tag.clone(),
                    reason,
                };
                let value = schema::extract_json(&text).ok_or_else(|| fail("no JSON value in reply".into()))?;
                schema::check(s, &value).map_err(fail)?;
                Some(value)
            }
        };
        Ok(LlmResponse {
            text,
            structured,
            usage,
            provenance: self.backend.provenance(),
        })
    }

    /// Like [`complete`](Self::complete) but every image must still be
    /// readable and unchanged.
    pub fn complete_vision(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        for (path, sha) in req.images() {
            let bytes = fs::read(path).map_err(|_| LlmError::MissingImage(path.to_string()))?;
            if hex::encode(Sha256::digest(&bytes)) != sha {
                return Err(LlmError::InvalidRequest(format!("image {path} changed after hashing")));
            }
        }
        self.complete(req)
    }

    /// Structured completion with one corrective reprompt.
    pub fn complete_structured(&self, req: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let call = |r: &LlmRequest| if r.images().next().is_some() { self.complete_vision(r) } else { self.complete(r) };
        match call(req) {
            Err(LlmError::SchemaParseFailure { reason, .. }) => {
                let retry = req.clone().user(format!(
                    "The previous reply was rejected ({reason}). Reply with a single JSON value matching the schema and nothing else."
                ));
                call(&retry)
            }
            other => other,
        }
    }
}
