use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ContentPart, LlmError, LlmRequest, Provenance, Usage};

pub trait Backend: Send + Sync {
    fn call(&self, req: &LlmRequest, key: &str) -> Result<(String, Usage), LlmError>;
    fn provenance(&self) -> Provenance;
    fn name(&self) -> &'static str;
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

fn estimate_usage(req: &LlmRequest, text: &str) -> Usage {
    Usage {
        prompt_tokens: req.messages.iter().map(|m| word_count(&m.text())).sum(),
        completion_tokens: word_count(text),
    }
}

#[derive(Default)]
struct MockState {
    queues: BTreeMap<String, VecDeque<String>>,
    calls: Vec<String>,
    requests: Vec<LlmRequest>,
}

/// Scripted responses, consumed in order per tag. A request tagged
/// `implement:pkg.model` is served from `implement:pkg.model` when that
/// queue exists, otherwise from `implement`.
#[derive(Clone, Default)]
pub struct MockBackend {
    state: Arc<Mutex<MockState>>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(self, tag: impl Into<String>, response: impl Into<String>) -> Self {
        self.state
            .lock()
            .expect("mock state")
            .queues
            .entry(tag.into())
            .or_default()
            .push_back(response.into());
        self
    }

    /// Script file: `{tag: [response, …]}`. Non-string responses are
    /// serialized as compact JSON.
    pub fn from_json(value: &Value) -> Result<Self, LlmError> {
        let obj = value
            .as_object()
            .ok_or_else(|| LlmError::Config("mock script must be an object of tag -> [responses]".into()))?;
        let mut mock = MockBackend::new();
        for (tag, list) in obj {
            let list = list
                .as_array()
                .ok_or_else(|| LlmError::Config(format!("mock script entry `{tag}` must be an array")))?;
            for item in list {
                let text = match item {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                mock = mock.push(tag.clone(), text);
            }
        }
        Ok(mock)
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&value)
    }

    /// Tags of every call served so far, in order.
    pub fn calls(&self) -> Vec<String> {
        self.state.lock().expect("mock state").calls.clone()
    }

    /// Every request served so far, in order.
    pub fn requests(&self) -> Vec<LlmRequest> {
        self.state.lock().expect("mock state").requests.clone()
    }

    pub fn remaining(&self, tag: &str) -> usize {
        self.state.lock().expect("mock state").queues.get(tag).map_or(0, VecDeque::len)
    }
}

impl Backend for MockBackend {
    fn call(&self, req: &LlmRequest, _key: &str) -> Result<(String, Usage), LlmError> {
        let mut st = self.state.lock().expect("mock state");
        st.calls.push(req.tag.clone());
        st.requests.push(req.clone());
        let base = req.tag.split(':').next().unwrap_or(&req.tag).to_string();
        let queue_tag = if st.queues.get(&req.tag).is_some_and(|q| !q.is_empty()) {
            req.tag.clone()
        } else {
            base
        };
        let text = st
            .queues
            .get_mut(&queue_tag)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| LlmError::ScriptExhausted(req.tag.clone()))?;
        Ok((text.clone(), estimate_usage(req, &text)))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Mock
    }

    fn name(&self) -> &'static str {
        "mock"
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    request: Value,
    response: CachedResponse,
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedResponse {
    text: String,
    usage: Usage,
}

/// Directory of `<hex>.json` files holding `{request, response}`.
#[derive(Debug, Clone)]
pub struct CacheStore {
    dir: PathBuf,
}

impl CacheStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CacheStore { dir: dir.into() }
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<(String, Usage)>, LlmError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(LlmError::BackendError(format!("{}: {e}", path.display()))),
        };
        let entry: CacheEntry = serde_json::from_str(&text)
            .map_err(|e| LlmError::BackendError(format!("corrupt cache entry {}: {e}", path.display())))?;
        Ok(Some((entry.response.text, entry.response.usage)))
    }

    /// Atomic write: temp file in the same directory, then rename.
    pub fn put(&self, key: &str, req: &LlmRequest, text: &str, usage: Usage) -> Result<(), LlmError> {
        let io = |e: std::io::Error| LlmError::BackendError(format!("cache write in {}: {e}", self.dir.display()));
        fs::create_dir_all(&self.dir).map_err(io)?;
        let entry = CacheEntry {
            request: req.canonical(),
            response: CachedResponse {
                text: text.to_string(),
                usage,
            },
        };
        let body = serde_json::to_vec_pretty(&entry).expect("cache entry serializes");
        let tmp = self.dir.join(format!(".{key}.{}.tmp", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&body).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, self.path_for(key)).map_err(io)
    }
}

/// Serves only cached responses; a miss is an error, never a live call.
pub struct ReplayBackend {
    store: CacheStore,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend {
            store: CacheStore::new(dir),
        }
    }
}

impl Backend for ReplayBackend {
    fn call(&self, _req: &LlmRequest, key: &str) -> Result<(String, Usage), LlmError> {
        self.store.get(key)?.ok_or_else(|| LlmError::CacheMiss(key.to_string()))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Replay
    }

    fn name(&self) -> &'static str {
        "replay"
    }
}

pub struct NullBackend;

impl Backend for NullBackend {
    fn call(&self, _req: &LlmRequest, _key: &str) -> Result<(String, Usage), LlmError> {
        Err(LlmError::Unavailable)
    }

    fn provenance(&self) -> Provenance {
        Provenance::Live
    }

    fn name(&self) -> &'static str {
        "null"
    }
}

/// Chat-completion JSON over HTTPS.
pub struct LiveBackend {
    endpoint: String,
    api_key: Option<String>,
}

impl LiveBackend {
    pub fn new(endpoint: String, api_key: Option<String>) -> Self {
        LiveBackend { endpoint, api_key }
    }

    fn body(req: &LlmRequest) -> Result<Value, LlmError> {
        let mut messages = Vec::new();
        for m in &req.messages {
            let mut parts = Vec::new();
            for p in &m.content {
                match p {
                    ContentPart::Text { text } => parts.push(json!({"type": "text", "text": text})),
                    ContentPart::Image { path, .. } => {
                        let bytes = fs::read(path).map_err(|_| LlmError::MissingImage(path.clone()))?;
                        let data = base64::engine::general_purpose::STANDARD.encode(bytes);
                        parts.push(json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:image/png;base64,{data}")}
                        }));
                    }
                }
            }
            messages.push(json!({"role": m.role, "content": parts}));
        }
        let mut body = json!({
            "model": req.model_id,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        if req.schema.is_some() {
            body["response_format"] = json!({"type": "json_object"});
        }
        Ok(body)
    }
}

impl Backend for LiveBackend {
    fn call(&self, req: &LlmRequest, _key: &str) -> Result<(String, Usage), LlmError> {
        let body = Self::body(req)?;
        let mut call = ureq::post(&self.endpoint).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            call = call.header("Authorization", format!("Bearer {k}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| LlmError::BackendError(e.to_string()))?;
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::BackendError(e.to_string()))?;
        let text = value["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| LlmError::BackendError("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = Usage {
            prompt_tokens: value["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: value["usage"]["completion_tokens"].as_u64().unwrap_or(0),
        };
        Ok((text, usage))
    }

    fn provenance(&self) -> Provenance {
        Provenance::Live
    }

    fn name(&self) -> &'static str {
        "live"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_queue_fallback() {
        let mock = MockBackend::new().push("implement", "generic").push("implement:a.model", "specific");
        let req = |t: &str| LlmRequest::new(t, "m").user("x");
        assert_eq!(mock.call(&req("implement:a.model"), "").unwrap().0, "specific");
        assert_eq!(mock.call(&req("implement:a.model"), "").unwrap().0, "generic");
        assert!(mock.call(&req("implement:a.config"), "").is_err());
        assert_eq!(mock.calls().len(), 3);
    }

    #[test]
    fn script_values_become_text() {
        let mock = MockBackend::from_json(&json!({"judge": [{"a": 1}, "plain"]})).unwrap();
        let req = LlmRequest::new("judge", "m").user("x");
        assert_eq!(mock.call(&req, "").unwrap().0, "{\"a\":1}");
        assert_eq!(mock.call(&req, "").unwrap().0, "plain");
    }

    #[test]
    fn live_body_shape() {
        let req = LlmRequest::new("t", "gpt").system("s").user("u");
        let body = LiveBackend::body(&req).unwrap();
        assert_eq!(body["model"], "gpt");
        assert_eq!(body["messages"][1]["content"][0]["text"], "u");
    }
}
