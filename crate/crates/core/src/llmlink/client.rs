//! Chat transport, content-addressed exchange cache, and replay.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Messages-in, text-out chat completion.
///
/// `salt` distinguishes repeated calls with identical prompts (run index,
/// retry attempt). Transports may ignore it; caches key on it.
pub trait ChatClient: Sync {
    fn model_id(&self) -> &str;
    fn complete(&self, system: &str, user: &str, salt: &str) -> Result<String>;
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: u32,
    pub messages: Vec<ChatMessage>,
}

impl ChatRequest {
    pub fn new(model: &str, system: &str, user: &str) -> Self {
        ChatRequest {
            model: model.to_string(),
            temperature: 0,
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: system.into(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: user.into(),
                },
            ],
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    content: String,
}

/// HTTP client for the generic chat protocol. Vendor APIs are reached
/// through an adapter serving this shape.
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    client: reqwest::blocking::Client,
    retries: u32,
    min_interval: Duration,
    api_key: Option<String>,
    last_request: Mutex<Option<Instant>>,
}

impl HttpChatClient {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport {
                retries: 0,
                message: e.to_string(),
            })?;
        Ok(HttpChatClient {
            endpoint: endpoint.into(),
            model: model.into(),
            client,
            retries: 3,
            min_interval: Duration::ZERO,
            api_key: None,
            last_request: Mutex::new(None),
        })
    }

    /// Transport-level retries (connection failures, non-2xx statuses).
    pub fn retries(mut self, n: u32) -> Self {
        self.retries = n;
        self
    }

    /// Minimum spacing between request starts against this endpoint.
    pub fn rate_limit(mut self, per_second: f64) -> Self {
        self.min_interval = if per_second > 0.0 {
            Duration::from_secs_f64(1.0 / per_second)
        } else {
            Duration::ZERO
        };
        self
    }

    pub fn api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn pace(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last_request.lock().unwrap();
        if let Some(prev) = *last {
            let wait = self.min_interval.saturating_sub(prev.elapsed());
            if !wait.is_zero() {
                std::thread::sleep(wait);
            }
        }
        *last = Some(Instant::now());
    }

    fn send_once(&self, body: &ChatRequest) -> std::result::Result<String, String> {
        self.pace();
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let text = resp.text().map_err(|e| e.to_string())?;
        if !status.is_success() {
            return Err(format!("status {status}: {text}"));
        }
        Ok(text)
    }
}

impl ChatClient for HttpChatClient {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str, _salt: &str) -> Result<String> {
        let body = ChatRequest::new(&self.model, system, user);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(100 << attempt.min(6)));
            }
            match self.send_once(&body) {
                Ok(text) => {
                    let parsed: ChatResponse =
                        serde_json::from_str(&text).map_err(|e| Error::Protocol(e.to_string()))?;
                    return Ok(parsed.content);
                }
                Err(e) => {
                    log::warn!("chat request attempt {} failed: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(Error::Transport {
            retries: self.retries,
            message: last,
        })
    }
}

/// Wraps a closure as a chat client; handy for scripted or offline backends.
pub struct FnClient<F> {
    model: String,
    f: F,
}

impl<F> FnClient<F>
where
    F: Fn(&str, &str, &str) -> Result<String> + Sync,
{
    pub fn new(model: impl Into<String>, f: F) -> Self {
        FnClient {
            model: model.into(),
            f,
        }
    }
}

impl<F> ChatClient for FnClient<F>
where
    F: Fn(&str, &str, &str) -> Result<String> + Sync,
{
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str, salt: &str) -> Result<String> {
        (self.f)(system, user, salt)
    }
}

/// One recorded request/response pair, stored verbatim.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChatExchange {
    pub model_id: String,
    pub salt: String,
    pub system_text: String,
    pub user_text: String,
    pub response_text: String,
    pub latency: f64,
}

pub fn exchange_key(model_id: &str, system: &str, user: &str, salt: &str) -> String {
    let mut h = Sha256::new();
    for part in [model_id, system, user, salt] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Read-through: serve cached exchanges, call and record on miss.
    Record,
    /// Cache only; a miss is an error.
    Replay,
    /// Always call the transport, still recording every exchange.
    Live,
}

/// Content-addressed exchange store: `<dir>/<key[..2]>/<key>.json`.
pub struct CachingClient<'a> {
    inner: Option<&'a dyn ChatClient>,
    model: String,
    dir: PathBuf,
    mode: CacheMode,
}

impl<'a> CachingClient<'a> {
    pub fn new(inner: &'a dyn ChatClient, dir: impl Into<PathBuf>, mode: CacheMode) -> Self {
        CachingClient {
            model: inner.model_id().to_string(),
            inner: Some(inner),
            dir: dir.into(),
            mode,
        }
    }

    /// Replay-only client; needs no transport.
    pub fn replay(model: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        CachingClient {
            inner: None,
            model: model.into(),
            dir: dir.into(),
            mode: CacheMode::Replay,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn load(&self, key: &str) -> Result<Option<ChatExchange>> {
        let path = self.path_for(key);
        match std::fs::read_to_string(&path) {
            Ok(raw) => serde_json::from_str(&raw)
                .map(Some)
                .map_err(|e| Error::from_json(&raw, &e)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl ChatClient for CachingClient<'_> {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, system: &str, user: &str, salt: &str) -> Result<String> {
        let key = exchange_key(&self.model, system, user, salt);
        if self.mode != CacheMode::Live {
            if let Some(hit) = self.load(&key)? {
                return Ok(hit.response_text);
            }
        }
        let inner = match (self.mode, self.inner) {
            (CacheMode::Replay, _) | (_, None) => return Err(Error::CacheMiss { key }),
            (_, Some(inner)) => inner,
        };
        let started = Instant::now();
        let response_text = inner.complete(system, user, salt)?;
        let exchange = ChatExchange {
            model_id: self.model.clone(),
            salt: salt.to_string(),
            system_text: system.to_string(),
            user_text: user.to_string(),
            response_text: response_text.clone(),
            latency: started.elapsed().as_secs_f64(),
        };
        let body = serde_json::to_string_pretty(&exchange).expect("exchange serializes");
        write_atomic(&self.path_for(&key), body.as_bytes())?;
        Ok(response_text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let calls = AtomicUsize::new(0);
        let live = FnClient::new("m", |_s: &str, u: &str, salt: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{u}|{salt}"))
        });
        let rec = CachingClient::new(&live, dir.path(), CacheMode::Record);
        assert_eq!(rec.complete("sys", "hi", "r0").unwrap(), "hi|r0");
        assert_eq!(rec.complete("sys", "hi", "r0").unwrap(), "hi|r0");
        assert_eq!(rec.complete("sys", "hi", "r1").unwrap(), "hi|r1");
        assert_eq!(calls.load(Ordering::SeqCst), 2);

        let replay = CachingClient::replay("m", dir.path());
        assert_eq!(replay.complete("sys", "hi", "r1").unwrap(), "hi|r1");
        assert!(matches!(
            replay.complete("sys", "other", "r0"),
            Err(Error::CacheMiss { .. })
        ));
    }

    #[test]
    fn key_separates_fields() {
        assert_ne!(exchange_key("m", "ab", "c", ""), exchange_key("m", "a", "bc", ""));
        assert_ne!(exchange_key("m", "a", "b", "0"), exchange_key("m", "a", "b", "1"));
    }

    #[test]
    fn request_body_shape() {
        let v = serde_json::to_value(ChatRequest::new("gpt", "S", "U")).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"model": "gpt", "temperature": 0,
                "messages": [{"role": "system", "content": "S"}, {"role": "user", "content": "U"}]})
        );
    }
}
