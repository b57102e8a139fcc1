use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EmbeddingVector;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Largest number of texts sent in one `/embed` request.
pub const MAX_BATCH: usize = 256;

/// Hex SHA-256 of the UTF-8 text; the key of file-backed stores.
pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Source of raw sentence embeddings.
pub trait EmbeddingProvider: Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dimension: usize,
    vectors: Vec<Vec<f64>>,
}

/// Client for the `/embed` + `/health` sidecar protocol.
pub struct HttpEmbeddingProvider {
    base_url: String,
    client: reqwest::blocking::Client,
    retries: u32,
}

impl HttpEmbeddingProvider {
    pub fn new(base_url: impl Into<String>, retries: u32, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Transport {
                retries: 0,
                message: e.to_string(),
            })?;
        Ok(HttpEmbeddingProvider {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client,
            retries,
        })
    }

    pub fn health(&self) -> Result<serde_json::Value> {
        let resp = self
            .client
            .get(format!("{}/health", self.base_url))
            .send()
            .map_err(|e| Error::Transport {
                retries: 0,
                message: e.to_string(),
            })?;
        if !resp.status().is_success() {
            return Err(Error::Transport {
                retries: 0,
                message: format!("health check returned {}", resp.status()),
            });
        }
        resp.json().map_err(|e| Error::Protocol(e.to_string()))
    }

    fn post_once(&self, texts: &[String]) -> std::result::Result<String, String> {
        let resp = self
            .client
            .post(format!("{}/embed", self.base_url))
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.text().map_err(|e| e.to_string())?;
        if status.is_success() {
            Ok(body)
        } else {
            Err(format!("status {status}: {body}"))
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            match self.post_once(texts) {
                Ok(body) => {
                    let parsed: EmbedResponse =
                        serde_json::from_str(&body).map_err(|e| Error::Protocol(e.to_string()))?;
                    if let Some(bad) = parsed.vectors.iter().find(|v| v.len() != parsed.dimension) {
                        return Err(Error::Protocol(format!(
                            "vector of length {} in response advertising dimension {}",
                            bad.len(),
                            parsed.dimension
                        )));
                    }
                    return Ok(parsed.vectors);
                }
                Err(e) => {
                    log::warn!("embed request attempt {} failed: {e}", attempt + 1);
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

/// Precomputed embeddings stored as a JSON map from [`text_hash`] to vector.
pub struct FileEmbeddingProvider {
    vectors: BTreeMap<String, Vec<f64>>,
}

impl FileEmbeddingProvider {
    pub fn from_map(vectors: BTreeMap<String, Vec<f64>>) -> Self {
        FileEmbeddingProvider { vectors }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let vectors = serde_json::from_str(&raw).map_err(|e| Error::from_json(&raw, &e))?;
        Ok(FileEmbeddingProvider { vectors })
    }
}

impl EmbeddingProvider for FileEmbeddingProvider {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| {
                let h = text_hash(t);
                self.vectors
                    .get(&h)
                    .cloned()
                    .ok_or_else(|| Error::Lookup(format!("no stored embedding for text hash {h}")))
            })
            .collect()
    }
}

/// Content-addressed embedding cache, optionally persisted in the same
/// format [`FileEmbeddingProvider`] reads.
#[derive(Default)]
pub struct EmbeddingCache {
    entries: Mutex<HashMap<String, Vec<f64>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let entries = if path.exists() {
            FileEmbeddingProvider::load(&path)?.vectors.into_iter().collect()
        } else {
            HashMap::new()
        };
        Ok(EmbeddingCache {
            entries: Mutex::new(entries),
            path: Some(path),
        })
    }

    fn get(&self, hash: &str) -> Option<Vec<f64>> {
        self.entries.lock().unwrap().get(hash).cloned()
    }

    fn put(&self, hash: String, v: Vec<f64>) {
        self.entries.lock().unwrap().insert(hash, v);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache atomically (temp file + rename).
    pub fn flush(&self) -> Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let sorted: BTreeMap<_, _> = self.entries.lock().unwrap().clone().into_iter().collect();
        let body = serde_json::to_string(&sorted).expect("cache serializes");
        crate::fsutil::write_atomic(path, body.as_bytes())
    }
}

/// Batched, cached, order-preserving embedding fetches.
pub struct EmbeddingFetcher<'a> {
    provider: &'a dyn EmbeddingProvider,
    cache: &'a EmbeddingCache,
    batch_size: usize,
    max_in_flight: usize,
}

impl<'a> EmbeddingFetcher<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider, cache: &'a EmbeddingCache) -> Self {
        EmbeddingFetcher {
            provider,
            cache,
            batch_size: MAX_BATCH,
            max_in_flight: 4,
        }
    }

    pub fn batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.clamp(1, MAX_BATCH);
        self
    }

    pub fn max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn fetch<T: Real>(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<T>>> {
        let hashes: Vec<String> = texts.iter().map(|t| text_hash(t)).collect();
        let mut missing: Vec<(String, String)> = Vec::new();
        for (text, h) in texts.iter().zip(&hashes) {
            if self.cache.get(h).is_none() && !missing.iter().any(|(mh, _)| mh == h) {
                missing.push((h.clone(), text.clone()));
            }
        }

        let batches: Vec<&[(String, String)]> = missing.chunks(self.batch_size).collect();
        for group in batches.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<Vec<f64>>>> = std::thread::scope(|s| {
                let handles: Vec<_> = group
                    .iter()
                    .map(|batch| {
                        let batch_texts: Vec<String> = batch.iter().map(|(_, t)| t.clone()).collect();
                        s.spawn(move || self.provider.embed(&batch_texts))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("embed worker panicked")).collect()
            });
            for (batch, result) in group.iter().zip(results) {
                let vectors = result?;
                if vectors.len() != batch.len() {
                    return Err(Error::Protocol(format!(
                        "provider returned {} vectors for {} texts",
                        vectors.len(),
                        batch.len()
                    )));
                }
                for ((h, _), v) in batch.iter().zip(vectors) {
                    self.cache.put(h.clone(), v);
                }
            }
        }

        let mut out = Vec::with_capacity(texts.len());
        let mut dimension = None;
        for h in &hashes {
            let raw = self.cache.get(h).expect("fetched above");
            match dimension {
                None => dimension = Some(raw.len()),
                Some(d) if d != raw.len() => {
                    return Err(Error::Protocol(format!(
                        "dimension drift: {} vs {d}",
                        raw.len()
                    )))
                }
                _ => {}
            }
            out.push(EmbeddingVector::from_f64s(&raw)?);
        }
        Ok(out)
    }
}

/// Fetches one vector per text through a fresh in-memory cache.
pub fn fetch_embeddings<T: Real>(
    texts: &[String],
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector<T>>> {
    let cache = EmbeddingCache::in_memory();
    EmbeddingFetcher::new(provider, &cache).fetch(texts)
}
