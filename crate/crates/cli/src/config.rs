use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use turnlink::clusterlab::ClusterConfig;
use turnlink::llmlink::CacheMode;

/// Optional TOML run configuration. Every field has a default, so an empty
/// file is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub window: usize,
    pub embedding: EmbeddingSettings,
    pub llm: LlmSettings,
    pub cluster: ClusterConfig,
    pub render: RenderSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window: 10,
            embedding: EmbeddingSettings::default(),
            llm: LlmSettings::default(),
            cluster: ClusterConfig::default(),
            render: RenderSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub threshold: f64,
    pub normalize: bool,
    pub url: Option<String>,
    pub file: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub retries: u32,
    pub timeout_secs: u64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            threshold: 0.5,
            normalize: true,
            url: None,
            file: None,
            cache: None,
            batch_size: 256,
            max_in_flight: 4,
            retries: 2,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Replay unless told otherwise: no network traffic by default.
    pub mode: CacheMode,
    pub cache_dir: Option<PathBuf>,
    pub runs: usize,
    pub min_count: usize,
    pub retry_budget: u32,
    pub max_in_flight: usize,
    pub templates: Option<PathBuf>,
    pub method_id: Option<String>,
    pub timeout_secs: u64,
    pub transport_retries: u32,
    pub rate_limit: Option<f64>,
    /// Environment variable holding the API key, if the endpoint needs one.
    pub api_key_env: String,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            endpoint: None,
            model: None,
            mode: CacheMode::Replay,
            cache_dir: None,
            runs: 3,
            min_count: 2,
            retry_budget: 2,
            max_in_flight: 4,
            templates: None,
            method_id: None,
            timeout_secs: 120,
            transport_retries: 3,
            rate_limit: None,
            api_key_env: "TURNLINK_API_KEY".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderSettings {
    pub facilitator_accent: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            facilitator_accent: true,
        }
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let raw = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&raw).map_err(|e| crate::UsageError(format!("{}: {e}", path.display())).into())
}
