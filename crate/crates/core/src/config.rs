//! Experiment configuration: one TOML document with a table per stage.
//!
//! ```toml
//! [stage1]
//! k = 10
//! endpoint = { base_url = "http://vlm:8000/v1", model_name = "GLM-4.5V", api_key_env = "VLM_KEY" }
//!
//! [stage3]
//! k = [2, 6, 11, 12]
//! t = [6, 8, 10]
//! models = [
//!   { base_url = "http://vlm:8000/v1", model_name = "GLM-4.5V" },
//!   { base_url = "http://vlm2:8000/v1", model_name = "Qwen3-VL-235B-A22B-Thinking" },
//! ]
//!
//! [prompts]
//! dir = "prompts"   # relative to the config file
//! ```
//!
//! Every table and key is optional; omitted values take the defaults below.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Decoding, EndpointConfig};
use crate::pipeline::prompts::{PromptError, StagePrompts};
use crate::report::SamplingConfig;
use crate::video::DecoderConfig;

const DEFAULT_BASE_URL: &str = "http://localhost:8000/v1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage1Config {
    #[serde(default = "default_stage1_k")]
    pub k: u64,
    #[serde(default = "default_stage1_endpoint")]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage2Config {
    #[serde(default = "default_stage2_endpoint")]
    pub endpoint: EndpointConfig,
    #[serde(default)]
    pub decoding: Decoding,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage3Config {
    /// One candidate-generating configuration per model and grid point.
    #[serde(default = "default_stage3_models")]
    pub models: Vec<EndpointConfig>,
    #[serde(default = "default_stage3_k")]
    pub k: Vec<u64>,
    #[serde(default = "default_stage3_t")]
    pub t: Vec<u64>,
    /// Stack gaze heatmaps under the frames sent to Stage 3 as well.
    #[serde(default)]
    pub gaze: bool,
    #[serde(default = "generative_decoding")]
    pub decoding: Decoding,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_ensemble_endpoint")]
    pub endpoint: EndpointConfig,
    #[serde(default = "generative_decoding")]
    pub decoding: Decoding,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    /// Template directory; built-in prompts are used when unset.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub stage1: Stage1Config,
    #[serde(default)]
    pub stage2: Stage2Config,
    #[serde(default)]
    pub stage3: Stage3Config,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub prompts: PromptsConfig,
    #[serde(default)]
    pub decoder: DecoderConfig,
}

fn default_stage1_k() -> u64 {
    10
}

fn default_timeout_secs() -> u64 {
    120
}

fn default_stage1_endpoint() -> EndpointConfig {
    EndpointConfig::new(DEFAULT_BASE_URL, "GLM-4.5V")
}

fn default_stage2_endpoint() -> EndpointConfig {
    EndpointConfig::new(DEFAULT_BASE_URL, "GPT-OSS-120B")
}

fn default_stage3_models() -> Vec<EndpointConfig> {
    vec![
        EndpointConfig::new(DEFAULT_BASE_URL, "GLM-4.5V"),
        EndpointConfig::new(DEFAULT_BASE_URL, "Qwen3-VL-235B-A22B-Thinking"),
    ]
}

fn default_stage3_k() -> Vec<u64> {
    vec![2, 6, 11, 12]
}

fn default_stage3_t() -> Vec<u64> {
    vec![6, 8, 10]
}

fn default_ensemble_endpoint() -> EndpointConfig {
    EndpointConfig::new(DEFAULT_BASE_URL, "Qwen3-Next-80B-A3B-Instruct")
}

fn generative_decoding() -> Decoding {
    Decoding {
        temperature: 0.2,
        max_output_tokens: 2048,
    }
}

impl Default for Stage1Config {
    fn default() -> Self {
        Self {
            k: default_stage1_k(),
            endpoint: default_stage1_endpoint(),
            decoding: Decoding::default(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            endpoint: default_stage2_endpoint(),
            decoding: Decoding::default(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl Default for Stage3Config {
    fn default() -> Self {
        Self {
            models: default_stage3_models(),
            k: default_stage3_k(),
            t: default_stage3_t(),
            gaze: false,
            decoding: generative_decoding(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            endpoint: default_ensemble_endpoint(),
            decoding: generative_decoding(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            stage3: Stage3Config::default(),
            ensemble: EnsembleConfig::default(),
            prompts: PromptsConfig::default(),
            decoder: DecoderConfig::default(),
        }
    }
}

/// One Stage 3 configuration: a model and a frame-set sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub endpoint: EndpointConfig,
    pub sampling: SamplingConfig,
}

impl GridPoint {
    /// `(model,k=K,t=T)`, recorded as the provenance of the reports it produces.
    pub fn provenance(&self) -> String {
        format!(
            "({},k={},t={})",
            self.endpoint.model_name, self.sampling.k, self.sampling.t
        )
    }
}

impl Stage3Config {
    /// Grid points, model-major, then `k`, then `t`.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for model in &self.models {
            for &k in &self.k {
                for &t in &self.t {
                    out.push(GridPoint {
                        endpoint: model.clone(),
                        sampling: SamplingConfig { k, t },
                    });
                }
            }
        }
        out
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file. A relative prompt directory is
    /// resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        if let Some(dir) = cfg.prompts.dir.as_mut() {
            if dir.is_relative() {
                *dir = path.parent().unwrap_or(Path::new(".")).join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.stage1.k == 0 {
            return invalid("stage1.k must be at least 1");
        }
        if self.stage3.k.contains(&0) {
            return invalid("stage3.k values must be at least 1");
        }
        if self.stage3.grid().is_empty() {
            return invalid("stage3 grid is empty (models, k and t must all be non-empty)");
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.stage3.grid().iter().map(GridPoint::provenance).find(|p| !seen.insert(p.clone())) {
            return Err(ConfigError::Invalid(format!("stage3 grid point {dup} appears twice")));
        }
        let endpoints = std::iter::once(&self.stage1.endpoint)
            .chain(std::iter::once(&self.stage2.endpoint))
            .chain(&self.stage3.models)
            .chain(std::iter::once(&self.ensemble.endpoint));
        for ep in endpoints {
            if ep.retry.max_attempts == 0 {
                return Err(ConfigError::Invalid(format!(
                    "endpoint {} has retry.max_attempts = 0",
                    ep.model_name
                )));
            }
        }
        Ok(())
    }

    /// Prompt templates: loaded from `prompts.dir` when set, built-in otherwise.
    pub fn load_prompts(&self) -> Result<StagePrompts, ConfigError> {
        match &self.prompts.dir {
            Some(dir) => Ok(StagePrompts::load_dir(dir)?),
            None => Ok(StagePrompts::default()),
        }
    }
}
