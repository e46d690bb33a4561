//! Run configuration: a single JSON file naming the corpus, the
//! evaluated models, the judge, and every pipeline knob.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use coda_core::genclient::{ChatBackend, GenerationConfig, HttpBackend, HttpBackendConfig};
use coda_core::judge::JudgeOptions;
use coda_core::metrics::{CompositeWeights, TokenizerMode};
use serde::{Deserialize, Serialize};

use crate::errors::CliError;
use crate::mock::{MockGenBackend, MockJudgeBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Directory of raw script files.
    pub corpus_dir: PathBuf,
    /// Run directories are created under this path.
    pub out_dir: PathBuf,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_samples_per_film")]
    pub samples_per_film: u32,
    /// Character-mass fraction of the split point.
    #[serde(default = "default_split_ratio")]
    pub split_ratio: f64,
    /// Minimum characters per half after cleaning and splitting.
    #[serde(default = "default_min_half_chars")]
    pub min_half_chars: usize,
    /// Encoding label for the raw files (WHATWG names such as "gbk");
    /// absent means strict UTF-8.
    #[serde(default)]
    pub encoding: Option<String>,
    #[serde(default)]
    pub tokenizer: TokenizerMode,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub weights: CompositeWeights,
    /// Extra meta-discourse phrases, one per line, merged with the
    /// built-in list.
    #[serde(default)]
    pub blacklist_path: Option<PathBuf>,
    pub models: Vec<ModelEntry>,
    pub judge: JudgeEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    pub backend: BackendSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeEntry {
    pub id: String,
    pub backend: BackendSpec,
    #[serde(default)]
    pub options: JudgeOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendSpec {
    /// Offline deterministic backend; output depends only on the seed
    /// and the request content.
    Mock {
        #[serde(default)]
        seed: u64,
    },
    /// OpenAI-style chat-completions endpoint. The API key is read from
    /// the named environment variable at request time.
    Http {
        endpoint: String,
        model: String,
        api_key_env: String,
        #[serde(default = "default_timeout_secs")]
        timeout_secs: u64,
        #[serde(default)]
        timeout_retries: u32,
    },
}

fn default_run_id() -> String {
    "run-001".to_string()
}

fn default_samples_per_film() -> u32 {
    1
}

fn default_split_ratio() -> f64 {
    0.5
}

fn default_min_half_chars() -> usize {
    1000
}

fn default_timeout_secs() -> u64 {
    120
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&raw)
            .map_err(|e| CliError::config(format!("bad config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return Err(CliError::config(format!(
                "run_id `{}` must be non-empty and use only letters, digits, `-`, `_`, `.`",
                self.run_id
            )));
        }
        if self.models.is_empty() {
            return Err(CliError::config("config lists no models"));
        }
        let mut seen = BTreeSet::new();
        for entry in &self.models {
            if entry.id.is_empty() {
                return Err(CliError::config("a model entry has an empty id"));
            }
            if !seen.insert(entry.id.as_str()) {
                return Err(CliError::config(format!(
                    "duplicate model id `{}`",
                    entry.id
                )));
            }
        }
        if self.samples_per_film == 0 {
            return Err(CliError::config("samples_per_film must be at least 1"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(CliError::config(format!(
                "split_ratio {} must lie strictly between 0 and 1",
                self.split_ratio
            )));
        }
        self.generation
            .validate()
            .map_err(|e| CliError::config(format!("generation config: {e}")))?;
        self.weights
            .validate()
            .map_err(|e| CliError::config(format!("composite weights: {e}")))?;
        Ok(())
    }

    pub fn model(&self, id: &str) -> Result<&ModelEntry, CliError> {
        self.models.iter().find(|m| m.id == id).ok_or_else(|| {
            let known: Vec<&str> = self.models.iter().map(|m| m.id.as_str()).collect();
            CliError::config(format!(
                "model `{id}` is not in the config (known: {})",
                known.join(", ")
            ))
        })
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(&self.run_id)
    }

    /// The manifest stores this instead of the raw config: the output
    /// location is blanked so a run directory can be relocated or
    /// mirrored without tripping the drift check.
    pub fn snapshot(&self) -> RunConfig {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c
    }
}

pub fn build_gen_backend(entry: &ModelEntry) -> Result<Box<dyn ChatBackend>, CliError> {
    match &entry.backend {
        BackendSpec::Mock { seed } => Ok(Box::new(MockGenBackend::new(*seed))),
        http @ BackendSpec::Http { .. } => build_http(&entry.id, http),
    }
}

pub fn build_judge_backend(entry: &JudgeEntry) -> Result<Box<dyn ChatBackend>, CliError> {
    match &entry.backend {
        BackendSpec::Mock { seed } => Ok(Box::new(MockJudgeBackend::new(*seed))),
        http @ BackendSpec::Http { .. } => build_http(&entry.id, http),
    }
}

fn build_http(name: &str, spec: &BackendSpec) -> Result<Box<dyn ChatBackend>, CliError> {
    let BackendSpec::Http {
        endpoint,
        model,
        api_key_env,
        timeout_secs,
        timeout_retries,
    } = spec
    else {
        unreachable!("caller matched the http variant");
    };
    let backend = HttpBackend::new(HttpBackendConfig {
        name: name.to_string(),
        endpoint: endpoint.clone(),
        model: model.clone(),
        api_key_env: api_key_env.clone(),
        timeout_secs: *timeout_secs,
        timeout_retries: *timeout_retries,
    })
    .map_err(|e| CliError::Transport(format!("backend `{name}`: {e}")))?;
    Ok(Box::new(backend))
}
