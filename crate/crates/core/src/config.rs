//! TOML configuration shared by the command line and the service.
//!
//! Every section and key is optional. Backend URLs may be overridden with
//! `JUDGEFLOW_EMBED_URL`, `JUDGEFLOW_CASE_EMBED_URL`, `JUDGEFLOW_RERANK_URL`,
//! `JUDGEFLOW_GENERATE_URL` and `JUDGEFLOW_SIMILARITY_URL`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::http::{HttpClient, HttpEmbedder, HttpGenerator, HttpReranker};
use crate::backend::{BackendError, Backends};
use crate::prejudge::GenerationParams;
use crate::retrieval::{DEFAULT_K1, DEFAULT_K2};
use crate::writer::{DocumentTemplate, WriterError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Template(#[from] WriterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Source law corpus (JSON lines) read by `ingest`.
    pub laws: Option<PathBuf>,
    /// Source case corpus (JSON lines) read by `ingest`.
    pub cases: Option<PathBuf>,
    /// Holds the ingested corpora and the persisted index.
    pub data_dir: PathBuf,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            laws: None,
            cases: None,
            data_dir: PathBuf::from("data"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub mock_dim: usize,
    pub embed_url: Option<String>,
    /// Case-fact embedder; defaults to `embed_url`.
    pub case_embed_url: Option<String>,
    pub rerank_url: Option<String>,
    pub generate_url: Option<String>,
    /// Character embedder for the similarity metric; defaults to `embed_url`.
    pub similarity_url: Option<String>,
    pub timeout_secs: u64,
    pub retries: u32,
    /// Upper bound on concurrent backend calls.
    pub in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            mock_dim: 256,
            embed_url: None,
            case_embed_url: None,
            rerank_url: None,
            generate_url: None,
            similarity_url: None,
            timeout_secs: 30,
            retries: 2,
            in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub k1: usize,
    pub k2: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            k2: DEFAULT_K2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WriterConfig {
    /// Document template file; the shipped template when absent.
    pub template: Option<PathBuf>,
    /// Rewrite generated sections that depart from the conclusion.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Job store directory; jobs are kept in memory only when absent.
    pub store_dir: Option<PathBuf>,
    /// Events between snapshots of a job.
    pub snapshot_every: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            store_dir: None,
            snapshot_every: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusConfig,
    pub backends: BackendConfig,
    pub retrieval: RetrievalConfig,
    pub generation: GenerationParams,
    pub writer: WriterConfig,
    pub service: ServiceConfig,
}

const ENV_OVERRIDES: &[&str] = &[
    "JUDGEFLOW_EMBED_URL",
    "JUDGEFLOW_CASE_EMBED_URL",
    "JUDGEFLOW_RERANK_URL",
    "JUDGEFLOW_GENERATE_URL",
    "JUDGEFLOW_SIMILARITY_URL",
];

impl Config {
    /// Reads `path`, resolves relative paths against its directory and
    /// applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text).map_err(|e| match e {
            ConfigError::Invalid(message) => ConfigError::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.laws.as_mut().map(fix);
        self.corpus.cases.as_mut().map(fix);
        fix(&mut self.corpus.data_dir);
        self.writer.template.as_mut().map(fix);
        self.service.store_dir.as_mut().map(fix);
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        let b = &mut self.backends;
        let slots = [
            &mut b.embed_url,
            &mut b.case_embed_url,
            &mut b.rerank_url,
            &mut b.generate_url,
            &mut b.similarity_url,
        ];
        for (key, slot) in ENV_OVERRIDES.iter().zip(slots) {
            if let Some(v) = get(key).filter(|v| !v.is_empty()) {
                *slot = Some(v);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.retrieval.k1 == 0 || self.retrieval.k2 == 0 {
            return Err(ConfigError::Invalid("k1 and k2 must be positive".into()));
        }
        if self.backends.mock_dim == 0 {
            return Err(ConfigError::Invalid("mock_dim must be positive".into()));
        }
        self.generation
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Identifies the embedders, so a persisted index is only reused with the
    /// backends that built it.
    pub fn embedder_fingerprint(&self) -> String {
        let b = &self.backends;
        match b.kind {
            BackendKind::Mock => format!("mock-hashing:{}", b.mock_dim),
            BackendKind::Http => format!(
                "http:{}|{}",
                b.embed_url.as_deref().unwrap_or(""),
                b.case_embed_url
                    .as_deref()
                    .or(b.embed_url.as_deref())
                    .unwrap_or("")
            ),
        }
    }

    pub fn backends(&self) -> Result<Backends, ConfigError> {
        let b = &self.backends;
        let backends = match b.kind {
            BackendKind::Mock => Backends::mock(b.mock_dim),
            BackendKind::Http => {
                let client =
                    |name: &str, url: Option<&String>| -> Result<HttpClient, ConfigError> {
                        let url = url.ok_or_else(|| {
                            ConfigError::Invalid(format!(
                                "backends.{name} is required for http backends"
                            ))
                        })?;
                        Ok(HttpClient::new(
                            url,
                            Duration::from_secs(b.timeout_secs),
                            b.retries,
                        )?)
                    };
                let embed = client("embed_url", b.embed_url.as_ref())?;
                let case = client(
                    "case_embed_url",
                    b.case_embed_url.as_ref().or(b.embed_url.as_ref()),
                )?;
                let sim = client(
                    "similarity_url",
                    b.similarity_url.as_ref().or(b.embed_url.as_ref()),
                )?;
                let generate = Arc::new(HttpGenerator(client(
                    "generate_url",
                    b.generate_url.as_ref(),
                )?));
                Backends {
                    law_embedder: Arc::new(HttpEmbedder(embed)),
                    case_embedder: Arc::new(HttpEmbedder(case)),
                    reranker: Arc::new(HttpReranker(client("rerank_url", b.rerank_url.as_ref())?)),
                    conclusion_generator: generate.clone(),
                    document_generator: generate,
                    similarity_embedder: Arc::new(HttpEmbedder(sim)),
                }
            }
        };
        Ok(backends.throttled(b.in_flight))
    }

    pub fn document_template(&self) -> Result<DocumentTemplate, ConfigError> {
        match &self.writer.template {
            None => Ok(DocumentTemplate::default()),
            Some(path) => {
                let body = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".into());
                Ok(DocumentTemplate::new(name, body)?)
            }
        }
    }

    pub fn laws_path(&self) -> PathBuf {
        self.corpus.data_dir.join("laws.jsonl")
    }

    pub fn cases_path(&self) -> PathBuf {
        self.corpus.data_dir.join("cases.jsonl")
    }

    pub fn index_path(&self) -> PathBuf {
        self.corpus.data_dir.join("index.json")
    }
}
