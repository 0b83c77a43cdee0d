//! Model backends: text embedding, pair reranking and text generation.
//!
//! Each backend is a trait so the pipeline can run against local HTTP model
//! servers ([`http`]) or the deterministic in-process mocks ([`mock`]).

pub mod http;
pub mod mock;

use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend {backend} unavailable: {message}")]
    Unavailable { backend: String, message: String },
    #[error("backend {backend} returned an invalid response: {message}")]
    InvalidResponse { backend: String, message: String },
}

impl BackendError {
    pub fn unavailable(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Unavailable {
            backend: backend.into(),
            message: message.into(),
        }
    }

    pub fn invalid(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::InvalidResponse {
            backend: backend.into(),
            message: message.into(),
        }
    }
}

#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    /// One vector per input text.
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError>;
}

#[async_trait]
pub trait RerankBackend: Send + Sync {
    /// One relevance score per candidate, each scored jointly with `query`.
    async fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError>;
}

/// Body of a generation call. Field names are the wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_k: u32,
    pub max_new_tokens: u32,
}

#[async_trait]
pub trait GenerationBackend: Send + Sync {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError>;
}

#[async_trait]
impl<T: EmbeddingBackend + ?Sized> EmbeddingBackend for Arc<T> {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        (**self).embed(texts).await
    }
}

#[async_trait]
impl<T: RerankBackend + ?Sized> RerankBackend for Arc<T> {
    async fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        (**self).score(query, candidates).await
    }
}

#[async_trait]
impl<T: GenerationBackend + ?Sized> GenerationBackend for Arc<T> {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        (**self).generate(request).await
    }
}

/// Bounds the number of in-flight calls to the wrapped backend. Clones share
/// the same permit pool.
#[derive(Clone)]
pub struct Throttled<B> {
    inner: B,
    permits: Arc<Semaphore>,
}

impl<B> Throttled<B> {
    pub fn new(inner: B, permits: Arc<Semaphore>) -> Self {
        Self { inner, permits }
    }

    async fn permit(&self) -> Result<tokio::sync::SemaphorePermit<'_>, BackendError> {
        self.permits
            .acquire()
            .await
            .map_err(|_| BackendError::unavailable("throttle", "permit pool closed"))
    }
}

#[async_trait]
impl<B: EmbeddingBackend> EmbeddingBackend for Throttled<B> {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let _permit = self.permit().await?;
        self.inner.embed(texts).await
    }
}

#[async_trait]
impl<B: RerankBackend> RerankBackend for Throttled<B> {
    async fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        let _permit = self.permit().await?;
        self.inner.score(query, candidates).await
    }
}

#[async_trait]
impl<B: GenerationBackend> GenerationBackend for Throttled<B> {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        let _permit = self.permit().await?;
        self.inner.generate(request).await
    }
}

/// The full set of backends one pipeline run needs.
#[derive(Clone)]
pub struct Backends {
    pub law_embedder: Arc<dyn EmbeddingBackend>,
    pub case_embedder: Arc<dyn EmbeddingBackend>,
    pub reranker: Arc<dyn RerankBackend>,
    pub conclusion_generator: Arc<dyn GenerationBackend>,
    pub document_generator: Arc<dyn GenerationBackend>,
    /// Character embedder for the similarity metric.
    pub similarity_embedder: Arc<dyn EmbeddingBackend>,
}

impl Backends {
    /// All-mock backends: hashing embedder, lexical reranker, copy-precedent
    /// conclusion generator and template-fill document generator.
    pub fn mock(dim: usize) -> Self {
        let embedder = Arc::new(mock::HashingEmbedder::new(dim));
        Self {
            law_embedder: embedder.clone(),
            case_embedder: embedder.clone(),
            reranker: Arc::new(mock::LexicalReranker),
            conclusion_generator: Arc::new(mock::CopyPrecedentGenerator),
            document_generator: Arc::new(mock::TemplateFillGenerator::default()),
            similarity_embedder: embedder,
        }
    }

    /// Wraps every backend so that at most `limit` calls are in flight.
    pub fn throttled(self, limit: usize) -> Self {
        let permits = Arc::new(Semaphore::new(limit.max(1)));
        Self {
            law_embedder: Arc::new(Throttled::new(self.law_embedder, permits.clone())),
            case_embedder: Arc::new(Throttled::new(self.case_embedder, permits.clone())),
            reranker: Arc::new(Throttled::new(self.reranker, permits.clone())),
            conclusion_generator: Arc::new(Throttled::new(
                self.conclusion_generator,
                permits.clone(),
            )),
            document_generator: Arc::new(Throttled::new(self.document_generator, permits.clone())),
            similarity_embedder: Arc::new(Throttled::new(self.similarity_embedder, permits)),
        }
    }
}
