//! JSON-over-HTTP clients for locally served models.
//!
//! | backend    | request                                   | response                 |
//! |------------|-------------------------------------------|--------------------------|
//! | embedding  | `POST /embed {"texts": [..]}`             | `{"vectors": [[..]]}`    |
//! | reranker   | `POST /score {"query", "candidates"}`     | `{"scores": [..]}`       |
//! | generation | `POST /generate {"prompt", "temperature", "top_k", "max_new_tokens"}` | `{"text": ".."}` |

use std::time::Duration;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{BackendError, EmbeddingBackend, GenerateRequest, GenerationBackend, RerankBackend};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_RETRIES: u32 = 2;

#[derive(Debug, Clone)]
pub struct HttpClient {
    base_url: String,
    retries: u32,
    client: reqwest::Client,
}

impl HttpClient {
    pub fn new(base_url: &str, timeout: Duration, retries: u32) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::unavailable(base_url, e.to_string()))?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            retries,
            client,
        })
    }

    pub fn with_defaults(base_url: &str) -> Result<Self, BackendError> {
        Self::new(base_url, DEFAULT_TIMEOUT, DEFAULT_RETRIES)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Posts `body` to `path`, retrying transport failures and 5xx replies.
    async fn post<B: Serialize + Sync, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<R, BackendError> {
        let url = format!("{}{}", self.base_url, path);
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(100 << attempt.min(5))).await;
            }
            let resp = match self.client.post(&url).json(body).send().await {
                Ok(r) => r,
                Err(e) => {
                    last = Some(BackendError::unavailable(&url, e.to_string()));
                    continue;
                }
            };
            let status = resp.status();
            if status.is_server_error() {
                last = Some(BackendError::unavailable(&url, format!("status {status}")));
                continue;
            }
            if !status.is_success() {
                return Err(BackendError::invalid(&url, format!("status {status}")));
            }
            return resp
                .json::<R>()
                .await
                .map_err(|e| BackendError::invalid(&url, e.to_string()));
        }
        Err(last.unwrap_or_else(|| BackendError::unavailable(&url, "no attempt made")))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    candidates: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

#[derive(Debug, Clone)]
pub struct HttpEmbedder(pub HttpClient);

#[async_trait]
impl EmbeddingBackend for HttpEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        let r: EmbedResponse = self.0.post("/embed", &EmbedRequest { texts }).await?;
        Ok(r.vectors)
    }
}

#[derive(Debug, Clone)]
pub struct HttpReranker(pub HttpClient);

#[async_trait]
impl RerankBackend for HttpReranker {
    async fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        let r: ScoreResponse = self
            .0
            .post("/score", &ScoreRequest { query, candidates })
            .await?;
        Ok(r.scores)
    }
}

#[derive(Debug, Clone)]
pub struct HttpGenerator(pub HttpClient);

#[async_trait]
impl GenerationBackend for HttpGenerator {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        let r: GenerateResponse = self.0.post("/generate", request).await?;
        Ok(r.text)
    }
}
