//! Deterministic in-process backends for tests, fixtures and offline runs.

use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;

use super::{BackendError, EmbeddingBackend, GenerateRequest, GenerationBackend, RerankBackend};
use crate::writer::DocumentTemplate;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn char_bigrams(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    match chars.len() {
        0 => Vec::new(),
        1 => vec![chars[0].to_string()],
        _ => chars.windows(2).map(|w| w.iter().collect()).collect(),
    }
}

/// Signed feature hashing of character bigrams, L2-normalised. A one-character
/// text hashes its single character. Identical texts get identical vectors and
/// a text's dot product with itself is the maximum score (1).
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for feature in char_bigrams(text) {
            let h = fnv1a(feature.as_bytes());
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            v[(h % self.dim as u64) as usize] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

#[async_trait]
impl EmbeddingBackend for HashingEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Scores a candidate by how many distinct character bigrams of the query it
/// contains.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

impl LexicalReranker {
    pub fn score_one(query: &str, candidate: &str) -> f64 {
        let query: HashSet<String> = char_bigrams(query).into_iter().collect();
        let cand: HashSet<String> = char_bigrams(candidate).into_iter().collect();
        query.intersection(&cand).count() as f64
    }
}

#[async_trait]
impl RerankBackend for LexicalReranker {
    async fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        Ok(candidates
            .iter()
            .map(|c| Self::score_one(query, c))
            .collect())
    }
}

/// Conclusion generator that ignores the facts and answers with the
/// precedent's element block copied from the prompt.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopyPrecedentGenerator;

#[async_trait]
impl GenerationBackend for CopyPrecedentGenerator {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        Ok(match crate::prejudge::precedent_block(&request.prompt) {
            Some(block) => format!("参照类案，预判结论如下：\n{block}\n"),
            None => "未找到类案要素。".to_string(),
        })
    }
}

/// Document generator that fills the document template from the facts and
/// the conclusion block found in the prompt.
#[derive(Debug, Clone, Default)]
pub struct TemplateFillGenerator {
    template: DocumentTemplate,
}

impl TemplateFillGenerator {
    pub fn new(template: DocumentTemplate) -> Self {
        Self { template }
    }
}

#[async_trait]
impl GenerationBackend for TemplateFillGenerator {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        crate::writer::template_fill_reply(&request.prompt, &self.template)
            .map_err(|e| BackendError::invalid("template-fill", e))
    }
}

/// Replies with the given texts in order, repeating the last one.
#[derive(Debug)]
pub struct ScriptedGenerator {
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedGenerator {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
        }
    }
}

#[async_trait]
impl GenerationBackend for ScriptedGenerator {
    async fn generate(&self, _request: &GenerateRequest) -> Result<String, BackendError> {
        let mut q = self.replies.lock().expect("script lock");
        match q.len() {
            0 => Err(BackendError::invalid("scripted", "script exhausted")),
            1 => Ok(q[0].clone()),
            _ => Ok(q.pop_front().expect("non-empty")),
        }
    }
}

/// A backend whose every call fails as unavailable.
#[derive(Debug, Clone, Default)]
pub struct Unreachable;

#[async_trait]
impl EmbeddingBackend for Unreachable {
    async fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Err(BackendError::unavailable(
            "unreachable",
            "connection refused",
        ))
    }
}

#[async_trait]
impl RerankBackend for Unreachable {
    async fn score(&self, _q: &str, _c: &[String]) -> Result<Vec<f64>, BackendError> {
        Err(BackendError::unavailable(
            "unreachable",
            "connection refused",
        ))
    }
}

#[async_trait]
impl GenerationBackend for Unreachable {
    async fn generate(&self, _r: &GenerateRequest) -> Result<String, BackendError> {
        Err(BackendError::unavailable(
            "unreachable",
            "connection refused",
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RecordedCall {
    Embed { texts: Vec<String> },
    Score { query: String, candidates: usize },
    Generate(GenerateRequest),
}

/// Wraps a backend and records every request it receives.
#[derive(Debug, Clone)]
pub struct Recording<B> {
    inner: B,
    calls: Arc<Mutex<Vec<RecordedCall>>>,
}

impl<B> Recording<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: Arc::default(),
        }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().expect("recording lock").clone()
    }

    pub fn generate_requests(&self) -> Vec<GenerateRequest> {
        self.calls()
            .into_iter()
            .filter_map(|c| match c {
                RecordedCall::Generate(r) => Some(r),
                _ => None,
            })
            .collect()
    }

    fn push(&self, call: RecordedCall) {
        self.calls.lock().expect("recording lock").push(call);
    }
}

#[async_trait]
impl<B: EmbeddingBackend> EmbeddingBackend for Recording<B> {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        self.push(RecordedCall::Embed {
            texts: texts.to_vec(),
        });
        self.inner.embed(texts).await
    }
}

#[async_trait]
impl<B: RerankBackend> RerankBackend for Recording<B> {
    async fn score(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        self.push(RecordedCall::Score {
            query: query.to_string(),
            candidates: candidates.len(),
        });
        self.inner.score(query, candidates).await
    }
}

#[async_trait]
impl<B: GenerationBackend> GenerationBackend for Recording<B> {
    async fn generate(&self, request: &GenerateRequest) -> Result<String, BackendError> {
        self.push(RecordedCall::Generate(request.clone()));
        self.inner.generate(request).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashing_is_deterministic_and_normalised() {
        let e = HashingEmbedder::new(64);
        let a = e.embed_one("被告人盗窃手机一部");
        assert_eq!(a, e.embed_one("被告人盗窃手机一部"));
        let norm: f64 = a.iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!(e.embed_one("").iter().all(|x| *x == 0.0));
        assert_eq!(e.embed_one("a").len(), 64);
    }

    #[test]
    fn lexical_overlap_prefers_shared_words() {
        let q = "被告人秘密窃取他人财物，构成盗窃";
        let hit = LexicalReranker::score_one(q, "盗窃公私财物，数额较大的");
        let miss = LexicalReranker::score_one(q, "以暴力、胁迫方法劫取公私财物的");
        assert!(hit > miss);
    }

    #[tokio::test]
    async fn scripted_repeats_last() {
        let g = ScriptedGenerator::new(["a", "b"]);
        let req = GenerateRequest {
            prompt: String::new(),
            temperature: 0.1,
            top_k: 1,
            max_new_tokens: 10,
        };
        assert_eq!(g.generate(&req).await.unwrap(), "a");
        assert_eq!(g.generate(&req).await.unwrap(), "b");
        assert_eq!(g.generate(&req).await.unwrap(), "b");
    }
}
