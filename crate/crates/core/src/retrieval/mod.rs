//! Referential element search: dense article retrieval, reranking, top-1
//! precedent retrieval and composition of the referential element set.
//!
//! Scores are raw dot products. Every ranking breaks score ties by ascending
//! id.

pub mod loss;

use std::cmp::Ordering;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Backends, EmbeddingBackend, RerankBackend};
use crate::corpus::{ArticleId, CaseCorpus, CaseDocument, LawArticle, LawCorpus};
use crate::extractor::{extract_elements, CaseElements, ExtractError};

pub use loss::{info_nce_gradient, info_nce_loss, lce_loss, sample_hard_negatives, NegativeGroup};

pub const DEFAULT_K1: usize = 100;
pub const DEFAULT_K2: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("backend returned {got} scores for {expected} candidates")]
    ScoreCountMismatch { expected: usize, got: usize },
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("index {index} out of range for {len} scores")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no score for id {0}")]
    MissingScore(String),
    #[error("need {needed} negatives but only {available} non-gold candidates")]
    InsufficientNegatives { needed: usize, available: usize },
    #[error("no gold id among the candidates")]
    NoPositiveInCandidates,
    #[error("embedding backend returned {got} vectors for {expected} texts")]
    VectorCountMismatch { expected: usize, got: usize },
    #[error("index ids do not match the corpus")]
    IndexCorpusMismatch,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
}

/// A finite, non-empty embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFiniteInput);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = RetrievalError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub id: String,
    pub score: f64,
}

/// Descending score, then ascending id. Signed zeros are equal scores.
pub fn rank_order(a: &ScoredCandidate, b: &ScoredCandidate) -> Ordering {
    let key = |s: f64| if s == 0.0 { 0.0 } else { s };
    key(b.score)
        .total_cmp(&key(a.score))
        .then_with(|| a.id.cmp(&b.id))
}

fn top_n(mut scored: Vec<ScoredCandidate>, n: usize) -> Vec<ScoredCandidate> {
    scored.sort_by(rank_order);
    scored.truncate(n);
    scored
}

/// Embeds `texts`, checking count, uniform dimension and finiteness.
pub async fn embed(
    backend: &dyn EmbeddingBackend,
    texts: &[String],
) -> Result<Vec<EmbeddingVector>, RetrievalError> {
    if texts.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let raw = backend.embed(texts).await?;
    if raw.len() != texts.len() {
        return Err(RetrievalError::VectorCountMismatch {
            expected: texts.len(),
            got: raw.len(),
        });
    }
    let dim = raw[0].len();
    raw.into_iter()
        .map(|v| {
            if v.len() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            EmbeddingVector::new(v)
        })
        .collect()
}

/// Exhaustive-scan dense index. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
}

impl DenseIndex {
    pub fn from_vectors(entries: Vec<(String, EmbeddingVector)>) -> Result<Self, RetrievalError> {
        let Some(first) = entries.first() else {
            return Err(RetrievalError::EmptyCorpus);
        };
        let dim = first.1.dim();
        let mut ids = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (id, v) in entries {
            if v.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    got: v.dim(),
                });
            }
            ids.push(id);
            vectors.push(v);
        }
        Ok(Self { dim, ids, vectors })
    }

    pub async fn build(
        entries: &[(String, String)],
        backend: &dyn EmbeddingBackend,
    ) -> Result<Self, RetrievalError> {
        if entries.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let texts: Vec<String> = entries.iter().map(|(_, t)| t.clone()).collect();
        let vectors = embed(backend, &texts).await?;
        Self::from_vectors(
            entries
                .iter()
                .map(|(id, _)| id.clone())
                .zip(vectors)
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Dot-product score of every entry, in index order.
    pub fn score_all(
        &self,
        query: &EmbeddingVector,
    ) -> Result<Vec<ScoredCandidate>, RetrievalError> {
        if query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        Ok(self
            .ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| ScoredCandidate {
                id: id.clone(),
                score: query.dot(v),
            })
            .collect())
    }
}

/// The `min(k, |index|)` best entries by dot product.
pub fn search_topk(
    index: &DenseIndex,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<ScoredCandidate>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    Ok(top_n(index.score_all(query)?, k))
}

/// Scores every candidate jointly with `fact` and keeps the best `k2`.
pub async fn rerank(
    backend: &dyn RerankBackend,
    fact: &str,
    candidates: &[LawArticle],
    k2: usize,
) -> Result<Vec<ScoredCandidate>, RetrievalError> {
    if k2 == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if candidates.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let texts: Vec<String> = candidates.iter().map(|a| a.text.clone()).collect();
    let scores = backend.score(fact, &texts).await?;
    if scores.len() != candidates.len() {
        return Err(RetrievalError::ScoreCountMismatch {
            expected: candidates.len(),
            got: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(RetrievalError::NonFiniteInput);
    }
    let scored = candidates
        .iter()
        .zip(scores)
        .map(|(a, score)| ScoredCandidate {
            id: a.id().to_string(),
            score,
        })
        .collect();
    Ok(top_n(scored, k2))
}

/// A law corpus with an embedding of every article text.
#[derive(Debug, Clone)]
pub struct LawIndex {
    corpus: LawCorpus,
    index: DenseIndex,
}

impl LawIndex {
    pub async fn build(
        corpus: LawCorpus,
        backend: &dyn EmbeddingBackend,
    ) -> Result<Self, RetrievalError> {
        let entries: Vec<(String, String)> = corpus
            .articles()
            .iter()
            .map(|a| (a.id().to_string(), a.text.clone()))
            .collect();
        let index = DenseIndex::build(&entries, backend).await?;
        Ok(Self { corpus, index })
    }

    /// Pairs a corpus with a previously built index over the same ids.
    pub fn from_parts(corpus: LawCorpus, index: DenseIndex) -> Result<Self, RetrievalError> {
        let matches = index.len() == corpus.len()
            && corpus
                .articles()
                .iter()
                .zip(index.ids())
                .all(|(a, id)| a.id().to_string() == *id);
        if !matches {
            return Err(RetrievalError::IndexCorpusMismatch);
        }
        Ok(Self { corpus, index })
    }

    pub fn corpus(&self) -> &LawCorpus {
        &self.corpus
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.index
    }

    fn article(&self, id: &str) -> &LawArticle {
        let id: ArticleId = id.parse().expect("index ids are canonical article ids");
        self.corpus.get(&id).expect("index ids are corpus ids")
    }
}

/// A case corpus with an embedding of every fact section.
#[derive(Debug, Clone)]
pub struct CaseIndex {
    corpus: CaseCorpus,
    index: DenseIndex,
}

impl CaseIndex {
    pub async fn build(
        corpus: CaseCorpus,
        backend: &dyn EmbeddingBackend,
    ) -> Result<Self, RetrievalError> {
        let entries: Vec<(String, String)> = corpus
            .cases()
            .iter()
            .map(|c| (c.case_id.clone(), c.fact.clone()))
            .collect();
        let index = DenseIndex::build(&entries, backend).await?;
        Ok(Self { corpus, index })
    }

    pub fn from_parts(corpus: CaseCorpus, index: DenseIndex) -> Result<Self, RetrievalError> {
        let matches = index.len() == corpus.len()
            && corpus
                .cases()
                .iter()
                .zip(index.ids())
                .all(|(c, id)| c.case_id == *id);
        if !matches {
            return Err(RetrievalError::IndexCorpusMismatch);
        }
        Ok(Self { corpus, index })
    }

    pub fn corpus(&self) -> &CaseCorpus {
        &self.corpus
    }

    pub fn dense(&self) -> &DenseIndex {
        &self.index
    }
}

/// Top-1 case for an already embedded fact, skipping `exclude`.
pub fn best_precedent<'a>(
    cases: &'a CaseIndex,
    query: &EmbeddingVector,
    exclude: Option<&str>,
) -> Result<&'a CaseDocument, RetrievalError> {
    let best = cases
        .index
        .score_all(query)?
        .into_iter()
        .filter(|c| Some(c.id.as_str()) != exclude)
        .min_by(rank_order)
        .ok_or(RetrievalError::EmptyCorpus)?;
    Ok(cases
        .corpus
        .get(&best.id)
        .expect("index ids are corpus ids"))
}

/// The single most relevant precedent for `fact`. The case named by
/// `exclude` is never returned.
pub async fn retrieve_precedent<'a>(
    cases: &'a CaseIndex,
    fact: &str,
    exclude: Option<&str>,
    backend: &dyn EmbeddingBackend,
) -> Result<&'a CaseDocument, RetrievalError> {
    let query = embed(backend, &[fact.to_string()]).await?.remove(0);
    best_precedent(cases, &query, exclude)
}

/// Retrieved articles not already cited by the precedent, in retrieval order.
pub fn compose_external_articles(
    retrieved: &[LawArticle],
    precedent_articles: &IndexSet<ArticleId>,
) -> Vec<LawArticle> {
    let mut seen = IndexSet::new();
    retrieved
        .iter()
        .filter(|a| {
            let id = a.id();
            !precedent_articles.contains(&id) && seen.insert(id)
        })
        .cloned()
        .collect()
}

/// The referential element set handed to the pre-judge stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferentialElements {
    pub e_case: CaseElements,
    pub a_ext: Vec<LawArticle>,
    pub c_doc: CaseDocument,
    /// Reranked articles with their scores, before the set difference.
    pub retrieved: Vec<ScoredCandidate>,
}

impl ReferentialElements {
    pub fn is_consistent(&self) -> bool {
        self.c_doc.case_id == self.e_case.case_id
            && self
                .a_ext
                .iter()
                .all(|a| !self.e_case.articles.contains(&a.id()))
    }
}

/// Search stage: dense article retrieval (`k1`) and reranking (`k2`) in
/// parallel with precedent retrieval, then element extraction and the set
/// difference.
pub async fn rjer_search(
    fact: &str,
    laws: &LawIndex,
    cases: &CaseIndex,
    backends: &Backends,
    k1: usize,
    k2: usize,
    exclude: Option<&str>,
) -> Result<ReferentialElements, RetrievalError> {
    if k1 == 0 || k2 == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let texts = [fact.to_string()];
    let (law_q, case_q) = futures::join!(
        embed(backends.law_embedder.as_ref(), &texts),
        embed(backends.case_embedder.as_ref(), &texts)
    );
    let law_q = law_q?.remove(0);
    let case_q = case_q?.remove(0);

    let initial = search_topk(&laws.index, &law_q, k1)?;
    let candidates: Vec<LawArticle> = initial
        .iter()
        .map(|c| laws.article(&c.id).clone())
        .collect();
    let reranked = rerank(backends.reranker.as_ref(), fact, &candidates, k2).await?;
    let a_ret: Vec<LawArticle> = reranked
        .iter()
        .map(|c| laws.article(&c.id).clone())
        .collect();

    let precedent = best_precedent(cases, &case_q, exclude)?;
    let e_case = extract_elements(precedent)?;
    let a_ext = compose_external_articles(&a_ret, &e_case.articles);
    Ok(ReferentialElements {
        e_case,
        a_ext,
        c_doc: precedent.clone(),
        retrieved: reranked,
    })
}
