//! Contrastive objectives for the retriever and the reranker, as standalone
//! numeric functions.

use std::collections::{HashMap, HashSet};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{rank_order, RetrievalError, ScoredCandidate};

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<(), RetrievalError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(RetrievalError::NonFiniteInput)
    }
}

/// `-log(exp(pos) / (exp(pos) + Σ exp(neg)))`, shifted by the maximum score.
pub fn info_nce_loss(pos_score: f64, neg_scores: &[f64]) -> Result<f64, RetrievalError> {
    check_finite(std::iter::once(pos_score).chain(neg_scores.iter().copied()))?;
    if neg_scores.is_empty() {
        return Ok(0.0);
    }
    let m = neg_scores.iter().copied().fold(pos_score, f64::max);
    let neg_sum: f64 = neg_scores.iter().map(|s| (s - m).exp()).sum();
    let loss = if m == pos_score {
        neg_sum.ln_1p()
    } else {
        m - pos_score + ((pos_score - m).exp() + neg_sum).ln()
    };
    Ok(loss.max(0.0))
}

/// Gradient of the loss with respect to every score: `softmax - onehot(pos)`.
pub fn info_nce_gradient(scores: &[f64], pos_index: usize) -> Result<Vec<f64>, RetrievalError> {
    if pos_index >= scores.len() {
        return Err(RetrievalError::IndexOutOfRange {
            index: pos_index,
            len: scores.len(),
        });
    }
    check_finite(scores.iter().copied())?;
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps
        .iter()
        .enumerate()
        .map(|(i, e)| e / z - if i == pos_index { 1.0 } else { 0.0 })
        .collect())
}

/// One positive article and its hard negatives.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegativeGroup {
    positive: String,
    negatives: Vec<String>,
}

impl NegativeGroup {
    pub fn new(
        positive: impl Into<String>,
        negatives: Vec<String>,
    ) -> Result<Self, RetrievalError> {
        let positive = positive.into();
        if negatives.is_empty() {
            return Err(RetrievalError::InsufficientNegatives {
                needed: 1,
                available: 0,
            });
        }
        if negatives.contains(&positive) {
            return Err(RetrievalError::NoPositiveInCandidates);
        }
        Ok(Self {
            positive,
            negatives,
        })
    }

    pub fn positive(&self) -> &str {
        &self.positive
    }

    pub fn negatives(&self) -> &[String] {
        &self.negatives
    }
}

/// Negative log-softmax of the positive over the group.
pub fn lce_loss(
    group: &NegativeGroup,
    scores: &HashMap<String, f64>,
) -> Result<f64, RetrievalError> {
    let lookup = |id: &String| {
        scores
            .get(id)
            .copied()
            .ok_or_else(|| RetrievalError::MissingScore(id.clone()))
    };
    let pos = lookup(&group.positive)?;
    let group_scores = std::iter::once(Ok(pos))
        .chain(group.negatives.iter().map(lookup))
        .collect::<Result<Vec<f64>, _>>()?;
    check_finite(group_scores.iter().copied())?;
    let m = group_scores
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + group_scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
    Ok((log_z - pos).max(0.0))
}

/// Positive = best-ranked gold id; negatives = `n` distinct non-gold ids
/// drawn without replacement by a generator seeded with `seed`.
pub fn sample_hard_negatives(
    candidates: &[ScoredCandidate],
    gold: &HashSet<String>,
    n: usize,
    seed: u64,
) -> Result<NegativeGroup, RetrievalError> {
    let positive = candidates
        .iter()
        .filter(|c| gold.contains(&c.id))
        .min_by(|a, b| rank_order(a, b))
        .ok_or(RetrievalError::NoPositiveInCandidates)?
        .id
        .clone();
    let mut pool: Vec<&str> = Vec::new();
    for c in candidates {
        if !gold.contains(&c.id) && !pool.contains(&c.id.as_str()) {
            pool.push(&c.id);
        }
    }
    if n == 0 || pool.len() < n {
        return Err(RetrievalError::InsufficientNegatives {
            needed: n.max(1),
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let negatives = sample(&mut rng, pool.len(), n)
        .into_iter()
        .map(|i| pool[i].to_string())
        .collect();
    NegativeGroup::new(positive, negatives)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: &str, score: f64) -> ScoredCandidate {
        ScoredCandidate {
            id: id.into(),
            score,
        }
    }

    #[test]
    fn info_nce_examples() {
        assert!((info_nce_loss(0.0, &[0.0, 0.0]).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert_eq!(info_nce_loss(1.5, &[]).unwrap(), 0.0);
        // -ln(e² / (e² + 2)) = ln(1 + 2e⁻²) ≈ 0.2395448
        let expected = (2.0 * (-2.0f64).exp()).ln_1p();
        assert!((info_nce_loss(2.0, &[0.0, 0.0]).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.2395448).abs() < 1e-7);
        assert_eq!(
            info_nce_loss(f64::NAN, &[0.0]),
            Err(RetrievalError::NonFiniteInput)
        );
        assert!(info_nce_loss(-800.0, &[800.0]).unwrap().is_finite());
    }

    #[test]
    fn gradient_uniform() {
        let g = info_nce_gradient(&[0.0, 0.0, 0.0], 0).unwrap();
        for (a, b) in g.iter().zip([-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(
            info_nce_gradient(&[0.0], 1),
            Err(RetrievalError::IndexOutOfRange { index: 1, len: 1 })
        );
    }

    #[test]
    fn lce_examples() {
        let group = NegativeGroup::new("p", vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let uniform: HashMap<String, f64> = ["p", "a", "b", "c"]
            .iter()
            .map(|k| (k.to_string(), 0.7))
            .collect();
        assert!((lce_loss(&group, &uniform).unwrap() - 4f64.ln()).abs() < 1e-12);
        let mut sat = uniform.clone();
        sat.iter_mut().for_each(|(_, v)| *v = 0.0);
        sat.insert("p".into(), 30.0);
        assert!(lce_loss(&group, &sat).unwrap() < 1e-12);
        sat.remove("b");
        assert_eq!(
            lce_loss(&group, &sat),
            Err(RetrievalError::MissingScore("b".into()))
        );
    }

    #[test]
    fn hard_negative_sampling() {
        let cands = [cand("g", 0.9), cand("a", 0.5), cand("b", 0.1)];
        let gold: HashSet<String> = ["g".to_string()].into();
        let group = sample_hard_negatives(&cands, &gold, 2, 7).unwrap();
        assert_eq!(group.positive(), "g");
        let mut negs = group.negatives().to_vec();
        negs.sort();
        assert_eq!(negs, ["a", "b"]);
        assert_eq!(sample_hard_negatives(&cands, &gold, 2, 7).unwrap(), group);
        let none: HashSet<String> = ["z".to_string()].into();
        assert_eq!(
            sample_hard_negatives(&cands, &none, 1, 7),
            Err(RetrievalError::NoPositiveInCandidates)
        );
        assert!(matches!(
            sample_hard_negatives(&cands, &gold, 3, 7),
            Err(RetrievalError::InsufficientNegatives { .. })
        ));
    }

    #[test]
    fn positive_is_best_ranked_gold() {
        let cands = [
            cand("g2", 0.3),
            cand("x", 0.9),
            cand("g1", 0.8),
            cand("y", 0.1),
        ];
        let gold: HashSet<String> = ["g1".to_string(), "g2".to_string()].into();
        let group = sample_hard_negatives(&cands, &gold, 1, 1).unwrap();
        assert_eq!(group.positive(), "g1");
    }
}
