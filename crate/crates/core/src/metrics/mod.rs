//! Evaluation of generated judgments against gold judgments: penalty
//! accuracy, charge and article precision/recall, and text similarity of the
//! reasoning and result sections.

pub mod meteor;

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, EmbeddingBackend};
use crate::corpus::CaseDocument;
use crate::extractor::{extract_elements, ExtractError, FineAmount, PrisonTerm};

pub use meteor::meteor_char;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Generated,
    Gold,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Generated => "generated",
            Side::Gold => "gold",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("penalty values must be non-negative")]
    NegativeInput,
    #[error("no reports to aggregate")]
    EmptyInput,
    #[error("{side} document: {source}")]
    Extraction { side: Side, source: ExtractError },
    #[error("embedding backend returned {got} vectors for {expected} characters")]
    VectorCount { expected: usize, got: usize },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// `1 - |gen - gt| / max(gen, gt)`, and 1 when both are zero.
pub fn penalty_score(v_gen: f64, v_gt: f64) -> Result<f64, MetricsError> {
    if !(v_gen >= 0.0 && v_gt >= 0.0) || !v_gen.is_finite() || !v_gt.is_finite() {
        return Err(MetricsError::NegativeInput);
    }
    let max = v_gen.max(v_gt);
    if max == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (v_gen - v_gt).abs() / max)
}

/// Scalar terms of the same kind compare by months; otherwise the kinds must
/// agree.
pub fn term_penalty_score(t_gen: &PrisonTerm, t_gt: &PrisonTerm) -> f64 {
    match (t_gen, t_gt) {
        (PrisonTerm::FixedTerm { months: a }, PrisonTerm::FixedTerm { months: b })
        | (PrisonTerm::Detention { months: a }, PrisonTerm::Detention { months: b }) => {
            penalty_score(f64::from(*a), f64::from(*b)).expect("months are non-negative")
        }
        _ => kind_match(t_gen.kind_name() == t_gt.kind_name()),
    }
}

/// Amounts compare by yuan; otherwise the kinds must agree.
pub fn fine_penalty_score(f_gen: &FineAmount, f_gt: &FineAmount) -> f64 {
    match (f_gen, f_gt) {
        (FineAmount::Amount { cny: a }, FineAmount::Amount { cny: b }) => {
            penalty_score(*a as f64, *b as f64).expect("amounts are non-negative")
        }
        _ => kind_match(f_gen.kind_name() == f_gt.kind_name()),
    }
}

fn kind_match(equal: bool) -> f64 {
    if equal {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            precision,
            recall,
            f1,
        }
    }
}

pub fn set_prf<T: Eq + Hash>(pred: &IndexSet<T>, gold: &IndexSet<T>) -> Prf {
    let hit = pred.iter().filter(|p| gold.contains(*p)).count() as f64;
    let ratio = |n: usize| if n == 0 { 0.0 } else { hit / n as f64 };
    Prf::new(ratio(pred.len()), ratio(gold.len()))
}

fn sim_chars(s: &str) -> Vec<char> {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Greedy-matching similarity over per-character embeddings: each character
/// takes its best cosine on the other side.
pub async fn embed_sim(
    candidate: &str,
    reference: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<Prf, MetricsError> {
    let (cand, refr) = (sim_chars(candidate), sim_chars(reference));
    if cand.is_empty() || refr.is_empty() {
        return Ok(Prf::new(0.0, 0.0));
    }
    let distinct: IndexSet<char> = cand.iter().chain(&refr).copied().collect();
    let texts: Vec<String> = distinct.iter().map(|c| c.to_string()).collect();
    let vectors = backend.embed(&texts).await?;
    if vectors.len() != texts.len() {
        return Err(MetricsError::VectorCount {
            expected: texts.len(),
            got: vectors.len(),
        });
    }
    let vec_of: HashMap<char, &[f64]> = distinct
        .iter()
        .copied()
        .zip(vectors.iter().map(Vec::as_slice))
        .collect();
    let mut best: HashMap<(char, char), f64> = HashMap::new();
    let mut sim = |a: char, b: char| {
        *best
            .entry((a, b))
            .or_insert_with(|| cosine(vec_of[&a], vec_of[&b]))
    };
    let mut greedy = |from: &[char], to: &[char]| {
        let total: f64 = from
            .iter()
            .map(|&a| {
                to.iter()
                    .map(|&b| sim(a, b))
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .sum();
        (total / from.len() as f64).clamp(0.0, 1.0)
    };
    let precision = greedy(&cand, &refr);
    let recall = greedy(&refr, &cand);
    Ok(Prf::new(precision, recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextSim {
    pub meteor_char: f64,
    /// F1 of the greedy-matching embedding similarity.
    pub embed_sim: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub prison_acc: f64,
    pub fine_acc: f64,
    pub convicting: Prf,
    pub referencing: Prf,
    pub reasoning_sim: TextSim,
    pub result_sim: TextSim,
}

impl MetricReport {
    fn fields(&self) -> [f64; 12] {
        [
            self.prison_acc,
            self.fine_acc,
            self.convicting.precision,
            self.convicting.recall,
            self.convicting.f1,
            self.referencing.precision,
            self.referencing.recall,
            self.referencing.f1,
            self.reasoning_sim.meteor_char,
            self.reasoning_sim.embed_sim,
            self.result_sim.meteor_char,
            self.result_sim.embed_sim,
        ]
    }

    fn from_fields(f: [f64; 12]) -> Self {
        Self {
            prison_acc: f[0],
            fine_acc: f[1],
            convicting: Prf {
                precision: f[2],
                recall: f[3],
                f1: f[4],
            },
            referencing: Prf {
                precision: f[5],
                recall: f[6],
                f1: f[7],
            },
            reasoning_sim: TextSim {
                meteor_char: f[8],
                embed_sim: f[9],
            },
            result_sim: TextSim {
                meteor_char: f[10],
                embed_sim: f[11],
            },
        }
    }

    pub fn all_in_unit_interval(&self) -> bool {
        self.fields().iter().all(|v| (0.0..=1.0).contains(v))
    }
}

async fn text_sim(
    gen: &str,
    gold: &str,
    backend: &dyn EmbeddingBackend,
) -> Result<TextSim, MetricsError> {
    Ok(TextSim {
        meteor_char: meteor_char(gen, gold),
        embed_sim: embed_sim(gen, gold, backend).await?.f1,
    })
}

/// Scores one generated judgment against its gold judgment.
pub async fn evaluate_pair(
    gen: &CaseDocument,
    gold: &CaseDocument,
    backend: &dyn EmbeddingBackend,
) -> Result<MetricReport, MetricsError> {
    let g = extract_elements(gen).map_err(|source| MetricsError::Extraction {
        side: Side::Generated,
        source,
    })?;
    let t = extract_elements(gold).map_err(|source| MetricsError::Extraction {
        side: Side::Gold,
        source,
    })?;
    Ok(MetricReport {
        prison_acc: term_penalty_score(&g.term, &t.term),
        fine_acc: fine_penalty_score(&g.fine, &t.fine),
        convicting: set_prf(&g.charges, &t.charges),
        referencing: set_prf(&g.articles, &t.articles),
        reasoning_sim: text_sim(&gen.reasoning, &gold.reasoning, backend).await?,
        result_sim: text_sim(&gen.judgment_result, &gold.judgment_result, backend).await?,
    })
}

/// Order-independent mean: values are summed in sorted order, and a constant
/// column averages to that constant.
fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let (lo, hi) = (values[0], values[values.len() - 1]);
    if lo == hi {
        return lo;
    }
    (values.iter().sum::<f64>() / values.len() as f64).clamp(lo, hi)
}

/// Field-wise arithmetic mean over documents.
pub fn aggregate(reports: &[MetricReport]) -> Result<MetricReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let rows: Vec<[f64; 12]> = reports.iter().map(MetricReport::fields).collect();
    let mut out = [0.0; 12];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = mean(rows.iter().map(|r| r[k]).collect());
    }
    Ok(MetricReport::from_fields(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::mock::HashingEmbedder;

    fn set(items: &[&str]) -> IndexSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_score(24.0, 24.0).unwrap(), 1.0);
        assert!((penalty_score(36.0, 24.0).unwrap() - 0.6667).abs() < 1e-4);
        assert_eq!(penalty_score(0.0, 12.0).unwrap(), 0.0);
        assert_eq!(penalty_score(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(penalty_score(-1.0, 2.0), Err(MetricsError::NegativeInput));
    }

    #[test]
    fn term_and_fine_kinds() {
        let f8 = PrisonTerm::FixedTerm { months: 8 };
        assert_eq!(term_penalty_score(&f8, &f8), 1.0);
        assert_eq!(
            term_penalty_score(&PrisonTerm::Life, &PrisonTerm::Life),
            1.0
        );
        assert_eq!(term_penalty_score(&f8, &PrisonTerm::Life), 0.0);
        assert_eq!(
            term_penalty_score(&f8, &PrisonTerm::Detention { months: 8 }),
            0.0
        );
        assert_eq!(
            fine_penalty_score(
                &FineAmount::Amount { cny: 1000 },
                &FineAmount::Amount { cny: 2000 }
            ),
            0.5
        );
        assert_eq!(
            fine_penalty_score(&FineAmount::None, &FineAmount::None),
            1.0
        );
        assert_eq!(
            fine_penalty_score(&FineAmount::None, &FineAmount::Amount { cny: 5 }),
            0.0
        );
    }

    #[test]
    fn prf_examples() {
        let p = set_prf(&set(&["盗窃罪"]), &set(&["盗窃罪"]));
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        let p = set_prf(&set(&["盗窃罪", "抢劫罪"]), &set(&["盗窃罪"]));
        assert_eq!((p.precision, p.recall), (0.5, 1.0));
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-15);
        let p = set_prf(&set(&[]), &set(&["盗窃罪"]));
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[tokio::test]
    async fn embed_sim_examples() {
        let m = HashingEmbedder::new(256);
        let p = embed_sim("被告人犯盗窃罪", "被告人犯盗窃罪", &m)
            .await
            .unwrap();
        assert!((p.f1 - 1.0).abs() < 1e-12);
        assert_eq!(embed_sim("", "甲", &m).await.unwrap().f1, 0.0);
    }

    fn report(prison: f64) -> MetricReport {
        let prf = Prf::new(1.0, 0.5);
        let sim = TextSim {
            meteor_char: 0.3,
            embed_sim: 0.7,
        };
        MetricReport {
            prison_acc: prison,
            fine_acc: 1.0,
            convicting: prf,
            referencing: prf,
            reasoning_sim: sim,
            result_sim: sim,
        }
    }

    #[test]
    fn aggregate_means() {
        assert_eq!(aggregate(&[]), Err(MetricsError::EmptyInput));
        assert_eq!(aggregate(&[report(0.4)]).unwrap(), report(0.4));
        assert_eq!(
            aggregate(&[report(1.0), report(0.0)]).unwrap().prison_acc,
            0.5
        );
        let xs = [report(0.1), report(0.7), report(0.2), report(0.3)];
        let ys = [report(0.3), report(0.2), report(0.1), report(0.7)];
        assert_eq!(aggregate(&xs).unwrap(), aggregate(&ys).unwrap());
        assert_eq!(aggregate(&[report(0.1); 3]).unwrap(), report(0.1));
    }
}
