//! Law-article and case corpora: data model, line-delimited JSON ingestion,
//! persistence and summary statistics.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document;
use crate::extractor::CaseElements;

/// Prefix carried by national statutes; stripped when forming article ids so
/// `《中华人民共和国刑法》` and `《刑法》` cite the same article.
pub const NATIONAL_LAW_PREFIX: &str = "中华人民共和国";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record on line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("case and element collections are not aligned by case_id")]
    MismatchedIds,
    #[error("invalid article id {0:?}")]
    InvalidArticleId(String),
}

/// Canonical law name used inside article ids.
pub fn canonical_law_name(name: &str) -> String {
    let name = name.trim();
    name.strip_prefix(NATIONAL_LAW_PREFIX)
        .unwrap_or(name)
        .trim()
        .to_string()
}

/// Identity of a statutory article: `law#article[.sub]`, e.g. `刑法#264` or
/// `刑法#67.3`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArticleId {
    law: String,
    article: u32,
    sub: Option<u32>,
}

impl ArticleId {
    /// Builds an id; `sub = Some(0)` is treated as absent.
    pub fn new(law: &str, article: u32, sub: Option<u32>) -> Result<Self, CorpusError> {
        let law = canonical_law_name(law);
        if law.is_empty() || law.contains('#') || article == 0 {
            return Err(CorpusError::InvalidArticleId(format!("{law}#{article}")));
        }
        Ok(Self {
            law,
            article,
            sub: sub.filter(|s| *s > 0),
        })
    }

    pub fn law(&self) -> &str {
        &self.law
    }

    pub fn article(&self) -> u32 {
        self.article
    }

    pub fn sub(&self) -> Option<u32> {
        self.sub
    }
}

impl fmt::Display for ArticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.law, self.article)?;
        if let Some(sub) = self.sub {
            write!(f, ".{sub}")?;
        }
        Ok(())
    }
}

impl FromStr for ArticleId {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CorpusError::InvalidArticleId(s.to_string());
        let (law, rest) = s.trim().rsplit_once('#').ok_or_else(bad)?;
        let (article, sub) = match rest.split_once('.') {
            Some((a, b)) => (a, Some(b)),
            None => (rest, None),
        };
        let article: u32 = article.parse().map_err(|_| bad())?;
        let sub = match sub {
            Some(b) => Some(b.parse::<u32>().ok().filter(|v| *v > 0).ok_or_else(bad)?),
            None => None,
        };
        let id = ArticleId::new(law, article, sub).map_err(|_| bad())?;
        // Only canonical spellings round-trip.
        if id.to_string() != s.trim() {
            return Err(bad());
        }
        Ok(id)
    }
}

impl Serialize for ArticleId {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ArticleId {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LawArticle {
    pub law_name: String,
    pub article_no: u32,
    pub sub_no: Option<u32>,
    pub text: String,
}

impl LawArticle {
    pub fn new(
        law_name: impl Into<String>,
        article_no: u32,
        sub_no: Option<u32>,
        text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let article = Self {
            law_name: law_name.into(),
            article_no,
            sub_no: sub_no.filter(|s| *s > 0),
            text: text.into(),
        };
        article
            .validate()
            .map_err(|message| CorpusError::Format { line: 0, message })?;
        Ok(article)
    }

    pub fn id(&self) -> ArticleId {
        ArticleId::new(&self.law_name, self.article_no, self.sub_no)
            .expect("validated article has a well-formed id")
    }

    fn validate(&self) -> Result<(), String> {
        ArticleId::new(&self.law_name, self.article_no, self.sub_no).map_err(|e| e.to_string())?;
        if self.text.trim().is_empty() {
            return Err("article text is empty".into());
        }
        Ok(())
    }
}

/// A judgment document split into its sections. `full_text` is derived from
/// the sections and is not part of the on-disk record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "CaseRecord", into = "CaseRecord")]
pub struct CaseDocument {
    pub case_id: String,
    pub heading: String,
    pub fact: String,
    pub reasoning: String,
    pub judgment_result: String,
    full_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CaseRecord {
    case_id: String,
    #[serde(default)]
    heading: String,
    #[serde(default)]
    fact: String,
    #[serde(default)]
    reasoning: String,
    #[serde(default)]
    judgment_result: String,
}

impl TryFrom<CaseRecord> for CaseDocument {
    type Error = String;

    fn try_from(r: CaseRecord) -> Result<Self, Self::Error> {
        CaseDocument::new(r.case_id, r.heading, r.fact, r.reasoning, r.judgment_result).map_err(
            |e| match e {
                CorpusError::Format { message, .. } => message,
                other => other.to_string(),
            },
        )
    }
}

impl From<CaseDocument> for CaseRecord {
    fn from(d: CaseDocument) -> Self {
        CaseRecord {
            case_id: d.case_id,
            heading: d.heading,
            fact: d.fact,
            reasoning: d.reasoning,
            judgment_result: d.judgment_result,
        }
    }
}

impl CaseDocument {
    pub fn new(
        case_id: impl Into<String>,
        heading: impl Into<String>,
        fact: impl Into<String>,
        reasoning: impl Into<String>,
        judgment_result: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let case_id = case_id.into();
        let fact = fact.into();
        if case_id.trim().is_empty() {
            return Err(CorpusError::Format {
                line: 0,
                message: "case_id is empty".into(),
            });
        }
        if fact.trim().is_empty() {
            return Err(CorpusError::Format {
                line: 0,
                message: format!("case {case_id} has no fact section"),
            });
        }
        let heading = heading.into();
        let reasoning = reasoning.into();
        let judgment_result = judgment_result.into();
        let full_text = document::assemble_full_text(&heading, &fact, &reasoning, &judgment_result);
        Ok(Self {
            case_id,
            heading,
            fact,
            reasoning,
            judgment_result,
            full_text,
        })
    }

    pub fn full_text(&self) -> &str {
        &self.full_text
    }

    /// True when the judgment names more than one defendant. Such documents
    /// are kept, but only the first defendant's outcome is extracted.
    pub fn is_multi_defendant(&self) -> bool {
        crate::extractor::defendant_names(&self.judgment_result).len() > 1
    }
}

/// Immutable collection of law articles indexed by id.
#[derive(Debug, Clone, Default)]
pub struct LawCorpus {
    articles: Vec<LawArticle>,
    by_id: HashMap<ArticleId, usize>,
}

impl LawCorpus {
    pub fn new(articles: Vec<LawArticle>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(articles.len());
        for (i, a) in articles.iter().enumerate() {
            a.validate().map_err(|message| CorpusError::Format {
                line: i + 1,
                message,
            })?;
            if by_id.insert(a.id(), i).is_some() {
                return Err(CorpusError::DuplicateId(a.id().to_string()));
            }
        }
        Ok(Self { articles, by_id })
    }

    pub fn get(&self, id: &ArticleId) -> Option<&LawArticle> {
        self.by_id.get(id).map(|&i| &self.articles[i])
    }

    pub fn articles(&self) -> &[LawArticle] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }
}

/// Immutable collection of case documents indexed by case id.
#[derive(Debug, Clone, Default)]
pub struct CaseCorpus {
    cases: Vec<CaseDocument>,
    by_id: HashMap<String, usize>,
}

impl CaseCorpus {
    pub fn new(cases: Vec<CaseDocument>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(cases.len());
        for (i, c) in cases.iter().enumerate() {
            if by_id.insert(c.case_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId(c.case_id.clone()));
            }
            if c.is_multi_defendant() {
                log::warn!(
                    "case {} names several defendants; only the first is modeled",
                    c.case_id
                );
            }
        }
        Ok(Self { cases, by_id })
    }

    pub fn get(&self, case_id: &str) -> Option<&CaseDocument> {
        self.by_id.get(case_id).map(|&i| &self.cases[i])
    }

    pub fn cases(&self) -> &[CaseDocument] {
        &self.cases
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

fn read_records<T, F>(path: &Path, mut parse: F) -> Result<Vec<T>, CorpusError>
where
    F: FnMut(&str) -> Result<T, String>,
{
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse(&line).map_err(|message| CorpusError::Format {
            line: i + 1,
            message,
        })?);
    }
    Ok(out)
}

fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let io = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_law_corpus(path: impl AsRef<Path>) -> Result<LawCorpus, CorpusError> {
    let articles = read_records(path.as_ref(), |line| {
        let mut a: LawArticle = serde_json::from_str(line).map_err(|e| e.to_string())?;
        a.sub_no = a.sub_no.filter(|s| *s > 0);
        a.validate()?;
        Ok(a)
    })?;
    LawCorpus::new(articles)
}

pub fn save_law_corpus(path: impl AsRef<Path>, articles: &[LawArticle]) -> Result<(), CorpusError> {
    write_records(path.as_ref(), articles)
}

pub fn load_case_corpus(path: impl AsRef<Path>) -> Result<CaseCorpus, CorpusError> {
    let cases = read_records(path.as_ref(), |line| {
        serde_json::from_str::<CaseDocument>(line).map_err(|e| e.to_string())
    })?;
    CaseCorpus::new(cases)
}

pub fn save_case_corpus(path: impl AsRef<Path>, cases: &[CaseDocument]) -> Result<(), CorpusError> {
    write_records(path.as_ref(), cases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_documents: usize,
    pub n_unique_charges: usize,
    pub n_unique_articles: usize,
    pub avg_fact_length: f64,
    pub avg_articles_per_doc: f64,
}

/// Summary statistics over a case collection and its extracted elements.
/// Lengths are counted in characters.
pub fn corpus_stats(
    cases: &[CaseDocument],
    elements: &[CaseElements],
) -> Result<CorpusStats, CorpusError> {
    let mut case_ids: Vec<&str> = cases.iter().map(|c| c.case_id.as_str()).collect();
    let mut element_ids: Vec<&str> = elements.iter().map(|e| e.case_id.as_str()).collect();
    case_ids.sort_unstable();
    element_ids.sort_unstable();
    if case_ids != element_ids {
        return Err(CorpusError::MismatchedIds);
    }
    let n = cases.len();
    let charges: BTreeSet<&str> = elements
        .iter()
        .flat_map(|e| e.charges.iter().map(String::as_str))
        .collect();
    let articles: BTreeSet<&ArticleId> = elements.iter().flat_map(|e| e.articles.iter()).collect();
    // Integer sums keep the means independent of input order.
    let fact_chars: u64 = cases.iter().map(|c| c.fact.chars().count() as u64).sum();
    let cited: u64 = elements.iter().map(|e| e.articles.len() as u64).sum();
    let mean = |total: u64| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    Ok(CorpusStats {
        n_documents: n,
        n_unique_charges: charges.len(),
        n_unique_articles: articles.len(),
        avg_fact_length: mean(fact_chars),
        avg_articles_per_doc: mean(cited),
    })
}
