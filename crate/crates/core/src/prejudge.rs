//! Pre-judgment: an analogy prompt built from the precedent's elements and the
//! supplementary articles, and the structured conclusion parsed from the reply.
//!
//! The conclusion travels as a fenced block of four labelled lines:
//!
//! ```text
//! 罪名: 盗窃罪;抢劫罪
//! 法条: 刑法#264;刑法#52
//! 刑期: 有期徒刑八个月
//! 罚金: 2000
//! ```
//!
//! Labels take `:` or `：`. List items are separated by any of `; ； 、 , ，`.
//! `刑期` is a term phrase or a number of months; `罚金` is an amount phrase,
//! an integer number of yuan or `没收个人全部财产`. `无` marks an empty term or
//! fine. Articles may also be written as citations such as
//! `《刑法》第二百六十四条`.

use std::sync::LazyLock;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerateRequest, GenerationBackend};
use crate::corpus::{ArticleId, LawArticle};
use crate::extractor::{
    extract_articles, extract_term, fine_phrase, term_phrase, CaseElements, FineAmount, PrisonTerm,
};
use crate::numeral::{format_chinese_numeral, parse_chinese_numeral};
use crate::template::{Template, TemplateError};

pub const FACT_SECTION: &str = "### 待决案件事实";
pub const PRECEDENT_FACT_SECTION: &str = "### 类案事实";
pub const PRECEDENT_ELEMENTS_SECTION: &str = "### 类案裁判要素";
pub const EXTERNAL_ARTICLES_SECTION: &str = "### 补充法条";
pub const NO_EXTERNAL_ARTICLES: &str = "（无补充法条）";
pub const REPAIR_SECTION: &str = "### 格式提醒";

const FENCE: &str = "```";
const NONE_VALUE: &str = "无";
const LIST_SEPARATORS: &[char] = &[';', '；', '、', ',', '，'];

const CHARGES_LABEL: &str = "罪名";
const ARTICLES_LABEL: &str = "法条";
const TERM_LABEL: &str = "刑期";
const FINE_LABEL: &str = "罚金";

static ICE_TEMPLATE: LazyLock<Template> = LazyLock::new(|| {
    Template::new(
        "ice",
        include_str!("../templates/ice_prompt.txt"),
        &[
            "fact",
            "precedent_fact",
            "precedent_elements",
            "external_articles",
        ],
    )
    .expect("shipped prompt template is valid")
});

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrejudgeError {
    #[error("conclusion could not be parsed: {0}")]
    ConclusionParse(String),
    #[error("invalid edit of {field}: {reason}")]
    InvalidEdit { field: String, reason: String },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    Generated,
    HumanEdited,
    GroundTruth,
}

/// Predicted articles, charges, term and fine for the pending case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntermediateConclusion {
    pub articles: IndexSet<ArticleId>,
    pub charges: IndexSet<String>,
    pub term: PrisonTerm,
    pub fine: FineAmount,
    pub provenance: Provenance,
}

impl IntermediateConclusion {
    pub fn from_elements(e: &CaseElements, provenance: Provenance) -> Self {
        Self {
            articles: e.articles.clone(),
            charges: e.charges.clone(),
            term: e.term,
            fine: e.fine,
            provenance,
        }
    }

    /// Checks the invariants, naming the offending field.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        if self.charges.is_empty() {
            return Err(("charges", "at least one charge is required".into()));
        }
        if let Some(bad) = self.charges.iter().find(|c| !valid_charge(c)) {
            return Err(("charges", format!("{bad:?} is not a charge label")));
        }
        if self.articles.is_empty() {
            return Err(("articles", "at least one article is required".into()));
        }
        if !self.term.is_valid() {
            return Err((
                "term",
                "a fixed term or detention needs a positive length".into(),
            ));
        }
        if !self.fine.is_valid() {
            return Err(("fine", "a fine needs a positive amount".into()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PrejudgeError> {
        self.check()
            .map_err(|(field, reason)| PrejudgeError::ConclusionParse(format!("{field}: {reason}")))
    }
}

fn valid_charge(label: &str) -> bool {
    label.ends_with('罪') && label.chars().count() >= 2 && !label.contains(char::is_whitespace)
}

/// Decoding parameters for both generation stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub top_k: u32,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            top_k: 1,
            max_new_tokens: 3000,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), PrejudgeError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(PrejudgeError::InvalidParams(
                "temperature must be ≥ 0".into(),
            ));
        }
        if self.top_k == 0 || self.max_new_tokens == 0 {
            return Err(PrejudgeError::InvalidParams(
                "top_k and max_new_tokens must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn request(&self, prompt: impl Into<String>) -> GenerateRequest {
        GenerateRequest {
            prompt: prompt.into(),
            temperature: self.temperature,
            top_k: self.top_k,
            max_new_tokens: self.max_new_tokens,
        }
    }
}

fn render_block(
    charges: &IndexSet<String>,
    articles: &IndexSet<ArticleId>,
    term: &PrisonTerm,
    fine: &FineAmount,
) -> String {
    let charges = if charges.is_empty() {
        NONE_VALUE.to_string()
    } else {
        charges
            .iter()
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(";")
    };
    let articles = if articles.is_empty() {
        NONE_VALUE.to_string()
    } else {
        articles
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(";")
    };
    let term = term_phrase(term).unwrap_or_else(|| NONE_VALUE.into());
    let fine = match fine {
        FineAmount::Amount { cny } => cny.to_string(),
        other => fine_phrase(other).unwrap_or_else(|| NONE_VALUE.into()),
    };
    format!(
        "{FENCE}\n{CHARGES_LABEL}: {charges}\n{ARTICLES_LABEL}: {articles}\n{TERM_LABEL}: {term}\n{FINE_LABEL}: {fine}\n{FENCE}"
    )
}

/// The canonical block for a conclusion.
pub fn render_conclusion(c: &IntermediateConclusion) -> String {
    render_block(&c.charges, &c.articles, &c.term, &c.fine)
}

/// The canonical block for a precedent's elements.
pub fn render_elements_block(e: &CaseElements) -> String {
    render_block(&e.charges, &e.articles, &e.term, &e.fine)
}

/// `《law》第N条[第M款]`.
pub fn article_citation(id: &ArticleId) -> String {
    let mut s = format!(
        "《{}》第{}条",
        id.law(),
        format_chinese_numeral(u64::from(id.article()))
    );
    if let Some(sub) = id.sub() {
        s.push_str(&format!("第{}款", format_chinese_numeral(u64::from(sub))));
    }
    s
}

fn render_external_articles(a_ext: &[LawArticle]) -> String {
    if a_ext.is_empty() {
        return NO_EXTERNAL_ARTICLES.to_string();
    }
    a_ext
        .iter()
        .map(|a| format!("{}：{}", article_citation(&a.id()), a.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The analogy prompt: pending facts, precedent facts and elements, the
/// supplementary articles and the output format.
pub fn build_ice_prompt(
    fact: &str,
    e_case: &CaseElements,
    a_ext: &[LawArticle],
) -> Result<String, PrejudgeError> {
    Ok(ICE_TEMPLATE.render(&[
        ("fact", fact),
        ("precedent_fact", &e_case.fact),
        ("precedent_elements", &render_elements_block(e_case)),
        ("external_articles", &render_external_articles(a_ext)),
    ])?)
}

/// Bodies of every fenced block in `text`, in order.
fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find(FENCE) {
        let after = &rest[open + FENCE.len()..];
        // The rest of the opening line is an optional info string.
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        let Some(close) = body.find(FENCE) else {
            break;
        };
        out.push(&body[..close]);
        rest = &body[close + FENCE.len()..];
    }
    out
}

/// The fenced element block of the precedent section of an analogy prompt,
/// fences included.
pub fn precedent_block(prompt: &str) -> Option<String> {
    let section =
        &prompt[prompt.find(PRECEDENT_ELEMENTS_SECTION)? + PRECEDENT_ELEMENTS_SECTION.len()..];
    let section = match section.find("\n### ") {
        Some(end) => &section[..end],
        None => section,
    };
    fenced_blocks(section)
        .first()
        .map(|body| format!("{FENCE}\n{}{FENCE}", body))
}

fn labelled_value<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let rest = line.trim().strip_prefix(label)?;
    let rest = rest.trim_start().strip_prefix([':', '：'])?;
    Some(rest.trim())
}

fn parse_charges(value: &str) -> Result<IndexSet<String>, String> {
    let mut out = IndexSet::new();
    let mut pending = String::new();
    let mut rest = value;
    loop {
        let (piece, sep, next) = match rest.find(LIST_SEPARATORS) {
            Some(i) => {
                let sep = rest[i..].chars().next().expect("separator");
                (&rest[..i], Some(sep), &rest[i + sep.len_utf8()..])
            }
            None => (rest, None, ""),
        };
        pending.push_str(piece.trim());
        if pending.ends_with('罪') {
            out.insert(std::mem::take(&mut pending));
        } else if let Some(sep) = sep {
            // `、` may sit inside a label; other separators end one.
            if sep == '、' && !pending.is_empty() {
                pending.push(sep);
            } else if !pending.is_empty() {
                return Err(format!("{pending:?} is not a charge label"));
            }
        }
        if sep.is_none() {
            break;
        }
        rest = next;
    }
    if !pending.is_empty() {
        return Err(format!("{pending:?} is not a charge label"));
    }
    if out.is_empty() {
        return Err("no charge given".into());
    }
    if let Some(bad) = out.iter().find(|c| !valid_charge(c)) {
        return Err(format!("{bad:?} is not a charge label"));
    }
    Ok(out)
}

fn parse_articles(value: &str) -> Result<IndexSet<ArticleId>, String> {
    let mut out = IndexSet::new();
    if value.contains('《') {
        out.extend(extract_articles(value));
    } else {
        for item in value
            .split(LIST_SEPARATORS)
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            let id: ArticleId = item
                .parse()
                .map_err(|_| format!("{item:?} is not an article id"))?;
            out.insert(id);
        }
    }
    if out.is_empty() {
        return Err("no article given".into());
    }
    Ok(out)
}

/// Reads a term value: `无`, a number of months or a term phrase.
pub fn parse_term_value(value: &str) -> Result<PrisonTerm, String> {
    let value = value.trim();
    if value == NONE_VALUE || value == "免予刑事处罚" {
        return Ok(PrisonTerm::None);
    }
    if !value.is_empty() && value.chars().all(|c| c.is_ascii_digit()) {
        let months: u32 = value
            .parse()
            .map_err(|_| format!("{value:?} is out of range"))?;
        return if months > 0 {
            Ok(PrisonTerm::FixedTerm { months })
        } else {
            Ok(PrisonTerm::None)
        };
    }
    match extract_term(value) {
        PrisonTerm::None => Err(format!("{value:?} is not a prison term")),
        term => Ok(term),
    }
}

/// Reads a fine value: `无`, `没收个人全部财产`, or an amount with optional
/// `罚金`, `人民币` and `元` around an Arabic or Chinese number.
pub fn parse_fine_value(value: &str) -> Result<FineAmount, String> {
    let value = value.trim();
    if value == NONE_VALUE {
        return Ok(FineAmount::None);
    }
    if value.contains("没收个人全部财产") {
        return Ok(FineAmount::Confiscation);
    }
    let mut number = value;
    for prefix in ["并处", "单处", "罚金", "人民币"] {
        number = number.strip_prefix(prefix).unwrap_or(number);
    }
    let number: String = number
        .strip_suffix('元')
        .unwrap_or(number)
        .chars()
        .filter(|c| !matches!(c, ',' | '，'))
        .collect();
    match parse_chinese_numeral(&number) {
        Ok(0) => Ok(FineAmount::None),
        Ok(cny) => Ok(FineAmount::Amount { cny }),
        Err(_) => Err(format!("{value:?} is not a fine")),
    }
}

fn parse_fields(lines: &str) -> Result<IntermediateConclusion, String> {
    let mut fields: [Option<&str>; 4] = [None; 4];
    let labels = [CHARGES_LABEL, ARTICLES_LABEL, TERM_LABEL, FINE_LABEL];
    for line in lines.lines() {
        for (slot, label) in fields.iter_mut().zip(labels) {
            if slot.is_none() {
                if let Some(v) = labelled_value(line, label) {
                    *slot = Some(v);
                }
            }
        }
    }
    let get = |i: usize| fields[i].ok_or_else(|| format!("missing field {}", labels[i]));
    let conclusion = IntermediateConclusion {
        charges: parse_charges(get(0)?)?,
        articles: parse_articles(get(1)?)?,
        term: parse_term_value(get(2)?)?,
        fine: parse_fine_value(get(3)?)?,
        provenance: Provenance::Generated,
    };
    conclusion
        .check()
        .map_err(|(field, reason)| format!("{field}: {reason}"))?;
    Ok(conclusion)
}

/// The first well-formed conclusion block in `reply`. Without any fenced
/// block, labelled lines anywhere in the reply are accepted.
pub fn parse_conclusion(reply: &str) -> Result<IntermediateConclusion, PrejudgeError> {
    let blocks = fenced_blocks(reply);
    if blocks.is_empty() {
        return parse_fields(reply).map_err(PrejudgeError::ConclusionParse);
    }
    let mut first_err = None;
    for block in blocks {
        match parse_fields(block) {
            Ok(c) => return Ok(c),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(PrejudgeError::ConclusionParse(
        first_err.expect("at least one block"),
    ))
}

fn repair_prompt(prompt: &str, reason: &str) -> String {
    format!(
        "{prompt}\n\n{REPAIR_SECTION}\n上一次输出无法解析（{reason}）。请严格按照输出要求，只输出一个包含罪名、法条、刑期、罚金四行的代码块。\n"
    )
}

/// Generates and parses a conclusion, retrying once with a format reminder
/// when the first reply does not parse.
pub async fn emulate_conclusion(
    backend: &dyn GenerationBackend,
    prompt: &str,
    params: &GenerationParams,
) -> Result<IntermediateConclusion, PrejudgeError> {
    params.validate()?;
    let reply = backend.generate(&params.request(prompt)).await?;
    let reason = match parse_conclusion(&reply) {
        Ok(c) => return Ok(c),
        Err(PrejudgeError::ConclusionParse(reason)) => reason,
        Err(e) => return Err(e),
    };
    log::warn!("conclusion reply did not parse ({reason}); retrying once");
    let reply = backend
        .generate(&params.request(repair_prompt(prompt, &reason)))
        .await?;
    parse_conclusion(&reply)
}

/// A value that is either structured or written as text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TermEdit {
    Structured(PrisonTerm),
    Months(u32),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FineEdit {
    Structured(FineAmount),
    Yuan(u64),
    Text(String),
}

/// Field-level replacement of a conclusion. Absent fields are kept.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConclusionPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charges: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub articles: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term: Option<TermEdit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fine: Option<FineEdit>,
}

fn invalid(field: &str, reason: impl Into<String>) -> PrejudgeError {
    PrejudgeError::InvalidEdit {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Applies a reviewer's patch. The result is marked as human-edited and
/// satisfies the conclusion invariants.
pub fn apply_human_edit(
    base: &IntermediateConclusion,
    patch: &ConclusionPatch,
) -> Result<IntermediateConclusion, PrejudgeError> {
    let mut out = base.clone();
    out.provenance = Provenance::HumanEdited;
    if let Some(charges) = &patch.charges {
        let mut set = IndexSet::new();
        for c in charges {
            let c = c.trim();
            if !valid_charge(c) {
                return Err(invalid("charges", format!("{c:?} is not a charge label")));
            }
            set.insert(c.to_string());
        }
        out.charges = set;
    }
    if let Some(articles) = &patch.articles {
        let mut set = IndexSet::new();
        for a in articles {
            let parsed = parse_articles(a).map_err(|e| invalid("articles", e))?;
            set.extend(parsed);
        }
        out.articles = set;
    }
    if let Some(term) = &patch.term {
        out.term = match term {
            TermEdit::Structured(t) => *t,
            TermEdit::Months(0) => PrisonTerm::None,
            TermEdit::Months(m) => PrisonTerm::FixedTerm { months: *m },
            TermEdit::Text(s) => parse_term_value(s).map_err(|e| invalid("term", e))?,
        };
    }
    if let Some(fine) = &patch.fine {
        out.fine = match fine {
            FineEdit::Structured(f) => *f,
            FineEdit::Yuan(0) => FineAmount::None,
            FineEdit::Yuan(y) => FineAmount::Amount { cny: *y },
            FineEdit::Text(s) => parse_fine_value(s).map_err(|e| invalid("fine", e))?,
        };
    }
    out.check()
        .map_err(|(field, reason)| invalid(field, reason))?;
    Ok(out)
}
