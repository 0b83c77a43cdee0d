//! Judgment synthesis: the writing prompt, segmentation of the generated
//! document, and a deterministic template writer whose output extracts back
//! to exactly the elements it was given.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, GenerationBackend};
use crate::corpus::{ArticleId, CaseDocument, CorpusError};
use crate::document::{segment, FACT_HEADER, REASONING_HEADER, RESULT_HEADER};
use crate::extractor::{
    extract_articles, extract_charges, extract_fine, extract_term, fine_phrase,
    first_defendant_scope, term_phrase, FineAmount,
};
use crate::numeral::format_chinese_numeral;
use crate::prejudge::{
    parse_conclusion, render_conclusion, GenerationParams, IntermediateConclusion, PrejudgeError,
    FACT_SECTION,
};
use crate::template::{Template, TemplateError};

pub const CONCLUSION_SECTION: &str = "### 预判结论";
pub const PRECEDENT_DOCUMENT_SECTION: &str = "### 类案判决书";
pub const TEMPLATE_SECTION: &str = "### 文书模板";
pub const DEFAULT_HEADING: &str = "刑事判决书";

const DOCUMENT_SLOTS: &[&str] = &["heading", "fact", "reasoning_skeleton", "result_skeleton"];

static JUS_TEMPLATE: LazyLock<Template> = LazyLock::new(|| {
    Template::new(
        "jus",
        include_str!("../templates/jus_prompt.txt"),
        &["fact", "conclusion", "precedent_document", "template"],
    )
    .expect("shipped prompt template is valid")
});

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WriterError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("invalid conclusion: {0}")]
    InvalidConclusion(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Prejudge(#[from] PrejudgeError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DocumentSource {
    Generated,
    TemplateFill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentDocument {
    pub heading: String,
    pub fact_section: String,
    pub reasoning: String,
    pub judgment_result: String,
    pub full_text: String,
    pub source: DocumentSource,
}

impl JudgmentDocument {
    /// Segments `text` on the section headers and checks that the result
    /// names at least one charge.
    pub fn from_text(text: &str, source: DocumentSource) -> Result<Self, WriterError> {
        let s = segment(text).map_err(|e| WriterError::MalformedDocument(e.to_string()))?;
        if extract_charges(first_defendant_scope(&s.judgment_result)).is_empty() {
            return Err(WriterError::MalformedDocument(
                "judgment result names no charge".into(),
            ));
        }
        Ok(Self {
            heading: s.heading,
            fact_section: s.fact,
            reasoning: s.reasoning,
            judgment_result: s.judgment_result,
            full_text: text.to_string(),
            source,
        })
    }

    pub fn to_case_document(&self, case_id: &str) -> Result<CaseDocument, CorpusError> {
        CaseDocument::new(
            case_id,
            self.heading.clone(),
            self.fact_section.clone(),
            self.reasoning.clone(),
            self.judgment_result.clone(),
        )
    }
}

/// Formal document layout with `{heading}`, `{fact}`, `{reasoning_skeleton}`
/// and `{result_skeleton}` placeholders. The body must contain the three
/// section headers in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentTemplate {
    template: Template,
}

impl DocumentTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Result<Self, WriterError> {
        let template = Template::new(name, body, DOCUMENT_SLOTS)?;
        let probe = template.render(&[
            ("heading", DEFAULT_HEADING),
            ("fact", "事实"),
            ("reasoning_skeleton", "理由"),
            ("result_skeleton", "结果"),
        ])?;
        match segment(&probe) {
            Ok(s) if s.fact == "事实" && s.reasoning == "理由" && s.judgment_result == "结果" => {
                Ok(Self { template })
            }
            _ => Err(WriterError::MalformedDocument(format!(
                "template {} must lay out {FACT_HEADER}, {REASONING_HEADER} and {RESULT_HEADER} around its placeholders",
                template.name()
            ))),
        }
    }

    pub fn name(&self) -> &str {
        self.template.name()
    }

    pub fn body(&self) -> &str {
        self.template.body()
    }

    fn render(&self, heading: &str, fact: &str, reasoning: &str, result: &str) -> String {
        self.template
            .render(&[
                ("heading", heading),
                ("fact", fact),
                ("reasoning_skeleton", reasoning),
                ("result_skeleton", result),
            ])
            .expect("all slots supplied")
    }
}

impl Default for DocumentTemplate {
    fn default() -> Self {
        Self::new("judgment", include_str!("../templates/judgment.txt"))
            .expect("shipped document template is valid")
    }
}

/// The writing prompt: pending facts, the conclusion block, the precedent
/// document and the document template.
pub fn build_jus_prompt(
    fact: &str,
    j_pre: &IntermediateConclusion,
    c_doc: &CaseDocument,
    template: &DocumentTemplate,
) -> Result<String, WriterError> {
    Ok(JUS_TEMPLATE.render(&[
        ("fact", fact),
        ("conclusion", &render_conclusion(j_pre)),
        ("precedent_document", c_doc.full_text()),
        ("template", template.body()),
    ])?)
}

/// Generates a document and segments it into sections.
pub async fn synthesize_document(
    backend: &dyn GenerationBackend,
    prompt: &str,
    params: &GenerationParams,
) -> Result<JudgmentDocument, WriterError> {
    params.validate()?;
    let text = backend.generate(&params.request(prompt)).await?;
    JudgmentDocument::from_text(text.trim(), DocumentSource::Generated)
}

/// `依照《刑法》第二百六十四条、第五十二条，《刑事诉讼法》第十五条的规定`,
/// with consecutive articles of one law grouped under one title.
fn citation_clause<'a>(articles: impl IntoIterator<Item = &'a ArticleId>) -> String {
    let mut groups: Vec<(&str, Vec<String>)> = Vec::new();
    for id in articles {
        let mut item = format!("第{}条", format_chinese_numeral(u64::from(id.article())));
        if let Some(sub) = id.sub() {
            item.push_str(&format!("第{}款", format_chinese_numeral(u64::from(sub))));
        }
        match groups.last_mut() {
            Some((law, items)) if *law == id.law() => items.push(item),
            _ => groups.push((id.law(), vec![item])),
        }
    }
    let cited: Vec<String> = groups
        .iter()
        .map(|(law, items)| format!("《{law}》{}", items.join("、")))
        .collect();
    format!("依照{}的规定", cited.join("，"))
}

fn reasoning_skeleton(j: &IntermediateConclusion) -> String {
    let charges: Vec<&str> = j.charges.iter().map(String::as_str).collect();
    format!(
        "被告人的行为已构成{}。{}，",
        charges.join("、"),
        citation_clause(&j.articles)
    )
}

fn result_skeleton(j: &IntermediateConclusion) -> String {
    let charges: Vec<&str> = j.charges.iter().map(String::as_str).collect();
    let sentence = match (term_phrase(&j.term), &j.fine) {
        (Some(term), FineAmount::None) => format!("判处{term}"),
        (Some(term), fine) => format!(
            "判处{term}，并处{}",
            fine_phrase(fine).expect("fine present")
        ),
        (None, fine @ FineAmount::Amount { .. }) => {
            format!("单处{}", fine_phrase(fine).expect("fine present"))
        }
        (None, FineAmount::Confiscation) => "判处没收个人全部财产".into(),
        (None, FineAmount::None) => "免予刑事处罚".into(),
    };
    format!("被告人犯{}，{sentence}。", charges.join("、"))
}

/// Deterministic document for `fact` and a conclusion. Extracting the
/// document yields exactly the conclusion's charges, articles, term and fine.
pub fn render_template(
    fact: &str,
    j: &IntermediateConclusion,
    template: &DocumentTemplate,
) -> Result<JudgmentDocument, WriterError> {
    j.check()
        .map_err(|(field, reason)| WriterError::InvalidConclusion(format!("{field}: {reason}")))?;
    let fact = fact.trim();
    if fact.is_empty() {
        return Err(WriterError::InvalidConclusion("fact is empty".into()));
    }
    let reasoning = reasoning_skeleton(j);
    let result = result_skeleton(j);
    let full_text = template.render(DEFAULT_HEADING, fact, &reasoning, &result);
    Ok(JudgmentDocument {
        heading: DEFAULT_HEADING.into(),
        fact_section: fact.into(),
        reasoning,
        judgment_result: result,
        full_text,
        source: DocumentSource::TemplateFill,
    })
}

fn section<'a>(prompt: &'a str, header: &str, next: &str) -> Option<&'a str> {
    let start = prompt.find(header)? + header.len();
    let end = prompt[start..]
        .find(next)
        .map_or(prompt.len(), |i| start + i);
    Some(prompt[start..end].trim())
}

/// Reply of the template-fill writer for a writing prompt: the facts and
/// the conclusion are read from the prompt and rendered with `template`.
pub fn template_fill_reply(prompt: &str, template: &DocumentTemplate) -> Result<String, String> {
    let fact =
        section(prompt, FACT_SECTION, CONCLUSION_SECTION).ok_or("prompt has no fact section")?;
    let block = section(prompt, CONCLUSION_SECTION, PRECEDENT_DOCUMENT_SECTION)
        .ok_or("prompt has no conclusion section")?;
    let j = parse_conclusion(block).map_err(|e| e.to_string())?;
    render_template(fact, &j, template)
        .map(|d| d.full_text)
        .map_err(|e| e.to_string())
}

/// Rewrites the reasoning and result sections when the document departs
/// from the conclusion. Used only when strict mode is enabled.
pub fn enforce_conclusion(doc: &JudgmentDocument, j: &IntermediateConclusion) -> JudgmentDocument {
    let scope = first_defendant_scope(&doc.judgment_result);
    let result_ok = extract_charges(scope) == j.charges
        && extract_term(scope) == j.term
        && extract_fine(scope) == j.fine;
    let mut cited = extract_articles(&doc.reasoning);
    cited.extend(extract_articles(&doc.judgment_result));
    let articles_ok = cited == j.articles;
    if result_ok && articles_ok {
        return doc.clone();
    }
    let reasoning = reasoning_skeleton(j);
    let judgment_result = result_skeleton(j);
    let full_text = crate::document::assemble_full_text(
        &doc.heading,
        &doc.fact_section,
        &reasoning,
        &judgment_result,
    );
    JudgmentDocument {
        heading: doc.heading.clone(),
        fact_section: doc.fact_section.clone(),
        reasoning,
        judgment_result,
        full_text,
        source: doc.source,
    }
}
