//! Rule-based extraction of judgment elements from Chinese criminal
//! judgments.
//!
//! | element  | pattern                                                        |
//! |----------|----------------------------------------------------------------|
//! | article  | `《<law>》第<n>条[第<m>款]`, further `第…条` items joined by `、，,及和以及` |
//! | charge   | `犯<label>罪`, further labels joined by `、和及`                  |
//! | term     | `有期徒刑[<y>年][<m>个月]`, `拘役<m>个月`, `无期徒刑`, `死刑`       |
//! | fine     | `罚金[人民币]<n>元`, `没收个人全部财产`                          |
//!
//! Term and fine prefer the combined sentence after `决定执行` when the
//! judgment has several counts; otherwise the first match wins. Only the
//! first named defendant's outcome is extracted.

use std::sync::LazyLock;

use indexmap::IndexSet;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ArticleId, CaseDocument};
use crate::numeral::{format_chinese_numeral, parse_chinese_numeral, NUMERAL_CHARS};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("extraction of case {case_id} is incomplete: no {field} found")]
    ExtractionIncomplete {
        case_id: String,
        field: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PrisonTerm {
    FixedTerm { months: u32 },
    Detention { months: u32 },
    Life,
    Death,
    None,
}

impl PrisonTerm {
    /// Months for the scalar kinds, zero otherwise.
    pub fn months(&self) -> u32 {
        match self {
            PrisonTerm::FixedTerm { months } | PrisonTerm::Detention { months } => *months,
            _ => 0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            PrisonTerm::FixedTerm { .. } => "FixedTerm",
            PrisonTerm::Detention { .. } => "Detention",
            PrisonTerm::Life => "Life",
            PrisonTerm::Death => "Death",
            PrisonTerm::None => "None",
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            PrisonTerm::FixedTerm { months } | PrisonTerm::Detention { months } => *months > 0,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FineAmount {
    Amount { cny: u64 },
    None,
    Confiscation,
}

impl FineAmount {
    pub fn cny(&self) -> u64 {
        match self {
            FineAmount::Amount { cny } => *cny,
            _ => 0,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FineAmount::Amount { .. } => "Amount",
            FineAmount::None => "None",
            FineAmount::Confiscation => "Confiscation",
        }
    }

    pub fn is_valid(&self) -> bool {
        !matches!(self, FineAmount::Amount { cny: 0 })
    }
}

/// Elements extracted from one judgment: fact, charges, cited articles,
/// prison term and fine. Set fields compare as sets and keep document order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseElements {
    pub case_id: String,
    pub fact: String,
    pub charges: IndexSet<String>,
    pub articles: IndexSet<ArticleId>,
    pub term: PrisonTerm,
    pub fine: FineAmount,
}

static ARTICLE_GROUP: LazyLock<Regex> = LazyLock::new(|| {
    let n = format!("[{NUMERAL_CHARS}]+");
    Regex::new(&format!(
        r"《([^《》]+)》((?:第{n}条(?:第{n}款)?(?:以及|[、，,及和])?)+)"
    ))
    .expect("article pattern")
});

static ARTICLE_ITEM: LazyLock<Regex> = LazyLock::new(|| {
    let n = format!("[{NUMERAL_CHARS}]+");
    Regex::new(&format!(r"第({n})条(?:第({n})款)?")).expect("article item pattern")
});

static CHARGE_RUN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r#"犯([^犯，。；,;：:\s（）()《》“”"]{2,160})"#).expect("charge pattern")
});

static TERM: LazyLock<Regex> = LazyLock::new(|| {
    let n = format!("[{NUMERAL_CHARS}]+");
    Regex::new(&format!(
        r"有期徒刑(?:(?P<years>{n})年)?(?:(?P<months>{n})个?月)?|拘役(?P<detention>{n})个?月|(?P<life>无期徒刑)|(?P<death>死刑)"
    ))
    .expect("term pattern")
});

static FINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(&format!(
        r"罚金(?:人民币)?(?P<amount>[{NUMERAL_CHARS},，]+)元|(?P<confiscation>没收个人全部财产)"
    ))
    .expect("fine pattern")
});

static DEFENDANT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"被告人([^\s，,。：:；;、犯（）()]{1,12}?)犯").expect("defendant pattern")
});

const COMBINED_SENTENCE: &str = "决定执行";

/// Trims and maps full-width ASCII forms to half-width.
pub fn canonicalize_label(label: &str) -> String {
    label
        .trim()
        .chars()
        .map(|c| match c {
            '\u{3000}' => ' ',
            '\u{FF01}'..='\u{FF5E}' => char::from_u32(c as u32 - 0xFEE0).unwrap_or(c),
            _ => c,
        })
        .collect::<String>()
        .trim()
        .to_string()
}

/// Every article cited as `《law》第…条`, in order of first citation.
pub fn extract_articles(text: &str) -> IndexSet<ArticleId> {
    let mut out = IndexSet::new();
    for group in ARTICLE_GROUP.captures_iter(text) {
        let law = &group[1];
        for item in ARTICLE_ITEM.captures_iter(&group[2]) {
            let Ok(article) = parse_chinese_numeral(&item[1]) else {
                continue;
            };
            let sub = item
                .get(2)
                .and_then(|m| parse_chinese_numeral(m.as_str()).ok());
            let (Ok(article), Ok(sub)) =
                (u32::try_from(article), sub.map(u32::try_from).transpose())
            else {
                continue;
            };
            if let Ok(id) = ArticleId::new(law, article, sub) {
                out.insert(id);
            }
        }
    }
    out
}

/// Charge labels introduced by `犯`, each ending in `罪`.
pub fn extract_charges(text: &str) -> IndexSet<String> {
    let mut out = IndexSet::new();
    for run in CHARGE_RUN.captures_iter(text) {
        let body = &run[1];
        let mut pending = String::new();
        for (piece, sep) in split_keep_separators(body) {
            if let Some(pos) = piece.find('罪') {
                let end = pos + '罪'.len_utf8();
                pending.push_str(&piece[..end]);
                let label = canonicalize_label(&pending);
                if label.chars().count() >= 2 {
                    out.insert(label);
                }
                pending.clear();
                if end < piece.len() {
                    // Text continues past the label: the enumeration is over.
                    break;
                }
            } else {
                pending.push_str(piece);
                if let Some(sep) = sep {
                    pending.push_str(sep);
                }
            }
        }
    }
    out
}

fn split_keep_separators(s: &str) -> Vec<(&str, Option<&str>)> {
    let mut out = Vec::new();
    let mut rest = s;
    loop {
        let next = ['、', '和', '及']
            .iter()
            .filter_map(|c| rest.find(*c).map(|i| (i, c.len_utf8())))
            .min();
        match next {
            Some((i, len)) => {
                out.push((&rest[..i], Some(&rest[i..i + len])));
                rest = &rest[i + len..];
            }
            None => {
                out.push((rest, None));
                return out;
            }
        }
    }
}

/// The text after the last `决定执行`, if any.
fn combined_sentence(text: &str) -> Option<&str> {
    text.rfind(COMBINED_SENTENCE)
        .map(|i| &text[i + COMBINED_SENTENCE.len()..])
}

fn first_term(text: &str) -> Option<PrisonTerm> {
    for caps in TERM.captures_iter(text) {
        if caps.name("life").is_some() {
            return Some(PrisonTerm::Life);
        }
        if caps.name("death").is_some() {
            return Some(PrisonTerm::Death);
        }
        if let Some(d) = caps.name("detention") {
            match parse_chinese_numeral(d.as_str())
                .ok()
                .and_then(|v| u32::try_from(v).ok())
            {
                Some(months) if months > 0 => return Some(PrisonTerm::Detention { months }),
                _ => continue,
            }
        }
        let years = caps
            .name("years")
            .map(|m| parse_chinese_numeral(m.as_str()));
        let months = caps
            .name("months")
            .map(|m| parse_chinese_numeral(m.as_str()));
        if years.is_none() && months.is_none() {
            continue;
        }
        let (Ok(years), Ok(months)) = (years.transpose(), months.transpose()) else {
            continue;
        };
        let total = years.unwrap_or(0) * 12 + months.unwrap_or(0);
        if let Ok(months) = u32::try_from(total) {
            if months > 0 {
                return Some(PrisonTerm::FixedTerm { months });
            }
        }
    }
    None
}

/// The sentenced prison term. Years convert at twelve months each.
pub fn extract_term(text: &str) -> PrisonTerm {
    combined_sentence(text)
        .and_then(first_term)
        .or_else(|| first_term(text))
        .unwrap_or(PrisonTerm::None)
}

fn first_fine(text: &str) -> Option<FineAmount> {
    for caps in FINE.captures_iter(text) {
        if caps.name("confiscation").is_some() {
            return Some(FineAmount::Confiscation);
        }
        if let Some(m) = caps.name("amount") {
            let digits: String = m
                .as_str()
                .chars()
                .filter(|c| !matches!(c, ',' | '，'))
                .collect();
            match parse_chinese_numeral(&digits) {
                Ok(cny) if cny > 0 => return Some(FineAmount::Amount { cny }),
                _ => continue,
            }
        }
    }
    None
}

pub fn extract_fine(text: &str) -> FineAmount {
    combined_sentence(text)
        .and_then(first_fine)
        .or_else(|| first_fine(text))
        .unwrap_or(FineAmount::None)
}

/// The sentence phrase for a term, in the form [`extract_term`] reads back.
pub fn term_phrase(term: &PrisonTerm) -> Option<String> {
    match *term {
        PrisonTerm::FixedTerm { months } => {
            let (y, m) = (months / 12, months % 12);
            let mut s = "有期徒刑".to_string();
            if y > 0 {
                s.push_str(&format_chinese_numeral(u64::from(y)));
                s.push('年');
            }
            if m > 0 {
                s.push_str(&format_chinese_numeral(u64::from(m)));
                s.push_str("个月");
            }
            Some(s)
        }
        PrisonTerm::Detention { months } => Some(format!(
            "拘役{}个月",
            format_chinese_numeral(u64::from(months))
        )),
        PrisonTerm::Life => Some("无期徒刑".into()),
        PrisonTerm::Death => Some("死刑".into()),
        PrisonTerm::None => None,
    }
}

/// The sentence phrase for a fine, in the form [`extract_fine`] reads back.
pub fn fine_phrase(fine: &FineAmount) -> Option<String> {
    match *fine {
        FineAmount::Amount { cny } => Some(format!("罚金人民币{}元", format_chinese_numeral(cny))),
        FineAmount::Confiscation => Some("没收个人全部财产".into()),
        FineAmount::None => None,
    }
}

/// Distinct defendant names in order of appearance (`被告人<name>犯…`).
pub fn defendant_names(text: &str) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for caps in DEFENDANT.captures_iter(text) {
        let name = caps[1].to_string();
        if !names.contains(&name) {
            names.push(name);
        }
    }
    names
}

/// The part of a judgment result that concerns the first named defendant.
pub fn first_defendant_scope(text: &str) -> &str {
    let mut first: Option<&str> = None;
    for caps in DEFENDANT.captures_iter(text) {
        let name = caps.get(1).expect("group").as_str();
        match first {
            None => first = Some(name),
            Some(f) if f != name => {
                return &text[..caps.get(0).expect("match").start()];
            }
            _ => {}
        }
    }
    text
}

/// Extracts the element tuple of a judgment. Charges, term and fine come from
/// the judgment result; articles from reasoning and result.
pub fn extract_elements(doc: &CaseDocument) -> Result<CaseElements, ExtractError> {
    let scope = first_defendant_scope(&doc.judgment_result);
    let charges = extract_charges(scope);
    if charges.is_empty() {
        return Err(ExtractError::ExtractionIncomplete {
            case_id: doc.case_id.clone(),
            field: "charges",
        });
    }
    let mut articles = extract_articles(&doc.reasoning);
    articles.extend(extract_articles(&doc.judgment_result));
    Ok(CaseElements {
        case_id: doc.case_id.clone(),
        fact: doc.fact.clone(),
        charges,
        articles,
        term: extract_term(scope),
        fine: extract_fine(scope),
    })
}
