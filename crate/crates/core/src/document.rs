//! Section layout of a criminal judgment document.
//!
//! A document is `heading`, then the fact section introduced by
//! [`FACT_HEADER`], the reasoning introduced by [`REASONING_HEADER`] and the
//! judgment result introduced by [`RESULT_HEADER`]. Generated documents are
//! segmented on these headers, so they are part of the document contract.

use thiserror::Error;

pub const FACT_HEADER: &str = "经审理查明";
pub const REASONING_HEADER: &str = "本院认为";
pub const RESULT_HEADER: &str = "判决如下";

/// Punctuation that may directly follow a header.
const HEADER_TRAILERS: &[char] = &['，', ',', '：', ':', '。'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SegmentError {
    #[error("missing section header {0}")]
    MissingHeader(&'static str),
    #[error("section after {0} is empty")]
    EmptySection(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sections {
    pub heading: String,
    pub fact: String,
    pub reasoning: String,
    pub judgment_result: String,
}

/// Joins sections in the canonical layout. The default document template
/// renders exactly this layout.
pub fn assemble_full_text(heading: &str, fact: &str, reasoning: &str, result: &str) -> String {
    format!("{heading}\n{FACT_HEADER}，{fact}\n{REASONING_HEADER}，{reasoning}\n{RESULT_HEADER}：\n{result}")
}

fn skip_trailer(s: &str) -> &str {
    let s = s.trim_start();
    let s = s.strip_prefix(HEADER_TRAILERS).unwrap_or(s);
    s.trim_start()
}

/// Splits a full document on the three section headers, taking the first
/// occurrence of each header after the previous one.
pub fn segment(text: &str) -> Result<Sections, SegmentError> {
    let fact_at = text
        .find(FACT_HEADER)
        .ok_or(SegmentError::MissingHeader(FACT_HEADER))?;
    let after_fact = fact_at + FACT_HEADER.len();
    let reasoning_at = text[after_fact..]
        .find(REASONING_HEADER)
        .map(|i| i + after_fact)
        .ok_or(SegmentError::MissingHeader(REASONING_HEADER))?;
    let after_reasoning = reasoning_at + REASONING_HEADER.len();
    let result_at = text[after_reasoning..]
        .find(RESULT_HEADER)
        .map(|i| i + after_reasoning)
        .ok_or(SegmentError::MissingHeader(RESULT_HEADER))?;
    let after_result = result_at + RESULT_HEADER.len();

    let fact = skip_trailer(&text[after_fact..reasoning_at]).trim_end();
    let reasoning = skip_trailer(&text[after_reasoning..result_at]).trim_end();
    let result = skip_trailer(&text[after_result..]).trim_end();
    if fact.is_empty() {
        return Err(SegmentError::EmptySection(FACT_HEADER));
    }
    if result.is_empty() {
        return Err(SegmentError::EmptySection(RESULT_HEADER));
    }
    Ok(Sections {
        heading: text[..fact_at].trim().to_string(),
        fact: fact.to_string(),
        reasoning: reasoning.to_string(),
        judgment_result: result.to_string(),
    })
}
