//! Minimal `{placeholder}` templates.
//!
//! A placeholder is `{` + lowercase ASCII identifier + `}`; any other brace is
//! literal text. Substituted values are never re-scanned, so user text that
//! happens to contain `{fact}` is inserted verbatim.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template {template} is missing placeholder {{{name}}}")]
    MissingPlaceholder { template: String, name: String },
    #[error("template {template} repeats placeholder {{{name}}}")]
    DuplicatePlaceholder { template: String, name: String },
    #[error("template {template} has unknown placeholder {{{name}}}")]
    UnknownPlaceholder { template: String, name: String },
    #[error("no value supplied for {{{name}}}")]
    MissingValue { name: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    name: String,
    body: String,
    segments: Vec<Segment>,
}

fn scan(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let ident_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        if ident_len > 0 && after[ident_len..].starts_with('}') {
            literal.push_str(&rest[..open]);
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(&mut literal)));
            }
            segments.push(Segment::Slot(after[..ident_len].to_string()));
            rest = &after[ident_len + 1..];
        } else {
            literal.push_str(&rest[..=open]);
            rest = after;
        }
    }
    literal.push_str(rest);
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    segments
}

impl Template {
    /// Parses `body`, requiring each of `slots` to appear exactly once and no
    /// other placeholder to appear.
    pub fn new(
        name: impl Into<String>,
        body: impl Into<String>,
        slots: &[&str],
    ) -> Result<Self, TemplateError> {
        let name = name.into();
        let body = body.into();
        let segments = scan(&body);
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for seg in &segments {
            if let Segment::Slot(slot) = seg {
                if !slots.contains(&slot.as_str()) {
                    return Err(TemplateError::UnknownPlaceholder {
                        template: name,
                        name: slot.clone(),
                    });
                }
                *counts.entry(slot.as_str()).or_default() += 1;
            }
        }
        for slot in slots {
            match counts.get(slot).copied().unwrap_or(0) {
                0 => {
                    return Err(TemplateError::MissingPlaceholder {
                        template: name,
                        name: slot.to_string(),
                    })
                }
                1 => {}
                _ => {
                    return Err(TemplateError::DuplicatePlaceholder {
                        template: name,
                        name: slot.to_string(),
                    })
                }
            }
        }
        Ok(Self {
            name,
            body,
            segments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot(slot) => {
                    let value = values
                        .iter()
                        .find(|(k, _)| k == slot)
                        .map(|(_, v)| *v)
                        .ok_or_else(|| TemplateError::MissingValue { name: slot.clone() })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}
