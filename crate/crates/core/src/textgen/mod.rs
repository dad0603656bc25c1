//! Serializing material features to text with per-feature character spans.
//!
//! Two formats are produced: the fixed `key: value` structured string and a
//! templated multi-sentence description. Every span is a half-open range of
//! *character* (Unicode scalar) offsets into the text.

mod annotate;
mod description;
mod format;
mod structured;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use annotate::annotate_description;
pub use description::to_description;
pub use format::{format_list_number, format_scalar};
pub use structured::{parse_structured_string, to_structured_string};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextFormat {
    Structured,
    Description,
}

impl FromStr for TextFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "structured" => Ok(TextFormat::Structured),
            "description" => Ok(TextFormat::Description),
            other => Err(Error::config(format!(
                "unknown text format `{other}` (expected structured or description)"
            ))),
        }
    }
}

impl std::fmt::Display for TextFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TextFormat::Structured => "structured",
            TextFormat::Description => "description",
        })
    }
}

/// Character range `[start, end)` attributed to one feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub feature: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedText {
    pub text: String,
    pub spans: Vec<Span>,
    pub format: TextFormat,
}

impl AnnotatedText {
    pub fn span(&self, feature: &str) -> Option<&Span> {
        self.spans.iter().find(|s| s.feature == feature)
    }

    /// The characters covered by `span`.
    pub fn slice(&self, span: &Span) -> String {
        self.text
            .chars()
            .skip(span.start)
            .take(span.end - span.start)
            .collect()
    }
}

/// Appends text while tracking the character count and recording spans.
pub(crate) struct SpanBuilder {
    text: String,
    chars: usize,
    spans: Vec<Span>,
}

impl SpanBuilder {
    pub(crate) fn new() -> Self {
        SpanBuilder {
            text: String::new(),
            chars: 0,
            spans: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, s: &str) {
        self.text.push_str(s);
        self.chars += s.chars().count();
    }

    pub(crate) fn mark(&mut self, feature: &str, s: &str) {
        let start = self.chars;
        self.push(s);
        self.spans.push(Span {
            feature: feature.to_string(),
            start,
            end: self.chars,
        });
    }

    pub(crate) fn position(&self) -> usize {
        self.chars
    }

    pub(crate) fn add_span(&mut self, feature: &str, start: usize) {
        self.spans.push(Span {
            feature: feature.to_string(),
            start,
            end: self.chars,
        });
    }

    pub(crate) fn finish(self, format: TextFormat) -> AnnotatedText {
        AnnotatedText {
            text: self.text,
            spans: self.spans,
            format,
        }
    }
}
