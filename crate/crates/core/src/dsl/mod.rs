//! The `.csl` contract language: a keyword-led block grammar.
//!
//! ```text
//! contract RealEstateSale
//! party buyer role participant machine participant_m
//! machine participant_m {
//!   states Waiting Joined Signed Aborted
//!   init Waiting
//!   activity sign: Joined -> Signed when balance[self] >= price
//! }
//! shared price: int[0..100] = 10
//! event sign_msg(from party)
//! obligation ob3 for buyer:
//!   when received sign_msg from pm
//!   require state Joined do sign -> Signed
//! forbid (Aborted, Signed) over participants
//! ```
//!
//! [`render`] produces the canonical form; `parse(render(m)) == m` for every
//! valid model and rendering a parsed canonical file reproduces its bytes.

mod lexer;
mod parser;
mod render;

use std::fmt;
use std::path::PathBuf;

pub use parser::parse;
pub use render::render;

use crate::model::SourceSpan;

const KEYWORDS: &[&str] = &[
    "acceptance",
    "activity",
    "all",
    "and",
    "any",
    "conserve",
    "consideration",
    "contract",
    "description",
    "do",
    "emit",
    "event",
    "for",
    "forbid",
    "frame",
    "from",
    "in",
    "init",
    "insert",
    "int",
    "into",
    "legality",
    "machine",
    "manager",
    "move",
    "msgpool",
    "mutation",
    "not",
    "obligation",
    "offer",
    "on",
    "over",
    "participant",
    "participants",
    "party",
    "partyset",
    "received",
    "rejection",
    "require",
    "role",
    "self",
    "sender",
    "shared",
    "spontaneous",
    "state",
    "states",
    "sum",
    "then",
    "to",
    "transfer",
    "true",
    "unchanged",
    "upon",
    "when",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// `[A-Za-z_][A-Za-z0-9_]*` and not reserved.
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !is_keyword(s)
}

/// Quotes a string literal the way the lexer reads it back.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub file: Option<PathBuf>,
    pub span: SourceSpan,
    /// Tokens that would have been accepted at `span`.
    pub expected: Vec<String>,
    pub message: String,
}

impl ParseError {
    pub(crate) fn at(span: SourceSpan, message: String) -> Self {
        Self { file: None, span, expected: Vec::new(), message }
    }

    pub(crate) fn expected(span: SourceSpan, expected: Vec<String>, found: String) -> Self {
        let message = format!("expected {}, found {found}", expected.join(" or "));
        Self { file: None, span, expected, message }
    }

    pub(crate) fn with_expected(mut self, expected: Vec<String>) -> Self {
        self.expected = expected;
        self
    }

    pub(crate) fn with_message(mut self, message: String) -> Self {
        self.message = message;
        self
    }

    pub fn in_file(mut self, file: impl Into<PathBuf>) -> Self {
        self.file = Some(file.into());
        self
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{}:", file.display())?;
        }
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for ParseError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_needs_header() {
        let err = parse("").unwrap_err();
        assert_eq!(err.message, "expected 'contract' header");
        assert_eq!((err.span.line, err.span.column), (1, 1));
        assert_eq!(err.expected, vec!["'contract'".to_string()]);
    }

    #[test]
    fn unknown_keyword_is_reported() {
        let err = parse("contract X\nparty a role participant machine m\nwidget foo").unwrap_err();
        assert_eq!(err.message, "unknown keyword 'widget'");
        assert_eq!((err.span.line, err.span.column), (3, 1));
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = parse("contract X\nevent a\nevent a").unwrap_err();
        assert_eq!(err.message, "duplicate event 'a'");
        assert_eq!(err.span.line, 3);
    }

    #[test]
    fn keywords_cannot_name_things() {
        let err = parse("contract X\nparty state role participant machine m").unwrap_err();
        assert!(err.message.contains("reserved keyword 'state'"), "{}", err.message);
    }

    #[test]
    fn quote_escapes() {
        assert_eq!(quote("a\"b\\c"), "\"a\\\"b\\\\c\"");
        assert!(is_identifier("ob5") && !is_identifier("5ob") && !is_identifier("state"));
    }
}
