//! The ESD text format: a block-structured encoding of enhanced sequence
//! diagrams together with their API specifications and decision tables.
//!
//! ```text
//! usecase "Demo" {
//!   input {
//!     field user_id: uint64
//!   }
//!   participant a
//!   participant b
//!   message m1 from a to b api "QueryAccount"
//!   return r_ok {
//!     field balance: int64
//!   }
//! }
//! ```
//!
//! Fragment nesting in the text is the containment relation between
//! interaction fragments and the elements drawn inside them.

mod lexer;
mod parser;
mod printer;
mod rules;

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::model::{DiagCode, Diagnostic, Document, NodeId};

pub use lexer::Pos;
pub use rules::check_design_rules;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(pos: Pos, expected: impl Into<String>, found: impl Into<String>) -> Self {
        ParseError {
            line: pos.line,
            column: pos.column,
            expected: expected.into(),
            found: found.into(),
        }
    }
}

/// Why a source text did not produce a [`Document`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    /// The text does not match the grammar.
    Syntax(Vec<ParseError>),
    /// The text is well-formed but references or definitions do not line up.
    Unresolved(Vec<Diagnostic>),
}

impl ParseFailure {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            ParseFailure::Syntax(errs) => errs
                .iter()
                .map(|e| Diagnostic::new(DiagCode::Parse, e.to_string()))
                .collect(),
            ParseFailure::Unresolved(diags) => diags.clone(),
        }
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let diags = self.diagnostics();
        for (i, d) in diags.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseFailure {}

/// Source extent of one element, from its keyword to its last token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SourceSpan {
    pub start: Pos,
    pub end: Pos,
}

impl SourceSpan {
    pub fn lines(&self) -> (usize, usize) {
        (self.start.line, self.end.line)
    }

    /// Strict containment: `other` starts after and ends before `self`.
    pub fn strictly_contains(&self, other: &SourceSpan) -> bool {
        self.start < other.start && other.end < self.end
    }
}

/// Element spans, one map per use case in document order.
pub type SpanTable = Vec<BTreeMap<NodeId, SourceSpan>>;

pub fn parse_document(text: &str) -> Result<Document, ParseFailure> {
    parser::parse(text).map(|(doc, _)| doc)
}

pub fn parse_document_with_spans(text: &str) -> Result<(Document, SpanTable), ParseFailure> {
    parser::parse(text)
}

/// Reads and parses a file, recording its path on the document.
pub fn parse_file(path: &std::path::Path) -> std::io::Result<Result<Document, ParseFailure>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_document(&text).map(|mut doc| {
        doc.source_path = path.display().to_string();
        doc
    }))
}

/// Canonical text: two-space indent, one statement per line, use cases
/// then apis then tables, each in declaration order.
pub fn serialize_document(doc: &Document) -> String {
    printer::print(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ApiSpec, Element, NodeKind};

    const DEMO: &str = include_str!("../../fixtures/demo.esd");

    #[test]
    fn demo_parses() {
        let doc = parse_document(DEMO).unwrap();
        assert_eq!(doc.usecases.len(), 1);
        assert_eq!(doc.apis.len(), 2);
        assert_eq!(doc.tables.len(), 1);
        let uc = &doc.usecases[0];
        assert_eq!(uc.name, "Demo");
        let ids: Vec<String> = uc.node_ids().iter().map(|n| n.to_string()).collect();
        assert_eq!(ids, ["@input", "m1", "f1", "r_err", "m2", "r_ok"]);
        assert_eq!(uc.node_kind("r_err").unwrap(), NodeKind::Output);
        let Some(Element::Message(m1)) = uc.element("m1") else {
            panic!("m1 is a message")
        };
        assert_eq!(m1.api, "QueryAccount");
        let rule = &doc.tables["t1"].rules[0];
        assert_eq!(rule.condition_reads, ["account_status"]);
        assert!(rule.action_writes.is_empty());
    }

    #[test]
    fn compact_fixture_text_parses() {
        // Single-line layout as written in design notes.
        let text = r#"usecase "Demo" { input { field user_id: uint64  field amount: int64 }
          participant a  participant b  participant c
          message m1 from a to b api "QueryAccount"
          alt f1 tables [t1] {
            branch "frozen" { return r_err { field result_code: int32 } }
            branch "active" { message m2 from a to c api "Debit" } }
          return r_ok { field new_balance: int64 } }
        api "QueryAccount" { description "query account" request { field user_id: uint64 } response { field account_status: string  field balance: int64 } }
        api "Debit" { description "debit funds" request { field user_id: uint64  field amount: int64 } response { field new_balance: int64 } }
        table t1 { rule { when "account_status == FROZEN" reads [account_status] then "take frozen branch" } }"#;
        assert_eq!(parse_document(text).unwrap(), parse_document(DEMO).unwrap());
    }

    #[test]
    fn empty_input_is_an_error_at_origin() {
        let ParseFailure::Syntax(errs) = parse_document("").unwrap_err() else {
            panic!("syntax error expected")
        };
        assert_eq!((errs[0].line, errs[0].column), (1, 1));
        assert!(errs[0].expected.contains("usecase"));
        assert_eq!(errs[0].found, "end of input");
    }

    #[test]
    fn unresolved_api() {
        let text = DEMO.replace("api \"Debit\" {", "api \"Other\" {");
        let ParseFailure::Unresolved(diags) = parse_document(&text).unwrap_err() else {
            panic!("resolution error expected")
        };
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::Parse);
        assert!(diags[0].message.ends_with("unresolved api Debit"), "{}", diags[0].message);
        let text = DEMO.replace("to c api \"Debit\"", "to c api \"Missing\"");
        let failure = parse_document(&text).unwrap_err();
        assert!(failure.to_string().contains("unresolved api Missing"));
    }

    #[test]
    fn unresolved_table_and_duplicates() {
        let text = DEMO.replace("tables [t1]", "tables [t1, t9]");
        let diags = parse_document(&text).unwrap_err().diagnostics();
        assert!(diags[0].message.contains("unresolved table t9"));

        let text = DEMO.replace("message m2", "message m1");
        let ParseFailure::Syntax(errs) = parse_document(&text).unwrap_err() else {
            panic!()
        };
        assert_eq!(errs[0].expected, "unique node id");
        assert_eq!(errs[0].line, 18);
    }

    #[test]
    fn round_trip_demo() {
        let doc = parse_document(DEMO).unwrap();
        let text = serialize_document(&doc);
        assert_eq!(parse_document(&text).unwrap(), doc);
        assert_eq!(serialize_document(&parse_document(&text).unwrap()), text);
    }

    #[test]
    fn api_only_document() {
        let mut doc = crate::model::Document::default();
        doc.apis.insert(
            "Ping".into(),
            ApiSpec {
                name: "Ping".into(),
                description: "ping".into(),
                request: vec![],
                response: vec![],
            },
        );
        let text = serialize_document(&doc);
        assert!(text.starts_with("api \"Ping\" {"));
        assert!(!text.contains("usecase") && !text.contains("table"));
        assert_eq!(parse_document(&text).unwrap(), doc);
    }

    #[test]
    fn demo_spans_nest() {
        let (doc, spans) = parse_document_with_spans(DEMO).unwrap();
        let spans = &spans[0];
        assert_eq!(spans.len(), doc.usecases[0].node_count() - 1);
        assert_eq!(spans[&NodeId::from("m1")].lines(), (10, 10));
        assert_eq!(spans[&NodeId::from("f1")].lines(), (11, 20));
        assert!(spans[&NodeId::from("f1")].strictly_contains(&spans[&NodeId::from("r_err")]));
        assert!(spans[&NodeId::from("f1")].strictly_contains(&spans[&NodeId::from("m2")]));
    }

    #[test]
    fn syntax_error_positions() {
        let err = parse_document("usecase \"X\" {\n  input {}\n  message m1\n}").unwrap_err();
        let ParseFailure::Syntax(errs) = err else { panic!() };
        assert_eq!(errs[0].line, 3);
        assert_eq!(errs[0].expected, "`participant`");
    }
}
