use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::engine::{edge_violations, Analysis};
use crate::model::{
    classify_edge_category, Category, DependencyEdge, DiagCode, Diagnostic, NodeId,
};
use crate::reach::PredecessorSet;

/// One edge as the model wrote it. The category is advisory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEdge {
    pub source: String,
    pub data: String,
    pub target: String,
    #[serde(default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmEdgeResponse {
    pub edges: Vec<RawEdge>,
    pub raw: String,
}

#[derive(Deserialize)]
struct Wrapped {
    edges: Vec<RawEdge>,
}

fn conforming(value: Value) -> Option<Vec<RawEdge>> {
    match value {
        Value::Array(_) => serde_json::from_value(value).ok(),
        Value::Object(ref map) if map.contains_key("edges") => {
            serde_json::from_value::<Wrapped>(value).ok().map(|w| w.edges)
        }
        _ => None,
    }
}

/// Finds the first JSON object or array in `text` that matches the edge
/// schema, skipping prose, code fences and non-conforming JSON.
pub fn extract_edges(text: &str) -> Option<Vec<RawEdge>> {
    for (i, c) in text.char_indices() {
        if c != '{' && c != '[' {
            continue;
        }
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        if let Some(Ok(value)) = stream.next() {
            if let Some(edges) = conforming(value) {
                return Some(edges);
            }
        }
    }
    None
}

pub fn format_error(text: &str) -> Diagnostic {
    Diagnostic::new(
        DiagCode::ResponseFormat,
        format!("response holds no edge list matching the schema; raw response: {text}"),
    )
}

/// Parses and validates a model response for `target`.
///
/// An edge is kept when its target is `target`, its source is in
/// `context`, the node kinds are admissible, the source produces the data
/// and the target consumes it. Its category is recomputed locally. Every
/// other edge is dropped with `E_EDGE_CONSTRAINT`.
pub fn parse_response(
    analysis: &Analysis<'_>,
    text: &str,
    target: &NodeId,
    context: &PredecessorSet,
) -> Result<(Vec<DependencyEdge>, Vec<Diagnostic>), Diagnostic> {
    let raw = extract_edges(text).ok_or_else(|| format_error(text))?;
    let mut edges: Vec<DependencyEdge> = Vec::new();
    let mut diagnostics = Vec::new();
    for r in raw {
        let label = format!("({}, {}, {})", r.source, r.data, r.target);
        let reject = |why: String| {
            Diagnostic::new(DiagCode::EdgeConstraint, format!("edge {label} dropped: {why}"))
                .at(target.clone())
                .entity(r.data.clone())
        };
        if r.target != target.as_str() {
            diagnostics.push(reject(format!("target is not `{target}`")));
            continue;
        }
        if !context.contains(&r.source) {
            diagnostics.push(reject(format!("`{}` is not in P({target})", r.source)));
            continue;
        }
        let source = NodeId::new(r.source.clone());
        let category = match classify_edge_category(&source, &r.data, target, analysis.usecase, analysis.document) {
            Ok((c, warning)) => {
                if let Some(w) = warning {
                    if !diagnostics.contains(&w) {
                        diagnostics.push(w);
                    }
                }
                c
            }
            Err(_) => {
                diagnostics.push(reject(format!("`{target}` does not consume `{}`", r.data)));
                continue;
            }
        };
        let edge = DependencyEdge::new(source, r.data.clone(), target.clone(), category);
        let problems = edge_violations(&edge, analysis);
        if !problems.is_empty() {
            diagnostics.push(reject(problems.join("; ")));
            continue;
        }
        if !edges.contains(&edge) {
            edges.push(edge);
        }
    }
    Ok((edges, diagnostics))
}

/// Category label as the model wrote it, if it names a known category.
pub fn advisory_category(edge: &RawEdge) -> Option<Category> {
    edge.category.as_deref().and_then(|c| c.parse().ok())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esd::parse_document;

    #[test]
    fn extraction_tolerates_prose_and_fences() {
        let text = "Thinking...\n```json\n{\"edges\": [{\"source\": \"a\", \"data\": \"x\", \"target\": \"b\", \"category\": \"api\"}]}\n```";
        assert_eq!(extract_edges(text).unwrap().len(), 1);
        let bare = "[{\"source\":\"a\",\"data\":\"x\",\"target\":\"b\"}]";
        assert_eq!(extract_edges(bare).unwrap()[0].category, None);
        let nested = "{\"note\": [1, 2], \"result\": {\"edges\": []}}";
        assert_eq!(extract_edges(nested), Some(vec![]));
        assert_eq!(extract_edges("not json at all"), None);
        assert_eq!(extract_edges("{\"edges\": 3}"), None);
        assert_eq!(extract_edges("{ broken"), None);
    }

    #[test]
    fn validation() {
        let doc = parse_document(include_str!("../../fixtures/demo.esd")).unwrap();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let ctx = a.predecessors("m2").unwrap();
        let m2 = NodeId::new("m2");
        let ok = r#"[{"source":"@input","data":"user_id","target":"m2","category":"condition"}]"#;
        let (edges, diags) = parse_response(&a, ok, &m2, ctx).unwrap();
        assert_eq!(edges, [DependencyEdge::new("@input", "user_id", "m2", Category::Api)]);
        assert!(diags.is_empty());

        let bad = r#"{"edges":[
            {"source":"r_err","data":"user_id","target":"m2","category":"api"},
            {"source":"m1","data":"balance","target":"m2","category":"api"},
            {"source":"m1","data":"user_id","target":"m2","category":"api"},
            {"source":"@input","data":"amount","target":"m1","category":"api"}
        ]}"#;
        let (edges, diags) = parse_response(&a, bad, &m2, ctx).unwrap();
        assert!(edges.is_empty());
        assert_eq!(diags.len(), 4);
        assert!(diags.iter().all(|d| d.code == DiagCode::EdgeConstraint));

        let err = parse_response(&a, "not json at all", &m2, ctx).unwrap_err();
        assert_eq!(err.code, DiagCode::ResponseFormat);
        assert!(err.message.contains("not json at all"));
    }
}
