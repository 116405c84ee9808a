//! DOT and JSON renderings of execution and data dependency graphs.

use std::fmt::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edg::ExecutionDependencyGraph;
use crate::engine::DataDependencyGraph;
use crate::model::{Category, Diagnostic, FragmentKind, NodeId, NodeKind};

/// Version stamped on every JSON payload.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphFormat {
    Dot,
    Json,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown graph format `{0}` (expected `dot` or `json`)")]
pub struct UnknownFormat(pub String);

impl FromStr for GraphFormat {
    type Err = UnknownFormat;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(GraphFormat::Dot),
            "json" => Ok(GraphFormat::Json),
            other => Err(UnknownFormat(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum GraphRef<'a> {
    Edg(&'a ExecutionDependencyGraph),
    Ddg(&'a DataDependencyGraph),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Edg,
    Ddg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeType {
    Hierarchical,
    Sequential,
    Dependency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchRef {
    pub fragment: NodeId,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeJson {
    pub id: NodeId,
    pub kind: NodeKind,
    pub doc_order: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment: Option<FragmentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branch: Option<BranchRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeJson {
    pub source: NodeId,
    pub target: NodeId,
    #[serde(rename = "type")]
    pub edge_type: EdgeType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

/// Wire form shared by both graph kinds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub schema_version: u32,
    pub graph: GraphKind,
    pub usecase: String,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<EdgeJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<Diagnostic>,
}

pub fn graph_json(g: GraphRef<'_>) -> GraphJson {
    match g {
        GraphRef::Edg(edg) => {
            let nodes = edg
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, n)| NodeJson {
                    id: n.id.clone(),
                    kind: n.kind,
                    doc_order: i,
                    fragment: n.fragment,
                    parent: n.parent.map(|p| edg.node(p).id.clone()),
                    branch: n.branch.map(|(f, b)| BranchRef {
                        fragment: edg.node(f).id.clone(),
                        label: edg.branches(f)[b].label.clone(),
                    }),
                })
                .collect();
            let edge = |t: EdgeType| {
                move |(a, b): (&NodeId, &NodeId)| EdgeJson {
                    source: a.clone(),
                    target: b.clone(),
                    edge_type: t,
                    data: None,
                    category: None,
                }
            };
            let edges = edg
                .hierarchical_edges()
                .map(edge(EdgeType::Hierarchical))
                .chain(edg.sequential_edges().map(edge(EdgeType::Sequential)))
                .collect();
            GraphJson {
                schema_version: SCHEMA_VERSION,
                graph: GraphKind::Edg,
                usecase: edg.usecase().to_string(),
                nodes,
                edges,
                diagnostics: vec![],
            }
        }
        GraphRef::Ddg(ddg) => GraphJson {
            schema_version: SCHEMA_VERSION,
            graph: GraphKind::Ddg,
            usecase: ddg.usecase.clone(),
            nodes: ddg
                .nodes
                .iter()
                .enumerate()
                .map(|(i, n)| NodeJson {
                    id: n.id.clone(),
                    kind: n.kind,
                    doc_order: i,
                    fragment: None,
                    parent: None,
                    branch: None,
                })
                .collect(),
            edges: ddg
                .edges
                .iter()
                .map(|e| EdgeJson {
                    source: e.source.clone(),
                    target: e.target.clone(),
                    edge_type: EdgeType::Dependency,
                    data: Some(e.data.clone()),
                    category: Some(e.category),
                })
                .collect(),
            diagnostics: ddg.diagnostics.clone(),
        },
    }
}

fn dot_id(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// Renders a graph. In DOT, containment edges are dashed and sequential or
/// dependency edges solid.
pub fn export_graph(g: GraphRef<'_>, format: GraphFormat) -> String {
    let json = graph_json(g);
    match format {
        GraphFormat::Json => serde_json::to_string_pretty(&json).expect("graph serializes"),
        GraphFormat::Dot => {
            let mut out = String::new();
            let _ = writeln!(out, "digraph {} {{", dot_id(&json.usecase));
            let _ = writeln!(out, "  rankdir=TB;");
            for n in &json.nodes {
                let shape = match n.kind {
                    NodeKind::Input => "ellipse",
                    NodeKind::Function => "box",
                    NodeKind::Control => "diamond",
                    NodeKind::Output => "doubleoctagon",
                };
                let label = match n.fragment {
                    Some(k) => format!("{}\\n{} {}", n.id, n.kind, k),
                    None => format!("{}\\n{}", n.id, n.kind),
                };
                let _ = writeln!(out, "  {} [label=\"{label}\", shape={shape}];", dot_id(n.id.as_str()));
            }
            for e in &json.edges {
                let attrs = match (e.edge_type, &e.data) {
                    (EdgeType::Hierarchical, _) => " [style=dashed]".to_string(),
                    (_, Some(data)) => format!(" [label={}]", dot_id(data)),
                    _ => String::new(),
                };
                let _ = writeln!(
                    out,
                    "  {} -> {}{attrs};",
                    dot_id(e.source.as_str()),
                    dot_id(e.target.as_str())
                );
            }
            out.push_str("}\n");
            out
        }
    }
}

pub fn parse_graph_json(text: &str) -> serde_json::Result<GraphJson> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edg::build_edg;
    use crate::engine::{infer_all, Analysis};
    use crate::esd::parse_document;

    #[test]
    fn demo_dot() {
        let doc = parse_document(include_str!("../fixtures/demo.esd")).unwrap();
        let edg = build_edg(&doc.usecases[0]);
        let dot = export_graph(GraphRef::Edg(&edg), GraphFormat::Dot);
        assert!(dot.contains("  \"m1\" -> \"f1\";\n"), "{dot}");
        assert!(dot.contains("  \"f1\" -> \"m2\" [style=dashed];\n"));
        assert!(dot.starts_with("digraph \"Demo\" {"));
    }

    #[test]
    fn empty_ddg_dot_has_nodes_only() {
        let doc = parse_document(include_str!("../fixtures/demo.esd")).unwrap();
        let uc = &doc.usecases[0];
        let ddg = DataDependencyGraph::new(uc, vec![], vec![]);
        let dot = export_graph(GraphRef::Ddg(&ddg), GraphFormat::Dot);
        assert!(!dot.contains("->"));
        assert_eq!(dot.matches("shape=").count(), 6);
        assert!(dot.trim_end().ends_with('}'));
    }

    #[test]
    fn json_round_trip() {
        let doc = parse_document(include_str!("../fixtures/demo.esd")).unwrap();
        let uc = &doc.usecases[0];
        let a = Analysis::new(&doc, uc);
        let ddg = infer_all(&a);
        for g in [GraphRef::Edg(&a.edg), GraphRef::Ddg(&ddg)] {
            let text = export_graph(g, GraphFormat::Json);
            let back = parse_graph_json(&text).unwrap();
            let mut a1 = graph_json(g).edges;
            let mut b1 = back.edges.clone();
            a1.sort();
            b1.sort();
            assert_eq!(a1, b1);
            assert_eq!(back.schema_version, SCHEMA_VERSION);
        }
    }

    #[test]
    fn unknown_format() {
        assert!("svg".parse::<GraphFormat>().is_err());
        assert_eq!("dot".parse::<GraphFormat>().unwrap(), GraphFormat::Dot);
    }
}
