//! Data dependency inference for enhanced UML sequence diagrams.
//!
//! The pipeline: parse an ESD file ([`esd`]), build the execution
//! dependency graph of a use case ([`edg`]), prune the context of each
//! target node to its reachable predecessors ([`reach`]), infer
//! producer/consumer edges with the rule engine ([`engine`]) or a language
//! model ([`llm`]), and score the result against gold annotations
//! ([`eval`]).
//!
//! Metric types are generic over the float type; the aliases below fix it
//! to `f64`.

pub mod edg;
pub mod engine;
pub mod esd;
pub mod eval;
pub mod export;
pub mod llm;
pub mod model;
pub mod reach;

pub use edg::{build_edg, document_order, ExecutionDependencyGraph};
pub use engine::{
    check_type_compatibility, data_consumed, data_produced, infer_all, infer_rule_based,
    validate_ddg, Analysis, DataDependencyGraph, EntityOccurrence,
};
pub use esd::{check_design_rules, parse_document, serialize_document, ParseError, ParseFailure};
pub use export::{export_graph, GraphFormat, GraphRef};
pub use model::{
    classify_edge_category, node_kind, Category, DependencyEdge, DiagCode, Diagnostic, Document,
    NodeId, NodeKind, Severity, UseCase, INPUT_NODE,
};
pub use reach::{
    context_reduction_ratio, oracle_reachable_predecessors, reachable_predecessors,
    PredecessorSet,
};

/// Precision/recall/F1 triple in `f64`.
pub type Metrics = eval::Metrics<f64>;
/// Per-category scores in `f64`.
pub type Score = eval::Score<f64>;
/// Scores of one use case in `f64`.
pub type CategoryScores = eval::CategoryScores<f64>;
/// Full evaluation report in `f64`.
pub type EvaluationReport = eval::EvaluationReport<f64>;
