//! Operations shared by the command line and the HTTP service, so both
//! emit the same payloads.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use seqdep::engine::Inference;
use seqdep::eval::GoldAnnotation;
use seqdep::export::SCHEMA_VERSION;
use seqdep::llm::{infer_with_llm, SamplingParams, Transport};
use seqdep::{
    check_design_rules, infer_all, infer_rule_based, parse_document, validate_ddg, Analysis,
    DataDependencyGraph, DependencyEdge, DiagCode, Diagnostic, Document, EvaluationReport,
    NodeId, UseCase,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Rule,
    Llm,
}

/// Inference backend plus what it needs to run.
#[derive(Clone, Copy)]
pub enum Engine<'t> {
    Rule,
    Llm {
        transport: &'t dyn Transport,
        params: SamplingParams,
        /// Upper bound on concurrent requests during global inference.
        max_in_flight: usize,
    },
}

impl Engine<'_> {
    pub fn kind(&self) -> EngineKind {
        match self {
            Engine::Rule => EngineKind::Rule,
            Engine::Llm { .. } => EngineKind::Llm,
        }
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}

pub fn usage(message: impl Into<String>) -> Diagnostic {
    Diagnostic::new(DiagCode::Usage, message)
}

#[derive(Debug, Clone, Serialize)]
pub struct ParseReport {
    pub schema_version: u32,
    pub ok: bool,
    pub usecases: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub document: Option<Document>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Parses `text` and runs the design-rule checks on success.
pub fn parse_report(text: &str, include_model: bool) -> ParseReport {
    match parse_document(text) {
        Ok(doc) => {
            let diagnostics = check_design_rules(&doc);
            ParseReport {
                schema_version: SCHEMA_VERSION,
                ok: !has_errors(&diagnostics),
                usecases: doc.usecases.iter().map(|u| u.name.clone()).collect(),
                document: include_model.then_some(doc),
                diagnostics,
            }
        }
        Err(fail) => ParseReport {
            schema_version: SCHEMA_VERSION,
            ok: false,
            usecases: vec![],
            document: None,
            diagnostics: fail.diagnostics(),
        },
    }
}

/// `name`, or the first use case when absent.
pub fn select_usecase<'d>(doc: &'d Document, name: Option<&str>) -> Result<&'d UseCase, Diagnostic> {
    match name {
        Some(n) => doc.usecase(n).map_err(Diagnostic::from),
        None => doc
            .usecases
            .first()
            .ok_or_else(|| usage("document defines no use case")),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PruneReport {
    pub schema_version: u32,
    pub usecase: String,
    pub target: NodeId,
    pub members: Vec<NodeId>,
    pub ratio: f64,
}

pub fn prune_report(analysis: &Analysis<'_>, target: &str) -> Result<PruneReport, Diagnostic> {
    let preds = analysis.predecessors(target)?;
    Ok(PruneReport {
        schema_version: SCHEMA_VERSION,
        usecase: analysis.usecase.name.clone(),
        target: preds.target.clone(),
        members: preds.members.clone(),
        ratio: preds.reduction_ratio(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InferReport {
    pub schema_version: u32,
    pub usecase: String,
    pub engine: EngineKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<NodeId>,
    pub edges: Vec<DependencyEdge>,
    pub diagnostics: Vec<Diagnostic>,
}

impl InferReport {
    pub fn has_errors(&self) -> bool {
        has_errors(&self.diagnostics)
    }

    pub fn graph(&self, usecase: &UseCase) -> DataDependencyGraph {
        DataDependencyGraph::new(usecase, self.edges.clone(), self.diagnostics.clone())
    }
}

fn infer_one(analysis: &Analysis<'_>, target: &str, engine: Engine<'_>) -> Result<Inference, Diagnostic> {
    let context = analysis.predecessors(target)?;
    match engine {
        Engine::Rule => infer_rule_based(analysis, target, context)
            .map_err(|e| Diagnostic::new(DiagCode::Lookup, e.to_string()).at(target)),
        Engine::Llm { transport, params, .. } => {
            infer_with_llm(analysis, target, transport, params).map_err(Diagnostic::from)
        }
    }
}

/// Local inference for `target`, or global inference when it is `None`.
pub fn infer(analysis: &Analysis<'_>, target: Option<&str>, engine: Engine<'_>) -> Result<InferReport, Diagnostic> {
    let report = |target, edges, diagnostics| InferReport {
        schema_version: SCHEMA_VERSION,
        usecase: analysis.usecase.name.clone(),
        engine: engine.kind(),
        target,
        edges,
        diagnostics,
    };
    if let Some(t) = target {
        let inf = infer_one(analysis, t, engine)?;
        let id = analysis.predecessors(t)?.target.clone();
        return Ok(report(Some(id), inf.edges, inf.diagnostics));
    }
    match engine {
        Engine::Rule => {
            let ddg = infer_all(analysis);
            Ok(report(None, ddg.edges, ddg.diagnostics))
        }
        Engine::Llm { max_in_flight, .. } => {
            let targets: Vec<&NodeId> = analysis
                .edg
                .nodes()
                .iter()
                .skip(1)
                .map(|n| &n.id)
                .filter(|id| analysis.consumed(id.as_str()).is_ok_and(|c| !c.is_empty()))
                .collect();
            let mut results = Vec::with_capacity(targets.len());
            for chunk in targets.chunks(max_in_flight.max(1)) {
                let batch: Vec<Result<Inference, Diagnostic>> = std::thread::scope(|s| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|t| s.spawn(move || infer_one(analysis, t.as_str(), engine)))
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("inference thread")).collect()
                });
                results.extend(batch);
            }
            let mut edges = Vec::new();
            let mut diagnostics = Vec::new();
            for r in results {
                let inf = r?;
                for e in inf.edges {
                    if !edges.contains(&e) {
                        edges.push(e);
                    }
                }
                diagnostics.extend(inf.diagnostics);
            }
            // Entities the model left unsourced.
            let ddg = DataDependencyGraph::new(analysis.usecase, edges.clone(), vec![]);
            let missing = validate_ddg(&ddg, analysis)
                .map_err(|e| Diagnostic::new(DiagCode::Lookup, e.to_string()))?
                .into_iter()
                .filter(|d| d.code == DiagCode::MissingSource);
            diagnostics.extend(missing);
            Ok(report(None, edges, diagnostics))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub schema_version: u32,
    pub ok: bool,
    pub usecases: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Design rules for the whole document, then per use case either the
/// supplied edges checked with `validate_ddg` or the rule engine's own
/// diagnostics.
pub fn validate_report(doc: &Document, edges: Option<&EdgeSet>) -> Result<ValidateReport, Diagnostic> {
    let mut diagnostics = check_design_rules(doc);
    let usecases: Vec<&UseCase> = match edges.and_then(|e| e.usecase.as_deref()) {
        Some(name) => vec![doc.usecase(name)?],
        None => doc.usecases.iter().collect(),
    };
    for uc in &usecases {
        let analysis = Analysis::new(doc, uc);
        match edges {
            Some(set) => {
                let ddg = DataDependencyGraph::new(uc, set.edges.clone(), vec![]);
                let found = validate_ddg(&ddg, &analysis)
                    .map_err(|e| Diagnostic::new(DiagCode::Lookup, e.to_string()))?;
                diagnostics.extend(found);
                diagnostics.extend(type_warnings(&analysis, &set.edges));
            }
            None => diagnostics.extend(infer_all(&analysis).diagnostics),
        }
    }
    Ok(ValidateReport {
        schema_version: SCHEMA_VERSION,
        ok: !has_errors(&diagnostics),
        usecases: usecases.iter().map(|u| u.name.clone()).collect(),
        diagnostics,
    })
}

fn type_warnings(analysis: &Analysis<'_>, edges: &[DependencyEdge]) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for e in edges {
        let (Ok(produced), Ok(consumed)) = (
            analysis.produced(e.source.as_str()),
            analysis.consumed(e.target.as_str()),
        ) else {
            continue;
        };
        for p in produced.iter().filter(|o| o.entity == e.data) {
            for c in consumed.iter().filter(|o| o.entity == e.data) {
                if let Some(d) = seqdep::check_type_compatibility(p, c) {
                    if !out.contains(&d) {
                        out.push(d);
                    }
                }
            }
        }
    }
    out
}

/// Edges read from a file: a bare array, or an object with an `edges`
/// array and an optional `usecase`. Covers gold annotations, prediction
/// files and inference output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    pub usecase: Option<String>,
    pub edges: Vec<DependencyEdge>,
}

impl EdgeSet {
    pub fn from_json(text: &str) -> Result<Self, Diagnostic> {
        let bad = |e: serde_json::Error| usage(format!("invalid edge file: {e}"));
        let value: Value = serde_json::from_str(text).map_err(bad)?;
        match value {
            Value::Array(_) => Ok(EdgeSet {
                usecase: None,
                edges: serde_json::from_value(value).map_err(bad)?,
            }),
            Value::Object(mut map) => {
                let edges = map
                    .remove("edges")
                    .ok_or_else(|| usage("invalid edge file: missing `edges`"))?;
                let usecase = match map.remove("usecase") {
                    Some(Value::String(s)) => Some(s),
                    _ => None,
                };
                Ok(EdgeSet {
                    usecase,
                    edges: serde_json::from_value(edges).map_err(bad)?,
                })
            }
            _ => Err(usage("invalid edge file: expected an array or an object")),
        }
    }
}

impl From<GoldAnnotation> for EdgeSet {
    fn from(g: GoldAnnotation) -> Self {
        EdgeSet {
            usecase: Some(g.usecase),
            edges: g.edges,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: EvaluationReport,
}

pub fn eval_output(cases: &[(String, Vec<DependencyEdge>, Vec<DependencyEdge>)]) -> EvalOutput {
    EvalOutput {
        schema_version: SCHEMA_VERSION,
        report: seqdep::eval::evaluate(cases),
    }
}

/// JSON error envelope used by the service and by the CLI on stderr.
pub fn error_json(diag: &Diagnostic) -> Value {
    serde_json::json!({ "schema_version": SCHEMA_VERSION, "error": diag })
}
