//! Produce/consume sets per node, the deterministic rule-based inference
//! baseline, and validation of dependency graphs.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::edg::{build_edg, ExecutionDependencyGraph};
use crate::model::{
    check_edge_kinds, classify_edge_category, Category, DType, DependencyEdge, DiagCode,
    Diagnostic, Document, Element, LookupError, NodeId, NodeKind, UseCase,
};
use crate::reach::{reachable_predecessors, PredecessorSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    InputField,
    ApiResponse,
    TableActionWrite,
    ApiRequest,
    TableConditionRead,
    TableActionRead,
    ReturnField,
}

impl Slot {
    pub fn produces(self) -> bool {
        matches!(self, Slot::InputField | Slot::ApiResponse | Slot::TableActionWrite)
    }

    /// Category of an edge consuming through this slot.
    pub fn category(self) -> Category {
        match self {
            Slot::TableConditionRead => Category::Condition,
            Slot::TableActionRead => Category::Action,
            _ => Category::Api,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EntityOccurrence {
    pub entity: String,
    /// Unknown for decision-table reads, which carry names only.
    pub dtype: Option<DType>,
    pub slot: Slot,
    pub node: NodeId,
}

fn push_unique(out: &mut Vec<EntityOccurrence>, occ: EntityOccurrence) {
    if !out.contains(&occ) {
        out.push(occ);
    }
}

fn lookup<'a>(usecase: &'a UseCase, node: &str) -> Result<Option<&'a Element>, LookupError> {
    if node == crate::model::INPUT_NODE {
        return Ok(None);
    }
    usecase
        .element(node)
        .map(Some)
        .ok_or_else(|| LookupError::UnknownNode {
            usecase: usecase.name.clone(),
            node: node.to_string(),
        })
}

/// Data made available by `node`: input fields for `@input`, API response
/// fields and decision-table writes for messages, table writes for
/// fragments, nothing for return messages.
pub fn data_produced(
    node: &str,
    usecase: &UseCase,
    document: &Document,
) -> Result<Vec<EntityOccurrence>, LookupError> {
    let mut out = Vec::new();
    let Some(elem) = lookup(usecase, node)? else {
        for f in &usecase.input_fields {
            push_unique(&mut out, occ(&f.name, Some(&f.dtype), Slot::InputField, node));
        }
        return Ok(out);
    };
    if let Element::Message(m) = elem {
        if let Some(api) = document.api_of(m) {
            for f in &api.response {
                push_unique(&mut out, occ(&f.name, Some(&f.dtype), Slot::ApiResponse, node));
            }
        }
    }
    if !matches!(elem, Element::Return(_)) {
        for table in document.bound_tables(elem) {
            for f in table.rules.iter().flat_map(|r| &r.action_writes) {
                push_unique(&mut out, occ(&f.name, Some(&f.dtype), Slot::TableActionWrite, node));
            }
        }
    }
    Ok(out)
}

/// Data required by `node`: API request fields and decision-table reads
/// for messages, table reads for fragments, return fields for return
/// messages, nothing for `@input`.
pub fn data_consumed(
    node: &str,
    usecase: &UseCase,
    document: &Document,
) -> Result<Vec<EntityOccurrence>, LookupError> {
    let mut out = Vec::new();
    let Some(elem) = lookup(usecase, node)? else {
        return Ok(out);
    };
    match elem {
        Element::Return(r) => {
            for f in &r.fields {
                push_unique(&mut out, occ(&f.name, Some(&f.dtype), Slot::ReturnField, node));
            }
            return Ok(out);
        }
        Element::Message(m) => {
            if let Some(api) = document.api_of(m) {
                for f in &api.request {
                    push_unique(&mut out, occ(&f.name, Some(&f.dtype), Slot::ApiRequest, node));
                }
            }
        }
        Element::Fragment(_) => {}
    }
    for table in document.bound_tables(elem) {
        for rule in &table.rules {
            for name in &rule.condition_reads {
                push_unique(&mut out, occ(name, None, Slot::TableConditionRead, node));
            }
        }
    }
    for table in document.bound_tables(elem) {
        for rule in &table.rules {
            for name in &rule.action_reads {
                push_unique(&mut out, occ(name, None, Slot::TableActionRead, node));
            }
        }
    }
    Ok(out)
}

fn occ(name: &str, dtype: Option<&DType>, slot: Slot, node: &str) -> EntityOccurrence {
    EntityOccurrence {
        entity: name.to_string(),
        dtype: dtype.cloned(),
        slot,
        node: node.into(),
    }
}

/// Distinct entity names in first-occurrence order.
pub fn entity_names(occs: &[EntityOccurrence]) -> Vec<&str> {
    let mut seen = HashSet::new();
    occs.iter()
        .map(|o| o.entity.as_str())
        .filter(|e| seen.insert(*e))
        .collect()
}

/// `W_TYPE_COMPAT` when producer and consumer disagree on the type of the
/// same entity.
pub fn check_type_compatibility(
    producer: &EntityOccurrence,
    consumer: &EntityOccurrence,
) -> Option<Diagnostic> {
    let (Some(have), Some(want)) = (&producer.dtype, &consumer.dtype) else {
        return None;
    };
    if have == want {
        return None;
    }
    let hint = if have.widens_to(want) {
        format!("consider a widening conversion from {have} to {want}")
    } else if want.widens_to(have) {
        format!("consider a narrowing conversion from {have} to {want} with a range check")
    } else {
        format!("{have} and {want} are different kinds; consider an explicit type conversion")
    };
    Some(
        Diagnostic::new(
            DiagCode::TypeCompat,
            format!(
                "`{}` is produced by `{}` as {have} but consumed by `{}` as {want}; {hint}",
                consumer.entity, producer.node, consumer.node
            ),
        )
        .at(consumer.node.clone())
        .entity(consumer.entity.clone()),
    )
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("context was computed for `{context}`, not for target `{target}`")]
    ContextMismatch { target: NodeId, context: NodeId },
    #[error("graph belongs to use case `{graph}`, analysis to `{analysis}`")]
    UseCaseMismatch { graph: String, analysis: String },
}

/// A use case prepared for inference: its execution graph and the
/// predecessor set of every node.
#[derive(Debug, Clone)]
pub struct Analysis<'a> {
    pub document: &'a Document,
    pub usecase: &'a UseCase,
    pub edg: ExecutionDependencyGraph,
    preds: Vec<PredecessorSet>,
}

impl<'a> Analysis<'a> {
    pub fn new(document: &'a Document, usecase: &'a UseCase) -> Self {
        let edg = build_edg(usecase);
        let preds = edg
            .nodes()
            .iter()
            .map(|n| reachable_predecessors(&edg, n.id.as_str()).expect("node from graph"))
            .collect();
        Analysis {
            document,
            usecase,
            edg,
            preds,
        }
    }

    pub fn predecessors(&self, target: &str) -> Result<&PredecessorSet, LookupError> {
        self.edg.index_of(target).map(|i| &self.preds[i])
    }

    /// `reachable(source, target)`: `source` may execute before `target`.
    pub fn reachable(&self, source: &str, target: &str) -> bool {
        self.predecessors(target)
            .map(|p| p.contains(source))
            .unwrap_or(false)
    }

    pub fn produced(&self, node: &str) -> Result<Vec<EntityOccurrence>, LookupError> {
        data_produced(node, self.usecase, self.document)
    }

    pub fn consumed(&self, node: &str) -> Result<Vec<EntityOccurrence>, LookupError> {
        data_consumed(node, self.usecase, self.document)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Inference {
    pub edges: Vec<DependencyEdge>,
    pub diagnostics: Vec<Diagnostic>,
}

/// Rule-based inference for one target over its pruned context.
///
/// Every consumed entity is sourced from the context nodes that produce
/// it. A candidate that can execute before another candidate is shadowed
/// by it, so the latest writer wins and `@input` is used only when nothing
/// else produces the entity; candidates on exclusive branches all survive.
pub fn infer_rule_based(
    analysis: &Analysis<'_>,
    target: &str,
    context: &PredecessorSet,
) -> Result<Inference, EngineError> {
    let target_id = analysis.edg.node(analysis.edg.index_of(target)?).id.clone();
    if context.target != target_id {
        return Err(EngineError::ContextMismatch {
            target: target_id,
            context: context.target.clone(),
        });
    }
    let consumed = analysis.consumed(target)?;
    let mut out = Inference::default();
    if consumed.is_empty() {
        return Ok(out);
    }
    let producers: Vec<(NodeId, Vec<EntityOccurrence>)> = context
        .members
        .iter()
        .map(|s| Ok((s.clone(), analysis.produced(s.as_str())?)))
        .collect::<Result<_, LookupError>>()?;

    for name in entity_names(&consumed) {
        let candidates: Vec<&NodeId> = producers
            .iter()
            .filter(|(_, occs)| occs.iter().any(|o| o.entity == name))
            .map(|(s, _)| s)
            .collect();
        if candidates.is_empty() {
            out.diagnostics.push(
                Diagnostic::new(
                    DiagCode::MissingSource,
                    format!(
                        "no predecessor of `{target_id}` produces `{name}`; review the operations that should run before it"
                    ),
                )
                .at(target_id.clone())
                .entity(name),
            );
            continue;
        }
        let latest = candidates.iter().filter(|s1| {
            !candidates
                .iter()
                .any(|s2| s1 != &s2 && analysis.reachable(s1.as_str(), s2.as_str()))
        });
        for source in latest {
            let (category, warning) =
                classify_edge_category(source, name, &target_id, analysis.usecase, analysis.document)
                    .map_err(|_| LookupError::UnknownNode {
                        usecase: analysis.usecase.name.clone(),
                        node: target_id.to_string(),
                    })?;
            if let Some(w) = warning {
                if !out.diagnostics.contains(&w) {
                    out.diagnostics.push(w);
                }
            }
            let edge = DependencyEdge::new((*source).clone(), name, target_id.clone(), category);
            let produced = producers
                .iter()
                .find(|(s, _)| s == *source)
                .map(|(_, occs)| occs.as_slice())
                .unwrap_or_default();
            for p in produced.iter().filter(|o| o.entity == name) {
                for c in consumed.iter().filter(|o| o.entity == name) {
                    if let Some(d) = check_type_compatibility(p, c) {
                        if !out.diagnostics.contains(&d) {
                            out.diagnostics.push(d);
                        }
                    }
                }
            }
            if !out.edges.contains(&edge) {
                out.edges.push(edge);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DdgNode {
    pub id: NodeId,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DataDependencyGraph {
    pub usecase: String,
    pub nodes: Vec<DdgNode>,
    pub edges: Vec<DependencyEdge>,
    pub diagnostics: Vec<Diagnostic>,
}

impl DataDependencyGraph {
    pub fn new(usecase: &UseCase, edges: Vec<DependencyEdge>, diagnostics: Vec<Diagnostic>) -> Self {
        let nodes = usecase
            .node_ids()
            .into_iter()
            .map(|id| DdgNode {
                kind: usecase.node_kind(id.as_str()).expect("indexed node"),
                id,
            })
            .collect();
        DataDependencyGraph {
            usecase: usecase.name.clone(),
            nodes,
            edges,
            diagnostics,
        }
    }

    pub fn edge_set(&self) -> BTreeSet<DependencyEdge> {
        self.edges.iter().cloned().collect()
    }
}

/// Rule-based inference over every node that consumes data, merged in
/// document order.
pub fn infer_all(analysis: &Analysis<'_>) -> DataDependencyGraph {
    let mut edges: Vec<DependencyEdge> = Vec::new();
    let mut seen = HashSet::new();
    let mut diagnostics = Vec::new();
    for (idx, node) in analysis.edg.nodes().iter().enumerate().skip(1) {
        let result = infer_rule_based(analysis, node.id.as_str(), &analysis.preds[idx])
            .expect("context computed for this node");
        for e in result.edges {
            if seen.insert(e.clone()) {
                edges.push(e);
            }
        }
        diagnostics.extend(result.diagnostics);
    }
    DataDependencyGraph::new(analysis.usecase, edges, diagnostics)
}

/// Checks a dependency graph against the use case: one `E_EDGE_CONSTRAINT`
/// per inadmissible edge, and `E_MISSING_SOURCE` for every consumed entity
/// without an admissible incoming edge. An empty result means the graph is
/// admissible.
pub fn validate_ddg(
    ddg: &DataDependencyGraph,
    analysis: &Analysis<'_>,
) -> Result<Vec<Diagnostic>, EngineError> {
    if ddg.usecase != analysis.usecase.name {
        return Err(EngineError::UseCaseMismatch {
            graph: ddg.usecase.clone(),
            analysis: analysis.usecase.name.clone(),
        });
    }
    let mut out = Vec::new();
    let mut covered: HashSet<(NodeId, String)> = HashSet::new();
    for edge in &ddg.edges {
        let problems = edge_violations(edge, analysis);
        if problems.is_empty() {
            covered.insert((edge.target.clone(), edge.data.clone()));
        } else {
            out.push(
                Diagnostic::new(
                    DiagCode::EdgeConstraint,
                    format!("edge {edge} rejected: {}", problems.join("; ")),
                )
                .at(edge.target.clone())
                .entity(edge.data.clone()),
            );
        }
    }
    for node in analysis.edg.nodes().iter().skip(1) {
        let consumed = analysis.consumed(node.id.as_str())?;
        for name in entity_names(&consumed) {
            if !covered.contains(&(node.id.clone(), name.to_string())) {
                out.push(
                    Diagnostic::new(
                        DiagCode::MissingSource,
                        format!("`{}` consumes `{name}` but no edge supplies it", node.id),
                    )
                    .at(node.id.clone())
                    .entity(name),
                );
            }
        }
    }
    Ok(out)
}

/// Reasons an edge is inadmissible; empty when it passes.
pub fn edge_violations(edge: &DependencyEdge, analysis: &Analysis<'_>) -> Vec<String> {
    let uc = analysis.usecase;
    if let Err(e) = check_edge_kinds(uc, &edge.source, &edge.target) {
        return vec![e.to_string()];
    }
    let mut problems = Vec::new();
    if !analysis.reachable(edge.source.as_str(), edge.target.as_str()) {
        problems.push(format!(
            "`{}` cannot execute before `{}`",
            edge.source, edge.target
        ));
    }
    let produced = analysis.produced(edge.source.as_str()).unwrap_or_default();
    if !produced.iter().any(|o| o.entity == edge.data) {
        problems.push(format!("`{}` does not produce `{}`", edge.source, edge.data));
    }
    match classify_edge_category(&edge.source, &edge.data, &edge.target, uc, analysis.document) {
        Ok((category, _)) if category != edge.category => problems.push(format!(
            "category is {category}, not {}",
            edge.category
        )),
        Ok(_) => {}
        Err(_) => problems.push(format!("`{}` does not consume `{}`", edge.target, edge.data)),
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esd::parse_document;

    fn demo() -> Document {
        parse_document(include_str!("../fixtures/demo.esd")).unwrap()
    }

    fn names(occs: &[EntityOccurrence]) -> Vec<(String, Option<String>, Slot)> {
        occs.iter()
            .map(|o| (o.entity.clone(), o.dtype.as_ref().map(|d| d.to_string()), o.slot))
            .collect()
    }

    fn e(s: &str, d: &str, t: &str, c: Category) -> DependencyEdge {
        DependencyEdge::new(s, d, t, c)
    }

    #[test]
    fn produced_sets() {
        let doc = demo();
        let uc = &doc.usecases[0];
        assert_eq!(
            names(&data_produced("m1", uc, &doc).unwrap()),
            [
                ("account_status".into(), Some("string".into()), Slot::ApiResponse),
                ("balance".into(), Some("int64".into()), Slot::ApiResponse)
            ]
        );
        assert_eq!(
            names(&data_produced("@input", uc, &doc).unwrap()),
            [
                ("user_id".into(), Some("uint64".into()), Slot::InputField),
                ("amount".into(), Some("int64".into()), Slot::InputField)
            ]
        );
        assert!(data_produced("r_ok", uc, &doc).unwrap().is_empty());
        assert!(data_produced("f1", uc, &doc).unwrap().is_empty());
    }

    #[test]
    fn consumed_sets() {
        let doc = demo();
        let uc = &doc.usecases[0];
        assert_eq!(
            names(&data_consumed("m2", uc, &doc).unwrap()),
            [
                ("user_id".into(), Some("uint64".into()), Slot::ApiRequest),
                ("amount".into(), Some("int64".into()), Slot::ApiRequest)
            ]
        );
        assert_eq!(
            names(&data_consumed("f1", uc, &doc).unwrap()),
            [("account_status".into(), None, Slot::TableConditionRead)]
        );
        assert!(data_consumed("@input", uc, &doc).unwrap().is_empty());
        assert!(data_consumed("bogus", uc, &doc).is_err());
    }

    #[test]
    fn per_target_inference() {
        let doc = demo();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let run = |t: &str| infer_rule_based(&a, t, a.predecessors(t).unwrap()).unwrap();
        assert_eq!(
            run("m2").edges,
            [e("@input", "user_id", "m2", Category::Api), e("@input", "amount", "m2", Category::Api)]
        );
        assert_eq!(run("f1").edges, [e("m1", "account_status", "f1", Category::Condition)]);
        assert_eq!(run("r_ok").edges, [e("m2", "new_balance", "r_ok", Category::Api)]);
        let r_err = run("r_err");
        assert!(r_err.edges.is_empty());
        assert_eq!(r_err.diagnostics.len(), 1);
        assert_eq!(r_err.diagnostics[0].code, DiagCode::MissingSource);
        assert_eq!(r_err.diagnostics[0].entity.as_deref(), Some("result_code"));
    }

    #[test]
    fn wrong_context_rejected() {
        let doc = demo();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let err = infer_rule_based(&a, "m2", a.predecessors("r_ok").unwrap()).unwrap_err();
        assert!(matches!(err, EngineError::ContextMismatch { .. }));
    }

    #[test]
    fn demo_infer_all_and_validate() {
        let doc = demo();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let ddg = infer_all(&a);
        assert_eq!(
            ddg.edges,
            [
                e("@input", "user_id", "m1", Category::Api),
                e("m1", "account_status", "f1", Category::Condition),
                e("@input", "user_id", "m2", Category::Api),
                e("@input", "amount", "m2", Category::Api),
                e("m2", "new_balance", "r_ok", Category::Api),
            ]
        );
        assert_eq!(ddg.diagnostics.len(), 1);
        assert_eq!(ddg.diagnostics[0].node.as_ref().unwrap(), "r_err");
        assert_eq!(infer_all(&a), ddg);

        let diags = validate_ddg(&ddg, &a).unwrap();
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::MissingSource);
        assert_eq!(diags[0].node.as_ref().unwrap(), "r_err");
    }

    #[test]
    fn injected_edges_rejected() {
        let doc = demo();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let mut ddg = infer_all(&a);
        ddg.edges.push(e("r_ok", "x", "m1", Category::Api));
        ddg.edges.push(e("m2", "new_balance", "m1", Category::Api));
        let diags = validate_ddg(&ddg, &a).unwrap();
        let constraint: Vec<_> = diags.iter().filter(|d| d.code == DiagCode::EdgeConstraint).collect();
        assert_eq!(constraint.len(), 2);
        assert!(constraint[0].message.contains("Output"), "{}", constraint[0].message);
        assert!(constraint[1].message.contains("cannot execute before"));

        let mut other = ddg.clone();
        other.usecase = "Else".into();
        assert!(matches!(validate_ddg(&other, &a), Err(EngineError::UseCaseMismatch { .. })));
    }

    #[test]
    fn type_compatibility() {
        let mk = |dtype: &str, slot, node: &str| EntityOccurrence {
            entity: "user_id".into(),
            dtype: Some(dtype.parse().unwrap()),
            slot,
            node: node.into(),
        };
        let d = check_type_compatibility(
            &mk("uint32", Slot::ApiResponse, "m1"),
            &mk("uint64", Slot::ApiRequest, "m2"),
        )
        .unwrap();
        assert_eq!(d.code, DiagCode::TypeCompat);
        assert!(d.message.contains("uint32") && d.message.contains("uint64"));
        assert!(d.message.contains("conversion"));
        assert!(check_type_compatibility(
            &mk("int64", Slot::ApiResponse, "m1"),
            &mk("int64", Slot::ApiRequest, "m2")
        )
        .is_none());
        let d = check_type_compatibility(
            &mk("bool", Slot::ApiResponse, "m1"),
            &mk("string", Slot::ApiRequest, "m2"),
        )
        .unwrap();
        assert!(d.message.contains("different kinds"));
    }

    #[test]
    fn exclusive_branches_both_supply() {
        let doc = parse_document(
            "usecase \"U\" { input { field k: string } participant a
               alt f {
                 branch \"x\" { message p from a to a api \"P\" }
                 branch \"y\" { message q from a to a api \"P\" }
               }
               message c from a to a api \"C\"
               return r {} }
             api \"P\" { description \"\" request { field k: string } response { field v: int64 } }
             api \"C\" { description \"\" request { field v: int64 field k: string } response {} }",
        )
        .unwrap();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let res = infer_rule_based(&a, "c", a.predecessors("c").unwrap()).unwrap();
        assert_eq!(
            res.edges,
            [
                e("p", "v", "c", Category::Api),
                e("q", "v", "c", Category::Api),
                e("@input", "k", "c", Category::Api)
            ]
        );
    }

    #[test]
    fn ambiguous_slot_warns() {
        let text = include_str!("../fixtures/demo.esd")
            .replace("reads [account_status]", "reads [account_status, user_id]")
            .replace("alt f1 tables [t1]", "alt f1")
            .replace("api \"QueryAccount\"\n", "api \"QueryAccount\" tables [t1]\n");
        let doc = parse_document(&text).unwrap();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let res = infer_rule_based(&a, "m1", a.predecessors("m1").unwrap()).unwrap();
        assert_eq!(res.edges, [e("@input", "user_id", "m1", Category::Api)]);
        assert_eq!(res.diagnostics.len(), 2, "{:?}", res.diagnostics);
        assert_eq!(res.diagnostics[0].code, DiagCode::AmbiguousSlot);
        assert_eq!(res.diagnostics[1].code, DiagCode::MissingSource);
    }
}
