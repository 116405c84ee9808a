use std::fmt::Write;

use serde::Serialize;
use thiserror::Error;

use crate::engine::Analysis;
use crate::model::{
    ApiSpec, DiagCode, Diagnostic, Element, Field, LookupError, NodeId, NodeKind, Rule,
};
use crate::reach::PredecessorSet;

/// Bumped whenever the rendered wording changes; replay fixtures are keyed
/// on the rendered text, so a bump invalidates them.
pub const PROMPT_TEMPLATE_VERSION: u32 = 1;

pub const HEADINGS: [&str; 4] = [
    "Formal Problem Specification",
    "Contextual Information",
    "Inference Constraints",
    "Output Format",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptSection {
    pub heading: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptDocument {
    pub usecase: String,
    pub target: NodeId,
    /// Node blocks of the contextual section, in document order; the target
    /// comes last.
    pub blocks: Vec<NodeId>,
    pub sections: Vec<PromptSection>,
    pub rendered: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("`{0}` consumes no data; nothing to infer")]
    NoConsumption(NodeId),
    #[error("context was computed for `{context}`, not for target `{target}`")]
    ContextMismatch { target: NodeId, context: NodeId },
}

impl From<PromptError> for Diagnostic {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::Lookup(l) => l.into(),
            PromptError::NoConsumption(ref node) => {
                Diagnostic::new(DiagCode::NoConsumption, e.to_string()).at(node.clone())
            }
            PromptError::ContextMismatch { ref target, .. } => {
                Diagnostic::new(DiagCode::Usage, e.to_string()).at(target.clone())
            }
        }
    }
}

const PROBLEM: &str = "\
Given a UML sequence diagram, construct a data dependency graph
G_DD = (V, E_DD, D) where:
- Nodes: V = V_I ∪ V_F ∪ V_C ∪ V_O. V_I = {@input} holds the use case input
  fields; V_F are function nodes (API messages); V_C are control nodes
  (alt/opt/loop/break fragments); V_O are output nodes (return messages).
- Edges: E_DD ⊆ (V_I ∪ V_F ∪ V_C) × D × (V_F ∪ V_C ∪ V_O). An edge (s, d, t)
  states that target t consumes data item d produced by source s, with
  s ≠ t and reachable(s, t).
- Data consumption categories: D_consume(t) = D_API-Req(t) ∪ D_Cond(t) ∪ D_Act(t),
  where D_API-Req are API request fields (and return fields of an output
  node), D_Cond are decision-table condition reads and D_Act are
  decision-table action reads. The category of an edge is the slot in which
  t consumes d: api, condition or action.
- Data production categories: D_produce(s) = D_API-Resp(s) ∪ D_DecisionTable-Out(s),
  where D_API-Resp are API response fields (input fields for @input) and
  D_DecisionTable-Out are fields written by the actions of bound decision
  tables.";

const CONSTRAINTS: &str = "\
- Completeness: for every d ∈ D_consume(t) there is at least one edge
  (s, d, t) unless no node in P(t) produces d.
- Path validity: every source s must satisfy s ∈ P(t) and d ∈ D_produce(s).
  Nodes outside P(t) never execute before t and must not appear.
- Consistency: when several nodes in P(t) produce d, choose the producer
  whose value is current when t executes; a producer that always executes
  before another producer of d is overwritten by it.
- Report only edges whose target is t.";

const OUTPUT: &str = r#"Provide dependency edges as follows:
{"edges": [{"source": "<node id>", "data": "<data item>", "target": "<node id>", "category": "api" | "condition" | "action"}]}
Return exactly one JSON object of this shape. Use @input for the input node."#;

fn fields(out: &mut String, indent: &str, label: &str, fields: &[Field]) {
    if fields.is_empty() {
        let _ = writeln!(out, "{indent}- {label}: none");
        return;
    }
    let _ = writeln!(out, "{indent}- {label}:");
    for f in fields {
        if f.description.is_empty() {
            let _ = writeln!(out, "{indent}  - {}: {}", f.name, f.dtype);
        } else {
            let _ = writeln!(out, "{indent}  - {}: {} ({})", f.name, f.dtype, f.description);
        }
    }
}

fn api(out: &mut String, spec: Option<&ApiSpec>, name: &str) {
    let Some(spec) = spec else {
        let _ = writeln!(out, "- API: {name} (unspecified)");
        return;
    };
    if spec.description.is_empty() {
        let _ = writeln!(out, "- API: {}", spec.name);
    } else {
        let _ = writeln!(out, "- API: {} ({})", spec.name, spec.description);
    }
    fields(out, "  ", "request", &spec.request);
    fields(out, "  ", "response", &spec.response);
}

fn rule(out: &mut String, r: &Rule) {
    let list = |names: &[String]| names.join(", ");
    let cond = match &r.condition {
        Some(c) => format!("when {c} [reads: {}]", list(&r.condition_reads)),
        None => "always".to_string(),
    };
    let _ = write!(out, "    - {cond} then {}", r.action);
    if !r.action_reads.is_empty() {
        let _ = write!(out, " [reads: {}]", list(&r.action_reads));
    }
    if !r.action_writes.is_empty() {
        let writes: Vec<String> = r.action_writes.iter().map(|f| format!("{}: {}", f.name, f.dtype)).collect();
        let _ = write!(out, " [writes: {}]", writes.join(", "));
    }
    out.push('\n');
}

fn node_block(out: &mut String, analysis: &Analysis<'_>, id: &NodeId) -> Result<(), LookupError> {
    let uc = analysis.usecase;
    let doc = analysis.document;
    let _ = writeln!(out, "### {id}");
    let kind = uc.node_kind(id.as_str())?;
    let Some(elem) = uc.element(id.as_str()) else {
        let _ = writeln!(out, "- Type: {}", NodeKind::Input);
        fields(out, "", "Input fields", &uc.input_fields);
        return Ok(());
    };
    match elem {
        Element::Message(m) => {
            let _ = writeln!(out, "- Type: {kind}");
            let _ = writeln!(out, "- Message: {} -> {}", m.from, m.to);
            api(out, doc.api_of(m), &m.api);
        }
        Element::Fragment(f) => {
            let _ = writeln!(out, "- Type: {kind} ({})", f.kind);
            let labels: Vec<String> = f
                .branches
                .iter()
                .filter(|b| !b.label.is_empty())
                .map(|b| format!("\"{}\"", b.label))
                .collect();
            if !labels.is_empty() {
                let _ = writeln!(out, "- Branches: {}", labels.join(", "));
            }
            let _ = writeln!(out, "- API: none");
        }
        Element::Return(r) => {
            let _ = writeln!(out, "- Type: {kind}");
            fields(out, "", "Return fields", &r.fields);
        }
    }
    if !matches!(elem, Element::Return(_)) {
        let tables: Vec<_> = doc.bound_tables(elem).collect();
        if tables.is_empty() {
            let _ = writeln!(out, "- Decision Tables: none");
        } else {
            let _ = writeln!(out, "- Decision Tables:");
            for t in tables {
                let _ = writeln!(out, "  - {}:", t.id);
                for r in &t.rules {
                    rule(out, r);
                }
            }
        }
    }
    Ok(())
}

/// Renders the four-part prompt for one target over its pruned context.
///
/// The contextual section holds one block per member of `context` in
/// document order followed by the target block; nothing else from the
/// diagram is included.
pub fn build_prompt(
    analysis: &Analysis<'_>,
    target: &str,
    context: &PredecessorSet,
) -> Result<PromptDocument, PromptError> {
    let uc = analysis.usecase;
    let target_id = analysis.edg.node(analysis.edg.index_of(target)?).id.clone();
    if context.target != target_id {
        return Err(PromptError::ContextMismatch {
            target: target_id,
            context: context.target.clone(),
        });
    }
    if analysis.consumed(target)?.is_empty() {
        return Err(PromptError::NoConsumption(target_id));
    }

    let mut ctx = String::new();
    let _ = writeln!(ctx, "**Sequence Diagram Context:**");
    let _ = writeln!(ctx, "Use case \"{}\" with participants {}.", uc.name, uc.participants.join(", "));
    fields(&mut ctx, "", "Input fields", &uc.input_fields);
    let _ = writeln!(ctx, "\n**Reachable Nodes P({target_id}):**");
    let mut blocks = Vec::with_capacity(context.members.len() + 1);
    for s in &context.members {
        node_block(&mut ctx, analysis, s)?;
        blocks.push(s.clone());
    }
    let _ = writeln!(ctx, "\n**Target Node t = {target_id}:**");
    node_block(&mut ctx, analysis, &target_id)?;
    blocks.push(target_id.clone());

    let bodies = [
        PROBLEM.to_string(),
        ctx.trim_end().to_string(),
        CONSTRAINTS.to_string(),
        OUTPUT.to_string(),
    ];
    let sections: Vec<PromptSection> = HEADINGS
        .iter()
        .zip(bodies)
        .map(|(h, body)| PromptSection {
            heading: h.to_string(),
            body,
        })
        .collect();
    let rendered = sections
        .iter()
        .map(|s| format!("# {}\n\n{}\n", s.heading, s.body))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(PromptDocument {
        usecase: uc.name.clone(),
        target: target_id,
        blocks,
        sections,
        rendered,
    })
}

/// Node ids of the `### id` blocks in a rendered contextual section.
pub fn block_ids(section_body: &str) -> Vec<&str> {
    section_body
        .lines()
        .filter_map(|l| l.strip_prefix("### "))
        .collect()
}
