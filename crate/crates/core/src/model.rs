//! Domain model shared by every stage: parsed diagrams, API specifications,
//! decision tables, node classification, dependency edges and diagnostics.
//!
//! Everything here is immutable once built. A [`UseCase`] carries a private
//! index from node id to element so that lookups do not need to walk the
//! element tree.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine;

/// Reserved id of the synthesized input node.
pub const INPUT_NODE: &str = "@input";

/// Identifier of a node inside one use case.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn input() -> Self {
        NodeId(INPUT_NODE.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_input(&self) -> bool {
        self.0 == INPUT_NODE
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl PartialEq<str> for NodeId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for NodeId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// Lowercase snake-case form used for entity identity.
pub fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.trim().chars() {
        match ch {
            '-' | ' ' | '.' => out.push('_'),
            c => out.extend(c.to_lowercase()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseType {
    Uint32,
    Uint64,
    Int32,
    Int64,
    String,
    Bool,
    Decimal,
    Named(std::string::String),
}

impl BaseType {
    fn keyword(&self) -> &str {
        match self {
            BaseType::Uint32 => "uint32",
            BaseType::Uint64 => "uint64",
            BaseType::Int32 => "int32",
            BaseType::Int64 => "int64",
            BaseType::String => "string",
            BaseType::Bool => "bool",
            BaseType::Decimal => "decimal",
            BaseType::Named(name) => name,
        }
    }

    fn from_keyword(word: &str) -> BaseType {
        match word {
            "uint32" => BaseType::Uint32,
            "uint64" => BaseType::Uint64,
            "int32" => BaseType::Int32,
            "int64" => BaseType::Int64,
            "string" => BaseType::String,
            "bool" => BaseType::Bool,
            "decimal" => BaseType::Decimal,
            other => BaseType::Named(other.to_string()),
        }
    }

    /// Numeric width lattice: `uint32 < uint64`, `int32 < int64`.
    fn widens_to(&self, other: &BaseType) -> bool {
        matches!(
            (self, other),
            (BaseType::Uint32, BaseType::Uint64) | (BaseType::Int32, BaseType::Int64)
        )
    }
}

/// Field data type, optionally a list of the base type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DType {
    pub base: BaseType,
    pub list: bool,
}

impl DType {
    pub fn scalar(base: BaseType) -> Self {
        DType { base, list: false }
    }

    /// True when a value of `self` converts losslessly into `other`.
    pub fn widens_to(&self, other: &DType) -> bool {
        self.list == other.list && self.base.widens_to(&other.base)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.base.keyword())?;
        if self.list {
            f.write_str("[]")?;
        }
        Ok(())
    }
}

impl FromStr for DType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (word, list) = match s.strip_suffix("[]") {
            Some(w) => (w, true),
            None => (s, false),
        };
        Ok(DType {
            base: BaseType::from_keyword(word),
            list,
        })
    }
}

impl Serialize for DType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Ok(raw.parse().unwrap_or_else(|e| match e {}))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Field {
    pub name: String,
    pub dtype: DType,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub description: String,
}

impl Field {
    pub fn new(name: impl Into<String>, dtype: DType) -> Self {
        Field {
            name: name.into(),
            dtype,
            description: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiSpec {
    pub name: String,
    pub description: String,
    pub request: Vec<Field>,
    pub response: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rule {
    /// Absent for unconditional rules.
    pub condition: Option<String>,
    pub condition_reads: Vec<String>,
    pub action: String,
    pub action_reads: Vec<String>,
    pub action_writes: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DecisionTable {
    pub id: String,
    pub rules: Vec<Rule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FragmentKind {
    Opt,
    Alt,
    Loop,
    Break,
}

impl FragmentKind {
    pub fn keyword(self) -> &'static str {
        match self {
            FragmentKind::Opt => "opt",
            FragmentKind::Alt => "alt",
            FragmentKind::Loop => "loop",
            FragmentKind::Break => "break",
        }
    }
}

impl fmt::Display for FragmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Message {
    pub id: NodeId,
    pub from: String,
    pub to: String,
    pub api: String,
    pub tables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Fragment {
    pub id: NodeId,
    pub kind: FragmentKind,
    pub tables: Vec<String>,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Branch {
    /// Empty for the single body of `opt`, `loop` and `break`.
    pub label: String,
    pub elements: Vec<Element>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReturnMessage {
    pub id: NodeId,
    pub fields: Vec<Field>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "element", rename_all = "lowercase")]
pub enum Element {
    Message(Message),
    Fragment(Fragment),
    Return(ReturnMessage),
}

impl Element {
    pub fn id(&self) -> &NodeId {
        match self {
            Element::Message(m) => &m.id,
            Element::Fragment(f) => &f.id,
            Element::Return(r) => &r.id,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Element::Message(_) => NodeKind::Function,
            Element::Fragment(_) => NodeKind::Control,
            Element::Return(_) => NodeKind::Output,
        }
    }

    /// Decision tables bound to this element, in binding order.
    pub fn tables(&self) -> &[String] {
        match self {
            Element::Message(m) => &m.tables,
            Element::Fragment(f) => &f.tables,
            Element::Return(_) => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Input,
    Function,
    Control,
    Output,
}

impl NodeKind {
    pub fn can_produce(self) -> bool {
        !matches!(self, NodeKind::Output)
    }

    pub fn can_consume(self) -> bool {
        !matches!(self, NodeKind::Input)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Input => "Input",
            NodeKind::Function => "Function",
            NodeKind::Control => "Control",
            NodeKind::Output => "Output",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct NodeEntry {
    doc_order: usize,
    /// Top-level index followed by (branch, element) index pairs.
    path: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(NodeId),
    #[error("node id `{0}` is reserved")]
    ReservedNode(NodeId),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LookupError {
    #[error("unknown node `{node}` in use case `{usecase}`")]
    UnknownNode { usecase: String, node: String },
    #[error("unknown use case `{0}`")]
    UnknownUseCase(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UseCase {
    pub name: String,
    pub input_fields: Vec<Field>,
    pub participants: Vec<String>,
    pub body: Vec<Element>,
    #[serde(skip)]
    index: BTreeMap<NodeId, NodeEntry>,
}

impl UseCase {
    pub fn new(
        name: impl Into<String>,
        input_fields: Vec<Field>,
        participants: Vec<String>,
        body: Vec<Element>,
    ) -> Result<Self, ModelError> {
        let mut index = BTreeMap::new();
        let mut order = 1;
        let mut path = Vec::new();
        index_scope(&body, &mut path, &mut order, &mut index)?;
        Ok(UseCase {
            name: name.into(),
            input_fields,
            participants,
            body,
            index,
        })
    }

    /// Number of nodes including the input node.
    pub fn node_count(&self) -> usize {
        self.index.len() + 1
    }

    pub fn contains(&self, id: &str) -> bool {
        id == INPUT_NODE || self.index.contains_key(id)
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        let entry = self.index.get(id)?;
        let mut scope = &self.body;
        let mut elem = scope.get(entry.path[0])?;
        for pair in entry.path[1..].chunks(2) {
            let Element::Fragment(f) = elem else {
                return None;
            };
            scope = &f.branches.get(pair[0])?.elements;
            elem = scope.get(pair[1])?;
        }
        Some(elem)
    }

    /// Pre-order position in the source text; `@input` is 0.
    pub fn doc_order(&self, id: &str) -> Option<usize> {
        if id == INPUT_NODE {
            return Some(0);
        }
        self.index.get(id).map(|e| e.doc_order)
    }

    /// All node ids in document order, starting with `@input`.
    pub fn node_ids(&self) -> Vec<NodeId> {
        let mut ids: Vec<(usize, &NodeId)> =
            self.index.iter().map(|(id, e)| (e.doc_order, id)).collect();
        ids.sort();
        std::iter::once(NodeId::input())
            .chain(ids.into_iter().map(|(_, id)| id.clone()))
            .collect()
    }

    /// Every element in pre-order.
    pub fn elements(&self) -> Vec<&Element> {
        fn walk<'a>(scope: &'a [Element], out: &mut Vec<&'a Element>) {
            for e in scope {
                out.push(e);
                if let Element::Fragment(f) = e {
                    for b in &f.branches {
                        walk(&b.elements, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut out);
        out
    }

    pub fn node_kind(&self, id: &str) -> Result<NodeKind, LookupError> {
        if id == INPUT_NODE {
            return Ok(NodeKind::Input);
        }
        self.element(id)
            .map(Element::kind)
            .ok_or_else(|| LookupError::UnknownNode {
                usecase: self.name.clone(),
                node: id.to_string(),
            })
    }
}

fn index_scope(
    scope: &[Element],
    path: &mut Vec<usize>,
    order: &mut usize,
    index: &mut BTreeMap<NodeId, NodeEntry>,
) -> Result<(), ModelError> {
    for (i, elem) in scope.iter().enumerate() {
        let id = elem.id();
        if id.is_input() {
            return Err(ModelError::ReservedNode(id.clone()));
        }
        path.push(i);
        let entry = NodeEntry {
            doc_order: *order,
            path: path.clone(),
        };
        if index.insert(id.clone(), entry).is_some() {
            return Err(ModelError::DuplicateNode(id.clone()));
        }
        *order += 1;
        if let Element::Fragment(f) = elem {
            for (b, branch) in f.branches.iter().enumerate() {
                path.push(b);
                index_scope(&branch.elements, path, order, index)?;
                path.pop();
            }
        }
        path.pop();
    }
    Ok(())
}

/// A parsed ESD file.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Document {
    pub usecases: Vec<UseCase>,
    pub apis: IndexMap<String, ApiSpec>,
    pub tables: IndexMap<String, DecisionTable>,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub source_path: String,
}

impl Document {
    pub fn usecase(&self, name: &str) -> Result<&UseCase, LookupError> {
        self.usecases
            .iter()
            .find(|u| u.name == name)
            .ok_or_else(|| LookupError::UnknownUseCase(name.to_string()))
    }

    /// Tables bound to `elem` that exist in the document.
    pub fn bound_tables<'a>(&'a self, elem: &'a Element) -> impl Iterator<Item = &'a DecisionTable> {
        elem.tables().iter().filter_map(|t| self.tables.get(t))
    }

    pub fn api_of(&self, message: &Message) -> Option<&ApiSpec> {
        self.apis.get(&message.api)
    }
}

/// Classifies `node_id` into one of the four disjoint node sets.
pub fn node_kind(node_id: &str, usecase: &UseCase) -> Result<NodeKind, LookupError> {
    usecase.node_kind(node_id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Api,
    Condition,
    Action,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Api, Category::Condition, Category::Action];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Api => "api",
            Category::Condition => "condition",
            Category::Action => "action",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "api" => Ok(Category::Api),
            "condition" => Ok(Category::Condition),
            "action" => Ok(Category::Action),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

/// A data dependency `(source, data, target)` with its consumption category.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DependencyEdge {
    pub source: NodeId,
    pub data: String,
    pub target: NodeId,
    pub category: Category,
}

impl DependencyEdge {
    pub fn new(
        source: impl Into<NodeId>,
        data: impl Into<String>,
        target: impl Into<NodeId>,
        category: Category,
    ) -> Self {
        DependencyEdge {
            source: source.into(),
            data: data.into(),
            target: target.into(),
            category,
        }
    }

    /// Builds an edge only if its endpoints satisfy the producer/consumer
    /// kind constraints.
    pub fn checked(
        usecase: &UseCase,
        source: impl Into<NodeId>,
        data: impl Into<String>,
        target: impl Into<NodeId>,
        category: Category,
    ) -> Result<Self, EdgeKindViolation> {
        let edge = DependencyEdge::new(source, data, target, category);
        check_edge_kinds(usecase, &edge.source, &edge.target)?;
        Ok(edge)
    }

    /// Same edge with names normalized, for matching.
    pub fn normalized(&self) -> DependencyEdge {
        DependencyEdge {
            source: NodeId::new(self.source.as_str().trim()),
            data: normalize_name(&self.data),
            target: NodeId::new(self.target.as_str().trim()),
            category: self.category,
        }
    }
}

impl fmt::Display for DependencyEdge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.source, self.data, self.target, self.category
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EdgeKindViolation {
    #[error(transparent)]
    Lookup(#[from] LookupError),
    #[error("source `{0}` is an {1} node and cannot produce data")]
    SourceKind(NodeId, NodeKind),
    #[error("target `{0}` is an {1} node and cannot consume data")]
    TargetKind(NodeId, NodeKind),
    #[error("edge loops on `{0}`")]
    SelfLoop(NodeId),
}

pub fn check_edge_kinds(
    usecase: &UseCase,
    source: &NodeId,
    target: &NodeId,
) -> Result<(), EdgeKindViolation> {
    let sk = usecase.node_kind(source.as_str())?;
    let tk = usecase.node_kind(target.as_str())?;
    if !sk.can_produce() {
        return Err(EdgeKindViolation::SourceKind(source.clone(), sk));
    }
    if !tk.can_consume() {
        return Err(EdgeKindViolation::TargetKind(target.clone(), tk));
    }
    if source == target {
        return Err(EdgeKindViolation::SelfLoop(source.clone()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

/// Registry of diagnostic codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagCode {
    #[serde(rename = "E_MISSING_SOURCE")]
    MissingSource,
    #[serde(rename = "W_TYPE_COMPAT")]
    TypeCompat,
    #[serde(rename = "E_EDGE_CONSTRAINT")]
    EdgeConstraint,
    #[serde(rename = "E_PARSE")]
    Parse,
    #[serde(rename = "E_DESIGN_RULE")]
    DesignRule,
    #[serde(rename = "W_DESIGN_RULE")]
    DesignRuleWarning,
    #[serde(rename = "W_AMBIGUOUS_SLOT")]
    AmbiguousSlot,
    #[serde(rename = "E_ORACLE_BUDGET")]
    OracleBudget,
    #[serde(rename = "E_NO_CONSUMPTION")]
    NoConsumption,
    #[serde(rename = "E_RESPONSE_FORMAT")]
    ResponseFormat,
    #[serde(rename = "E_TRANSPORT")]
    Transport,
    #[serde(rename = "E_LOOKUP")]
    Lookup,
    #[serde(rename = "E_USAGE")]
    Usage,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::MissingSource => "E_MISSING_SOURCE",
            DiagCode::TypeCompat => "W_TYPE_COMPAT",
            DiagCode::EdgeConstraint => "E_EDGE_CONSTRAINT",
            DiagCode::Parse => "E_PARSE",
            DiagCode::DesignRule => "E_DESIGN_RULE",
            DiagCode::DesignRuleWarning => "W_DESIGN_RULE",
            DiagCode::AmbiguousSlot => "W_AMBIGUOUS_SLOT",
            DiagCode::OracleBudget => "E_ORACLE_BUDGET",
            DiagCode::NoConsumption => "E_NO_CONSUMPTION",
            DiagCode::ResponseFormat => "E_RESPONSE_FORMAT",
            DiagCode::Transport => "E_TRANSPORT",
            DiagCode::Lookup => "E_LOOKUP",
            DiagCode::Usage => "E_USAGE",
        }
    }

    pub fn severity(self) -> Severity {
        if self.as_str().starts_with("W_") {
            Severity::Warning
        } else {
            Severity::Error
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: DiagCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity: Option<String>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: code.severity(),
            code,
            node: None,
            entity: None,
            message: message.into(),
        }
    }

    pub fn at(mut self, node: impl Into<NodeId>) -> Self {
        self.node = Some(node.into());
        self
    }

    pub fn entity(mut self, entity: impl Into<String>) -> Self {
        self.entity = Some(entity.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code)?;
        if let Some(node) = &self.node {
            write!(f, " [{node}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl From<LookupError> for Diagnostic {
    fn from(e: LookupError) -> Self {
        let diag = Diagnostic::new(DiagCode::Lookup, e.to_string());
        match e {
            LookupError::UnknownNode { node, .. } => diag.at(node),
            LookupError::UnknownUseCase(_) => diag,
        }
    }
}

/// Category of an edge whose data is consumed by its target.
///
/// Precedence is `api > condition > action`; when the entity sits in more
/// than one slot of the target a `W_AMBIGUOUS_SLOT` warning is returned with
/// the category.
pub fn classify_edge_category(
    source: &NodeId,
    data: &str,
    target: &NodeId,
    usecase: &UseCase,
    document: &Document,
) -> Result<(Category, Option<Diagnostic>), Diagnostic> {
    let consumed = engine::data_consumed(target.as_str(), usecase, document).map_err(Diagnostic::from)?;
    let mut slots: Vec<Category> = consumed
        .iter()
        .filter(|occ| occ.entity == data)
        .map(|occ| occ.slot.category())
        .collect();
    slots.sort();
    slots.dedup();
    let Some(&category) = slots.first() else {
        return Err(Diagnostic::new(
            DiagCode::EdgeConstraint,
            format!("`{data}` is not consumed by `{target}` (edge from `{source}`)"),
        )
        .at(target.clone())
        .entity(data));
    };
    let warning = (slots.len() > 1).then(|| {
        let names: Vec<&str> = slots.iter().map(|c| c.as_str()).collect();
        Diagnostic::new(
            DiagCode::AmbiguousSlot,
            format!(
                "`{data}` is consumed by `{target}` as {}; classified as {category}",
                names.join(" and ")
            ),
        )
        .at(target.clone())
        .entity(data)
    });
    Ok((category, warning))
}
