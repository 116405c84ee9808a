//! Seeded synthetic corpus: random use cases whose field names are wired
//! between messages, rule-engine gold, and perturbed predictions.

use std::collections::BTreeMap;
use std::path::Path;

use indexmap::IndexMap;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{infer_all, Analysis};
use crate::esd::serialize_document;
use crate::model::{
    ApiSpec, Branch, Category, DType, DecisionTable, DependencyEdge, Document, Element, Field,
    Fragment, FragmentKind, Message, NodeId, NodeKind, ReturnMessage, Rule, UseCase,
};

/// Entity names with fixed types so producers and consumers agree.
const POOL: &[(&str, &str)] = &[
    ("user_id", "uint64"),
    ("amount", "int64"),
    ("account_id", "uint64"),
    ("balance", "int64"),
    ("status", "string"),
    ("currency", "string"),
    ("daily_limit", "int64"),
    ("order_id", "string"),
    ("token", "string"),
    ("quota", "int64"),
    ("risk_level", "int32"),
    ("channel", "string"),
    ("card_no", "string"),
    ("bank_type", "string"),
    ("face_score", "int32"),
    ("pay_flag", "bool"),
    ("create_time", "uint64"),
    ("merchant_id", "uint64"),
    ("fee", "int64"),
    ("result_code", "int32"),
    ("auth_level", "int32"),
    ("region", "string"),
    ("device_id", "string"),
    ("nickname", "string"),
];

const MAX_NODES_LIMIT: usize = 40;
const MAX_DEPTH_LIMIT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusParams {
    pub n_usecases: usize,
    /// Upper bound on nodes per use case, `@input` included.
    pub max_nodes: usize,
    /// Upper bound on fragment nesting.
    pub max_depth: usize,
    /// Chance that a generated fragment is an `alt`.
    pub p_alt: f64,
    /// Chance that a message or fragment gets a decision table.
    pub p_table: f64,
    pub perturb: PerturbParams,
}

impl Default for CorpusParams {
    fn default() -> Self {
        CorpusParams {
            n_usecases: 11,
            max_nodes: 20,
            max_depth: 3,
            p_alt: 0.3,
            p_table: 0.4,
            perturb: PerturbParams::default(),
        }
    }
}

/// Per-gold-edge probabilities used to derive a prediction set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbParams {
    /// The edge is left out.
    pub p_drop: f64,
    /// The edge keeps data, target and category but gets another source.
    pub p_retarget: f64,
    /// A spurious edge is added alongside.
    pub p_add: f64,
}

impl Default for PerturbParams {
    fn default() -> Self {
        PerturbParams {
            p_drop: 0.1,
            p_retarget: 0.05,
            p_add: 0.1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorpusError {
    #[error("n_usecases must be at least 1")]
    NoUseCases,
    #[error("max_nodes must be between 2 and {MAX_NODES_LIMIT}, got {0}")]
    MaxNodes(usize),
    #[error("max_depth must be at most {MAX_DEPTH_LIMIT}, got {0}")]
    MaxDepth(usize),
    #[error("probability `{0}` must lie in [0, 1], got {1}")]
    Probability(&'static str, f64),
}

impl CorpusParams {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_usecases == 0 {
            return Err(CorpusError::NoUseCases);
        }
        if !(2..=MAX_NODES_LIMIT).contains(&self.max_nodes) {
            return Err(CorpusError::MaxNodes(self.max_nodes));
        }
        if self.max_depth > MAX_DEPTH_LIMIT {
            return Err(CorpusError::MaxDepth(self.max_depth));
        }
        let probs = [
            ("p_alt", self.p_alt),
            ("p_table", self.p_table),
            ("p_drop", self.perturb.p_drop),
            ("p_retarget", self.perturb.p_retarget),
            ("p_add", self.perturb.p_add),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(CorpusError::Probability(name, p));
            }
        }
        if self.perturb.p_drop + self.perturb.p_retarget > 1.0 {
            return Err(CorpusError::Probability("p_drop + p_retarget", self.perturb.p_drop + self.perturb.p_retarget));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub usecase: String,
    pub edges: Vec<DependencyEdge>,
}

impl GoldAnnotation {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusCase {
    pub document: Document,
    pub gold: GoldAnnotation,
    pub predicted: Vec<DependencyEdge>,
}

impl CorpusCase {
    pub fn name(&self) -> &str {
        &self.gold.usecase
    }
}

struct Gen<'r, R: Rng> {
    rng: &'r mut R,
    params: CorpusParams,
    remaining: usize,
    next_id: usize,
    apis: IndexMap<String, ApiSpec>,
    tables: IndexMap<String, DecisionTable>,
    /// Names produced so far, in generation order.
    available: Vec<&'static str>,
    participants: Vec<String>,
}

fn field(name: &str) -> Field {
    let dtype = POOL.iter().find(|(n, _)| *n == name).map_or("string", |(_, t)| t);
    Field::new(name, dtype.parse::<DType>().unwrap_or_else(|e| match e {}))
}

impl<R: Rng> Gen<'_, R> {
    fn id(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    fn pool_name(&mut self) -> &'static str {
        POOL.choose(self.rng).expect("pool is not empty").0
    }

    /// Up to `n` distinct names, mostly ones produced earlier.
    fn consumed(&mut self, n: usize) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for _ in 0..n {
            let name = if !self.available.is_empty() && self.rng.random_bool(0.95) {
                *self.available.choose(self.rng).expect("non-empty")
            } else {
                self.pool_name()
            };
            if !out.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    fn produced(&mut self, n: usize, exclude: &[&str]) -> Vec<&'static str> {
        let mut out: Vec<&'static str> = Vec::new();
        for _ in 0..n {
            let name = self.pool_name();
            if !out.contains(&name) && !exclude.contains(&name) {
                out.push(name);
            }
        }
        out
    }

    fn maybe_table(&mut self) -> Vec<String> {
        if !self.rng.random_bool(self.params.p_table) {
            return vec![];
        }
        let id = self.id("t");
        let n_rules = self.rng.random_range(1..=2);
        let mut rules = Vec::new();
        let mut writes_all = Vec::new();
        for _ in 0..n_rules {
            let (condition, condition_reads) = if self.rng.random_bool(0.7) {
                let k = self.rng.random_range(1..=2);
                let reads = self.consumed(k);
                let cond = reads.iter().map(|r| format!("{r} is valid")).collect::<Vec<_>>().join(" and ");
                (Some(cond), reads)
            } else {
                (None, vec![])
            };
            let action_reads = if self.rng.random_bool(0.3) { self.consumed(1) } else { vec![] };
            let writes = if self.rng.random_bool(0.3) { self.produced(1, &[]) } else { vec![] };
            writes_all.extend(writes.iter().copied());
            rules.push(Rule {
                condition,
                condition_reads: condition_reads.iter().map(|s| s.to_string()).collect(),
                action: "apply".to_string(),
                action_reads: action_reads.iter().map(|s| s.to_string()).collect(),
                action_writes: writes.iter().map(|w| field(w)).collect(),
            });
        }
        self.tables.insert(id.clone(), DecisionTable { id: id.clone(), rules });
        self.available.extend(writes_all);
        vec![id]
    }

    fn message(&mut self) -> Element {
        let id = self.id("m");
        let api = format!("Api{}", self.next_id);
        let from = self.participants.choose(self.rng).expect("participants").clone();
        let to = self.participants.choose(self.rng).expect("participants").clone();
        let k = self.rng.random_range(0..=2);
        let request = self.consumed(k);
        let k = self.rng.random_range(1..=2);
        let response = self.produced(k, &request);
        self.apis.insert(
            api.clone(),
            ApiSpec {
                name: api.clone(),
                description: format!("operation {}", self.next_id),
                request: request.iter().map(|n| field(n)).collect(),
                response: response.iter().map(|n| field(n)).collect(),
            },
        );
        let tables = self.maybe_table();
        self.available.extend(response);
        Element::Message(Message {
            id: NodeId::new(id),
            from,
            to,
            api,
            tables,
        })
    }

    fn ret(&mut self) -> Element {
        let id = self.id("r");
        let k = self.rng.random_range(1..=2);
        let fields = self.consumed(k).iter().map(|n| field(n)).collect();
        Element::Return(ReturnMessage {
            id: NodeId::new(id),
            fields,
        })
    }

    fn element(&mut self, depth: usize) -> Element {
        self.remaining -= 1;
        if depth < self.params.max_depth && self.remaining >= 1 && self.rng.random_bool(0.35) {
            self.fragment(depth + 1)
        } else {
            self.message()
        }
    }

    fn body(&mut self, depth: usize) -> Vec<Element> {
        let want = self.rng.random_range(1..=3);
        let mut out = Vec::new();
        while out.len() < want && self.remaining > 0 {
            out.push(self.element(depth));
        }
        out
    }

    fn fragment(&mut self, depth: usize) -> Element {
        let kind = if self.rng.random_bool(self.params.p_alt) {
            FragmentKind::Alt
        } else {
            *[FragmentKind::Opt, FragmentKind::Loop, FragmentKind::Break]
                .choose(self.rng)
                .expect("non-empty")
        };
        let id = self.id("f");
        let tables = self.maybe_table();
        let n_branches = if kind == FragmentKind::Alt { self.rng.random_range(2..=3) } else { 1 };
        let mut branches = Vec::new();
        let mut returning = 0;
        for b in 0..n_branches {
            let mut elements = self.body(depth);
            let last = b + 1 == n_branches;
            let may_return = kind != FragmentKind::Loop && !(kind == FragmentKind::Alt && last && returning == b);
            if may_return && self.remaining > 0 && self.rng.random_bool(0.3) {
                self.remaining -= 1;
                elements.push(self.ret());
                returning += 1;
            }
            let label = if kind == FragmentKind::Alt { format!("case{}", b + 1) } else { String::new() };
            branches.push(Branch { label, elements });
        }
        Element::Fragment(Fragment {
            id: NodeId::new(id),
            kind,
            tables,
            branches,
        })
    }
}

/// One random single-use-case document.
///
/// Returns only end alt/opt/break branches or the top level, every alt
/// keeps a branch that runs on, and loop bodies never end in a return, so
/// every node lies on some execution path.
pub fn random_document<R: Rng>(rng: &mut R, params: &CorpusParams, name: &str) -> Document {
    let n_participants = rng.random_range(2..=4);
    let participants: Vec<String> = (1..=n_participants).map(|i| format!("p{i}")).collect();
    let target = rng.random_range(1..=params.max_nodes - 1);
    let mut g = Gen {
        rng,
        params: *params,
        remaining: target - 1,
        next_id: 0,
        apis: IndexMap::new(),
        tables: IndexMap::new(),
        available: Vec::new(),
        participants,
    };
    let k = g.rng.random_range(1..=3);
    let input = g.produced(k, &[]);
    g.available.extend(input.iter().copied());
    let mut body = Vec::new();
    while g.remaining > 0 {
        body.push(g.element(1));
    }
    body.push(g.ret());
    let usecase = UseCase::new(
        name,
        input.iter().map(|n| field(n)).collect(),
        g.participants.clone(),
        body,
    )
    .expect("generated ids are unique");
    Document {
        usecases: vec![usecase],
        apis: g.apis,
        tables: g.tables,
        source_path: String::new(),
    }
}

/// Derives a prediction from `gold`: each edge is dropped, given another
/// source, or kept, and may be joined by a spurious edge.
pub fn perturb<R: Rng>(
    rng: &mut R,
    usecase: &UseCase,
    gold: &[DependencyEdge],
    params: &PerturbParams,
) -> Vec<DependencyEdge> {
    let ids = usecase.node_ids();
    let kind = |id: &NodeId| usecase.node_kind(id.as_str()).expect("indexed node");
    let sources: Vec<&NodeId> = ids.iter().filter(|id| kind(id).can_produce()).collect();
    let targets: Vec<&NodeId> = ids.iter().filter(|id| kind(id).can_consume()).collect();
    let mut out: Vec<DependencyEdge> = Vec::new();
    let push = |out: &mut Vec<DependencyEdge>, e: DependencyEdge| {
        if !out.contains(&e) {
            out.push(e);
        }
    };
    for e in gold {
        let u: f64 = rng.random();
        if u < params.p_drop {
            // dropped
        } else if u < params.p_drop + params.p_retarget {
            let others: Vec<&&NodeId> = sources.iter().filter(|s| ***s != e.source && ***s != e.target).collect();
            match others.choose(rng) {
                Some(s) => push(&mut out, DependencyEdge::new((**s).clone(), e.data.clone(), e.target.clone(), e.category)),
                None => push(&mut out, e.clone()),
            }
        } else {
            push(&mut out, e.clone());
        }
        if params.p_add > 0.0 && rng.random_bool(params.p_add) {
            let s = (*sources.choose(rng).expect("@input")).clone();
            let Some(t) = targets.choose(rng) else { continue };
            let data = POOL.choose(rng).expect("pool").0;
            let category = *Category::ALL.choose(rng).expect("categories");
            let spurious = DependencyEdge::new(s, data, (*t).clone(), category);
            if spurious.source != spurious.target && !gold.contains(&spurious) {
                push(&mut out, spurious);
            }
        }
    }
    out
}

/// Generates `params.n_usecases` documents named `UC01`, `UC02`, ... with
/// rule-engine gold and perturbed predictions. A pure function of
/// `(seed, params)`.
pub fn gen_corpus(seed: u64, params: &CorpusParams) -> Result<Vec<CorpusCase>, CorpusError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(params.n_usecases);
    for i in 0..params.n_usecases {
        let name = format!("UC{:02}", i + 1);
        let document = random_document(&mut rng, params, &name);
        let uc = &document.usecases[0];
        let analysis = Analysis::new(&document, uc);
        let mut edges = infer_all(&analysis).edges;
        edges.sort();
        let mut predicted = perturb(&mut rng, uc, &edges, &params.perturb);
        predicted.shuffle(&mut rng);
        let gold = GoldAnnotation {
            usecase: name,
            edges,
        };
        out.push(CorpusCase {
            document,
            gold,
            predicted,
        });
    }
    Ok(out)
}

/// File name to content for a corpus: `<name>.esd`, `<name>.gold.json` and
/// `<name>.pred.json` per use case.
pub fn corpus_files(cases: &[CorpusCase]) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for c in cases {
        let name = c.name();
        files.insert(format!("{name}.esd"), serialize_document(&c.document));
        files.insert(format!("{name}.gold.json"), c.gold.to_json() + "\n");
        let pred = GoldAnnotation {
            usecase: name.to_string(),
            edges: c.predicted.clone(),
        };
        files.insert(format!("{name}.pred.json"), pred.to_json() + "\n");
    }
    files
}

pub fn write_corpus(dir: &Path, cases: &[CorpusCase]) -> std::io::Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, content) in corpus_files(cases) {
        let path = dir.join(name);
        std::fs::write(&path, content)?;
        written.push(path);
    }
    Ok(written)
}

/// Node and edge counts of one use case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub nodes: usize,
    pub function: usize,
    pub control: usize,
    pub output: usize,
    pub edges: usize,
}

pub fn corpus_stats(case: &CorpusCase) -> CorpusStats {
    let uc = &case.document.usecases[0];
    let count = |k: NodeKind| uc.elements().iter().filter(|e| e.kind() == k).count();
    CorpusStats {
        nodes: uc.node_count(),
        function: count(NodeKind::Function),
        control: count(NodeKind::Control),
        output: count(NodeKind::Output),
        edges: case.gold.edges.len(),
    }
}
