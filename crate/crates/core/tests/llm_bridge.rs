mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use seqdep::engine::edge_violations;
use seqdep::llm::{
    block_ids, build_prompt, infer_with_llm, LlmRequest, ReplayTransport, SamplingParams,
    StubTransport, Transport, TransportError, HEADINGS,
};
use seqdep::{Analysis, Category, DependencyEdge, DiagCode};

const VALID: &str = "The target m2 needs user_id from the input.\n[{\"source\":\"@input\",\"data\":\"user_id\",\"target\":\"m2\",\"category\":\"api\"}]\n";
const OUT_OF_CONTEXT: &str = "```json\n{\"edges\": [\n  {\"source\": \"@input\", \"data\": \"user_id\", \"target\": \"m2\", \"category\": \"api\"},\n  {\"source\": \"r_err\", \"data\": \"amount\", \"target\": \"m2\", \"category\": \"api\"}\n]}\n```\n";
const GARBAGE: &str = "I could not work out the dependencies for this node.\n";

struct Counting<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T: Transport> Transport for Counting<T> {
    fn send(&self, request: &LlmRequest<'_>) -> Result<String, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}

/// Replay directory for one scenario; with `SEQDEP_BLESS` set the fixture
/// for the current demo/m2 prompt is (re)written first.
fn replay(scenario: &str, response: &str) -> Counting<ReplayTransport> {
    let t = ReplayTransport::new(common::fixtures().join("replay").join(scenario));
    if common::bless() {
        let doc = common::demo();
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let prompt = build_prompt(&a, "m2", a.predecessors("m2").unwrap()).unwrap();
        let _ = std::fs::remove_dir_all(&t.dir);
        t.record(
            &LlmRequest {
                usecase: "Demo",
                target: "m2",
                prompt: &prompt.rendered,
                params: SamplingParams::default(),
            },
            response,
        )
        .unwrap();
    }
    Counting {
        inner: t,
        calls: AtomicUsize::new(0),
    }
}

#[test]
fn replay_valid_fixture() {
    let doc = common::demo();
    let a = Analysis::new(&doc, &doc.usecases[0]);
    let t = replay("valid", VALID);
    let r = infer_with_llm(&a, "m2", &t, SamplingParams::default()).unwrap();
    assert_eq!(r.edges, [DependencyEdge::new("@input", "user_id", "m2", Category::Api)]);
    assert!(r.diagnostics.is_empty(), "{:?}", r.diagnostics);
    assert_eq!(t.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn replay_drops_edge_outside_context() {
    let doc = common::demo();
    let a = Analysis::new(&doc, &doc.usecases[0]);
    let r = infer_with_llm(&a, "m2", &replay("out_of_context", OUT_OF_CONTEXT), SamplingParams::default()).unwrap();
    assert_eq!(r.edges.len(), 1);
    assert_eq!(r.diagnostics.len(), 1);
    assert_eq!(r.diagnostics[0].code, DiagCode::EdgeConstraint);
    assert!(r.diagnostics[0].message.contains("r_err"));
}

#[test]
fn replay_garbage_retries_once() {
    let doc = common::demo();
    let a = Analysis::new(&doc, &doc.usecases[0]);
    let t = replay("garbage", GARBAGE);
    let r = infer_with_llm(&a, "m2", &t, SamplingParams::default()).unwrap();
    assert!(r.edges.is_empty());
    assert_eq!(r.diagnostics.len(), 1);
    assert_eq!(r.diagnostics[0].code, DiagCode::ResponseFormat);
    assert!(r.diagnostics[0].message.contains("could not work out"));
    assert_eq!(t.calls.load(Ordering::SeqCst), 2);
}

#[test]
fn missing_replay_is_a_transport_error() {
    let doc = common::demo();
    let a = Analysis::new(&doc, &doc.usecases[0]);
    let t = ReplayTransport::new(common::fixtures().join("replay").join("valid"));
    let r = infer_with_llm(&a, "r_ok", &t, SamplingParams::default()).unwrap();
    assert_eq!(r.diagnostics[0].code, DiagCode::Transport);
}

#[test]
fn prompt_contract_on_demo() {
    let doc = common::demo();
    let a = Analysis::new(&doc, &doc.usecases[0]);
    let p1 = build_prompt(&a, "m2", a.predecessors("m2").unwrap()).unwrap();
    let p2 = build_prompt(&a, "m2", a.predecessors("m2").unwrap()).unwrap();
    assert_eq!(p1.rendered.as_bytes(), p2.rendered.as_bytes());
    let mut at = 0;
    for h in HEADINGS {
        let marker = format!("# {h}\n");
        assert_eq!(p1.rendered.matches(&marker).count(), 1, "{h}");
        let pos = p1.rendered.find(&marker).unwrap();
        assert!(pos >= at);
        at = pos;
    }
    assert_eq!(block_ids(&p1.sections[1].body), ["@input", "m1", "f1", "m2"]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prompt_blocks_equal_context(seed in any::<u64>()) {
        let doc = common::random_doc(seed);
        let a = Analysis::new(&doc, &doc.usecases[0]);
        for node in a.edg.nodes().iter().skip(1) {
            let ctx = a.predecessors(node.id.as_str()).unwrap();
            match build_prompt(&a, node.id.as_str(), ctx) {
                Ok(p) => {
                    let mut want: Vec<&str> = ctx.members.iter().map(|m| m.as_str()).collect();
                    want.push(node.id.as_str());
                    prop_assert_eq!(block_ids(&p.sections[1].body), want);
                }
                Err(_) => prop_assert!(a.consumed(node.id.as_str()).unwrap().is_empty()),
            }
        }
    }

    /// Whatever the model says, returned edges pass the validator.
    #[test]
    fn returned_edges_are_admissible(
        seed in any::<u64>(),
        picks in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..12),
    ) {
        let doc = common::random_doc(seed);
        let a = Analysis::new(&doc, &doc.usecases[0]);
        let ids = doc.usecases[0].node_ids();
        let names: Vec<String> = ids
            .iter()
            .flat_map(|id| a.produced(id.as_str()).unwrap().into_iter().chain(a.consumed(id.as_str()).unwrap()))
            .map(|o| o.entity)
            .chain(["nothing".to_string()])
            .collect();
        for target in ids.iter().skip(1) {
            let edges: Vec<String> = picks
                .iter()
                .map(|(s, d, t)| {
                    let t = if t.index(4) == 0 { ids[t.index(ids.len())].as_str() } else { target.as_str() };
                    format!(
                        r#"{{"source":"{}","data":"{}","target":"{}","category":"api"}}"#,
                        ids[s.index(ids.len())], names[d.index(names.len())], t
                    )
                })
                .collect();
            let text = format!("answer: [{}]", edges.join(","));
            let Ok(r) = infer_with_llm(&a, target.as_str(), &StubTransport::fixed(text), SamplingParams::default()) else {
                continue;
            };
            for edge in &r.edges {
                prop_assert_eq!(&edge.target, target);
                prop_assert!(edge_violations(edge, &a).is_empty(), "{}", edge);
            }
        }
    }
}
