use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use seqdep::llm::ReplayTransport;
use seqdep_cli::server::{router, AppState};
use seqdep_cli::workspace::Workspace;

fn fixtures() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures"))
}

fn demo_state() -> Arc<AppState> {
    Arc::new(AppState::new(Workspace::new(fixtures())))
}

async fn call(state: Arc<AppState>, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

async fn get(state: Arc<AppState>, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(state, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, serde_json::from_slice(&b).unwrap())
}

async fn post(state: Arc<AppState>, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let (s, b) = call(state, req).await;
    (s, serde_json::from_slice(&b).unwrap())
}

#[tokio::test]
async fn lists_demo() {
    let (s, v) = get(demo_state(), "/api/usecases").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["usecases"], json!(["Demo"]));
}

#[tokio::test]
async fn infer_m2_rule() {
    let (s, v) = post(demo_state(), "/api/infer", r#"{"usecase":"Demo","target":"m2","engine":"rule"}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["edges"].as_array().unwrap().len(), 2);
    assert_eq!(v["diagnostics"].as_array().unwrap().len(), 0);
    assert_eq!(v["schema_version"], 1);
}

#[tokio::test]
async fn infer_global() {
    let (s, v) = post(demo_state(), "/api/infer", r#"{"usecase":"Demo"}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["edges"].as_array().unwrap().len(), 5);
    assert_eq!(v["diagnostics"][0]["code"], "E_MISSING_SOURCE");
}

#[tokio::test]
async fn unknown_target_is_400_lookup() {
    let (s, v) = post(demo_state(), "/api/infer", r#"{"usecase":"Demo","target":"zz"}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "E_LOOKUP");
    assert_eq!(v["schema_version"], 1);
}

#[tokio::test]
async fn malformed_bodies_are_400_diagnostics() {
    for body in ["{not json", r#"{"target":"m2"}"#, ""] {
        let (s, v) = post(demo_state(), "/api/infer", body).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
        assert_eq!(v["error"]["code"], "E_USAGE");
    }
    let (s, _) = post(demo_state(), "/api/parse", "[]").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn llm_engine_without_transport_is_refused() {
    let (s, v) = post(demo_state(), "/api/infer", r#"{"usecase":"Demo","target":"m2","engine":"llm"}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "E_USAGE");
}

#[tokio::test]
async fn llm_engine_with_replay() {
    let mut state = AppState::new(Workspace::new(fixtures()));
    state.transport = Some(Arc::new(ReplayTransport::new(fixtures().join("replay/out_of_context"))));
    let (s, v) = post(Arc::new(state), "/api/infer", r#"{"usecase":"Demo","target":"m2","engine":"llm"}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["engine"], "llm");
    let codes: Vec<&str> = v["diagnostics"].as_array().unwrap().iter().map(|d| d["code"].as_str().unwrap()).collect();
    assert!(codes.contains(&"E_EDGE_CONSTRAINT"));
}

#[tokio::test]
async fn usecase_edg_and_prune() {
    let (s, v) = get(demo_state(), "/api/usecase/Demo").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["usecase"]["name"], "Demo");
    assert!(v["apis"]["Debit"].is_object());

    let (s, v) = get(demo_state(), "/api/usecase/Demo/edg").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["nodes"].as_array().unwrap().len(), 6);

    let (s, v) = get(demo_state(), "/api/usecase/Demo/prune?target=m2").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["members"], json!(["@input", "m1", "f1"]));
    assert_eq!(v["ratio"], 0.6);

    let (s, v) = get(demo_state(), "/api/usecase/Demo/prune").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"]["code"], "E_USAGE");

    let (s, v) = get(demo_state(), "/api/usecase/Nope").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "E_LOOKUP");
}

#[tokio::test]
async fn parse_and_eval() {
    let text = std::fs::read_to_string(fixtures().join("demo.esd")).unwrap();
    let (s, v) = post(demo_state(), "/api/parse", json!({ "text": text }).to_string()).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ok"], true);
    assert_eq!(v["document"]["usecases"][0]["name"], "Demo");

    let (s, v) = post(demo_state(), "/api/parse", r#"{"text":""}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ok"], false);
    assert_eq!(v["diagnostics"][0]["code"], "E_PARSE");

    let e = json!({"source":"@input","data":"user_id","target":"m2","category":"api"});
    let body = json!({"usecase":"Demo","predicted":[e],"gold":[e]}).to_string();
    let (s, v) = post(demo_state(), "/api/eval", body).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["per_usecase"]["Demo"]["overall"]["f1"], 1.0);
    assert_eq!(v["schema_version"], 1);
}

#[tokio::test]
async fn responses_are_byte_identical() {
    let state = demo_state();
    let body = r#"{"usecase":"Demo"}"#;
    let mk = || Request::post("/api/infer").body(Body::from(body)).unwrap();
    let (_, a) = call(state.clone(), mk()).await;
    let (_, b) = call(state.clone(), mk()).await;
    assert_eq!(a, b);
    let (_, c) = call(demo_state(), mk()).await;
    assert_eq!(a, c);
}

#[tokio::test]
async fn cache_follows_file_changes() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixtures().join("demo.esd")).unwrap();
    let file = dir.path().join("demo.esd");
    std::fs::write(&file, &text).unwrap();
    let state = Arc::new(AppState::new(Workspace::new(dir.path())));
    let (_, v) = get(state.clone(), "/api/usecases").await;
    assert_eq!(v["usecases"], json!(["Demo"]));

    std::fs::write(&file, text.replace("usecase \"Demo\"", "usecase \"Renamed Demo\"")).unwrap();
    let (_, v) = get(state.clone(), "/api/usecases").await;
    assert_eq!(v["usecases"], json!(["Renamed Demo"]));

    std::fs::write(dir.path().join("broken.esd"), "usecase").unwrap();
    let (s, v) = get(state, "/api/usecases").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["files"][0]["file"], "broken.esd");
    assert_eq!(v["files"][0]["diagnostics"][0]["code"], "E_PARSE");
}

#[tokio::test]
async fn unknown_route_is_json_404() {
    let (s, v) = get(demo_state(), "/api/nothing").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["schema_version"], 1);
}
