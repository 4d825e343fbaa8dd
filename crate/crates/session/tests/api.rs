use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use iga::iga::{run_path, IgaConfig, SelectionPolicy};
use iga::simgen::{gen_case1, gen_heuristic, Case, SimInstance, SimSpec};
use iga::{Family, Objective};
use iga_session::{router, CreateRequest, Phase, Session, SessionError, SessionStore};

fn inline_body(inst: &SimInstance, config: Value) -> Value {
    let x = inst.dataset.x();
    let rows: Vec<Vec<f64>> = x.row_iter().map(|r| r.iter().copied().collect()).collect();
    json!({
        "x": rows,
        "y": inst.dataset.y().iter().copied().collect::<Vec<_>>(),
        "groups": inst.partition.to_file(),
        "family": "gaussian",
        "config": config,
    })
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(b) => Body::from(b.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn create(app: &Router, body: Value) -> Value {
    let (status, state) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{state}");
    state
}

fn app() -> Router {
    router(Arc::new(SessionStore::new()))
}

fn standardized_objective(inst: &SimInstance) -> Objective {
    Objective::new(Family::Gaussian, inst.dataset.standardize().unwrap()).unwrap()
}

#[tokio::test]
async fn heuristic_session_starts_with_five_candidates() {
    let app = app();
    let state = create(&app, inline_body(&gen_heuristic(400, 1).unwrap(), json!({}))).await;
    assert_eq!(state["phase"], "awaiting_pick");
    assert_eq!(state["iteration"], 0);
    let cands = state["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 5);
    // lambda = 1: only the top row is pickable
    assert_eq!(cands.iter().filter(|c| c["in_A_lambda"] == true).count(), 1);
    assert_eq!(cands[0]["in_A_lambda"], true);
    let scores: Vec<f64> = cands.iter().map(|c| c["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[tokio::test]
async fn discounted_lambda_flags_top_candidate() {
    let app = app();
    let state = create(&app, inline_body(&gen_heuristic(400, 1).unwrap(), json!({"lambda": 0.4}))).await;
    let cands = state["candidates"].as_array().unwrap();
    assert!(cands.iter().any(|c| c["in_A_lambda"] == true));
    assert_eq!(cands[0]["in_A_lambda"], true);
}

#[tokio::test]
async fn picking_the_top_candidate_reproduces_the_greedy_path() {
    let inst = gen_heuristic(400, 3).unwrap();
    let expected = run_path(
        &standardized_objective(&inst),
        &inst.partition,
        &IgaConfig::default(),
        &mut SelectionPolicy::Greedy,
    )
    .unwrap()
    .to_json();

    let app = app();
    let mut state = create(&app, inline_body(&inst, json!({}))).await;
    let id = state["id"].as_str().unwrap().to_string();
    while state["phase"] == "awaiting_pick" {
        let top = state["candidates"][0]["group"].clone();
        let (status, next) = call(&app, "POST", &format!("/sessions/{id}/pick"), Some(json!({"group": top}))).await;
        assert_eq!(status, StatusCode::OK, "{next}");
        state = next;
    }
    assert_eq!(state["phase"], "finished");
    // bit-identical: compare through the same serializer
    assert_eq!(state["events"], serde_json::to_value(&expected.events).unwrap());
    let (_, report) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(report["path"], serde_json::to_value(&expected).unwrap());
}

#[tokio::test]
async fn pick_outside_a_lambda_is_rejected_without_change() {
    let app = app();
    let state = create(&app, inline_body(&gen_heuristic(400, 2).unwrap(), json!({}))).await;
    let id = state["id"].as_str().unwrap();
    let outside = state["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["in_A_lambda"] == false)
        .unwrap()["group"]
        .clone();
    let (status, err) = call(&app, "POST", &format!("/sessions/{id}/pick"), Some(json!({"group": outside}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "pick_outside_candidate_set");
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(after, state);

    // group ids past m are outside too
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/pick"), Some(json!({"group": 99}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/pick"), Some(json!({"group": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn auto_steps_and_finish() {
    let app = app();
    let state = create(&app, inline_body(&gen_heuristic(400, 4).unwrap(), json!({}))).await;
    let id = state["id"].as_str().unwrap();
    let (status, same) = call(&app, "POST", &format!("/sessions/{id}/auto"), Some(json!({"steps": 0}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(same["events"], state["events"]);

    let (_, one) = call(&app, "POST", &format!("/sessions/{id}/auto"), Some(json!({"steps": 1}))).await;
    assert!(!one["events"].as_array().unwrap().is_empty());
    let (_, two) = call(&app, "POST", &format!("/sessions/{id}/auto"), Some(json!({"steps": 1}))).await;
    assert!(two["events"].as_array().unwrap().len() >= 2);

    let (_, done) = call(&app, "POST", &format!("/sessions/{id}/auto"), Some(json!({"steps": 1000}))).await;
    assert_eq!(done["phase"], "finished");
    assert!(done["candidates"].as_array().unwrap().is_empty());

    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/pick"), Some(json!({"group": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (s1, first) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    let (s2, second) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(first, second);
    assert_eq!(first["model"]["coefficients"].as_array().unwrap().len(), 10);
}

#[tokio::test]
async fn finish_freezes_an_open_session() {
    let app = app();
    let state = create(&app, inline_body(&gen_heuristic(100, 5).unwrap(), json!({}))).await;
    let id = state["id"].as_str().unwrap();
    let (_, report) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(report["state"]["phase"], "finished");
    assert_eq!(report["model"]["active_groups"], json!([]));
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/auto"), Some(json!({"steps": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let app = app();
    let (status, _) = call(&app, "GET", "/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sessions/nope/pick", Some(json!({"group": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"x": [[1.0]]}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/sessions", Some(json!({"bogus": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let bad_groups = json!({"x": [[1.0, 2.0], [3.0, 4.0]], "y": [1.0, 2.0], "groups": {"p": 2, "groups": [[0]]}});
    let (status, _) = call(&app, "POST", "/sessions", Some(bad_groups)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let state = create(&app, inline_body(&gen_heuristic(50, 1).unwrap(), json!({}))).await;
    let id = state["id"].as_str().unwrap();
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/pick"), Some(json!({"grp": 1}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn zero_design_finishes_immediately() {
    let app = app();
    let body = json!({
        "x": vec![vec![0.0; 4]; 6],
        "y": [1.0, -1.0, 2.0, 0.5, 0.0, 1.0],
        "groups": {"p": 4, "groups": [[0, 1], [2, 3]]},
        "standardize": false,
    });
    let state = create(&app, body).await;
    assert_eq!(state["phase"], "finished");
    assert_eq!(state["candidates"], json!([]));
}

#[tokio::test]
async fn bundle_directory_and_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen_heuristic(60, 2).unwrap();
    inst.dataset.write_csv(dir.path().join("X.csv"), dir.path().join("y.csv")).unwrap();
    std::fs::write(
        dir.path().join("groups.json"),
        serde_json::to_string(&inst.partition.to_file()).unwrap(),
    )
    .unwrap();
    let out = dir.path().join("snapshots");
    let app = router(Arc::new(SessionStore::with_persistence(&out)));
    let state = create(&app, json!({"bundle": dir.path()})).await;
    let id = state["id"].as_str().unwrap();
    let (_, report) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(out.join(format!("{id}.json"))).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn interleaved_history_replays_bit_identically() {
    let inst = gen_heuristic(400, 6).unwrap();
    let cfg = IgaConfig::with_lambda(0.6);
    let obj = standardized_objective(&inst);
    let mut s = Session::new("a".into(), obj.clone(), inst.partition.clone(), &cfg).unwrap();
    s.auto(1).unwrap();
    // pick the lowest-scoring member of A_lambda
    let view = s.view();
    let last = view.candidates.iter().rfind(|c| c.in_a_lambda).unwrap().group;
    s.pick(last - 1).unwrap();
    s.auto(2).unwrap();
    let replayed = Session::replay("b".into(), obj, inst.partition.clone(), &cfg, &s.picks()).unwrap();
    assert_eq!(replayed.engine().path(), s.engine().path());
    let (a, b) = (s.engine().coefficients(), replayed.engine().coefficients());
    assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn concurrent_mutation_is_busy() {
    let inst = gen_case1(&SimSpec::new(Case::Case1, 400, 5, 1.0, 1)).unwrap();
    let store = Arc::new(SessionStore::new());
    let rows: Vec<Vec<f64>> = inst.dataset.x().row_iter().map(|r| r.iter().copied().collect()).collect();
    let req: CreateRequest = serde_json::from_value(json!({
        "x": rows,
        "y": inst.dataset.y().iter().copied().collect::<Vec<_>>(),
        "groups": inst.partition.to_file(),
    }))
    .unwrap();
    let id = store.create(&req).unwrap().id;
    let worker = {
        let (store, id) = (store.clone(), id.clone());
        std::thread::spawn(move || store.auto(&id, 1000))
    };
    let mut saw_busy = false;
    while !worker.is_finished() {
        if store.get(&id).unwrap().phase == Phase::Running {
            saw_busy = matches!(store.pick(&id, 0), Err(SessionError::Busy));
            break;
        }
        std::thread::sleep(Duration::from_micros(200));
    }
    assert!(worker.join().unwrap().is_ok());
    assert!(saw_busy, "mutation finished before a concurrent request could be made");
    assert_eq!(store.get(&id).unwrap().phase, Phase::Finished);
}
