use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use lmte_core::explain::SessionConfig;
use lmte_core::tabular::Schema;
use lmte_service::{router, serve_on, AppState, ServiceConfig, SessionSpec, TreeView};
use serde_json::{json, Value};
use tower::ServiceExt;

fn spec(dir: &Path, point: Option<Value>) -> SessionSpec {
    lmte_eval::datasets::write_bundled(dir).unwrap();
    let mut config = SessionConfig::default();
    config.gan.epochs = 60;
    config.seed = 3;
    SessionSpec {
        train_csv_path: dir.join("two_moons.csv"),
        schema_path: None,
        drop_columns: vec!["target".into()],
        oracle_spec: json!({
            "kind": "in-process",
            "name": "reference-forest",
            "task": "classification",
            "params": { "dataset": "two_moons", "forest": { "n_trees": 20 } }
        }),
        config,
        point,
    }
}

/// A point between the two moons, where the target's label changes.
fn boundary_point() -> Value {
    json!({ "x1": 0.5, "x2": 0.25 })
}

fn state() -> Arc<AppState> {
    Arc::new(AppState::new(lmte_eval::registry(), None))
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn create(state: &Arc<AppState>, spec: &SessionSpec) -> String {
    let (status, body) = call(state, "POST", "/sessions", Some(serde_json::to_value(spec).unwrap())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

fn assert_error(status: StatusCode, body: &Value, expected: StatusCode, code: &str) {
    assert_eq!(status, expected, "{body}");
    assert_eq!(body["error"]["code"], code, "{body}");
    assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
}

#[tokio::test]
async fn health_and_unknown_routes() {
    let s = state();
    assert_eq!(call(&s, "GET", "/health", None).await, (StatusCode::OK, json!({ "status": "ok" })));
    let (status, body) = call(&s, "GET", "/nope", None).await;
    assert_error(status, &body, StatusCode::NOT_FOUND, "not_found");
    let (status, body) = call(&s, "GET", "/sessions/s9/schema", None).await;
    assert_error(status, &body, StatusCode::NOT_FOUND, "session_not_found");
}

#[tokio::test]
async fn bad_requests_are_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let s = state();
    let (status, body) = call(&s, "POST", "/sessions", Some(json!({ "oracle_spec": {} }))).await;
    assert_error(status, &body, StatusCode::BAD_REQUEST, "bad_request");

    let mut missing = spec(dir.path(), None);
    missing.train_csv_path = dir.path().join("absent.csv");
    let (status, body) = call(&s, "POST", "/sessions", Some(serde_json::to_value(&missing).unwrap())).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY, "missing_file");

    let mut bad_oracle = spec(dir.path(), None);
    bad_oracle.oracle_spec = json!({ "kind": "in-process", "name": "svm", "task": "classification" });
    let (status, body) = call(&s, "POST", "/sessions", Some(serde_json::to_value(&bad_oracle).unwrap())).await;
    assert_error(status, &body, StatusCode::BAD_GATEWAY, "oracle_error");

    // Without a creation point, explanation needs a point in the request.
    let id = create(&s, &spec(dir.path(), None)).await;
    let (status, body) = call(&s, "GET", &format!("/sessions/{id}/tree"), None).await;
    assert_error(status, &body, StatusCode::CONFLICT, "no_point");
    let (status, body) = call(&s, "POST", &format!("/sessions/{id}/explain"), Some(json!({ "point": [1.0] }))).await;
    assert_error(status, &body, StatusCode::UNPROCESSABLE_ENTITY, "invalid_input");
    let (status, body) = call(&s, "POST", &format!("/sessions/{id}/explain?fresh=maybe"), None).await;
    assert_error(status, &body, StatusCode::BAD_REQUEST, "bad_request");
    let (status, body) = call(&s, "POST", &format!("/sessions/{id}/whatif"), Some(json!({ "ovrerides": {} }))).await;
    assert_error(status, &body, StatusCode::BAD_REQUEST, "bad_request");
}

#[tokio::test]
async fn schema_echoes_the_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let s = state();
    let id = create(&s, &spec(dir.path(), None)).await;
    let (status, body) = call(&s, "GET", &format!("/sessions/{id}/schema"), None).await;
    assert_eq!(status, StatusCode::OK);
    let sidecar = Schema::load(&dir.path().join("two_moons.schema.json")).unwrap();
    let expected: Vec<_> = sidecar.columns.into_iter().filter(|c| c.name != "target").collect();
    assert_eq!(serde_json::from_value::<Schema>(body).unwrap().columns, expected);
    let (_, list) = call(&s, "GET", "/sessions", None).await;
    assert_eq!(list, json!({ "sessions": [id] }));
    assert_eq!(call(&s, "DELETE", &format!("/sessions/{id}"), None).await.0, StatusCode::NO_CONTENT);
    assert_eq!(call(&s, "DELETE", &format!("/sessions/{id}"), None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn whatif_across_a_serialized_threshold_changes_leaf() {
    let dir = tempfile::tempdir().unwrap();
    let s = state();
    let id = create(&s, &spec(dir.path(), Some(boundary_point()))).await;

    let (status, tree) = call(&s, "GET", &format!("/sessions/{id}/tree"), None).await;
    assert_eq!(status, StatusCode::OK);
    let view: TreeView = serde_json::from_value(tree).unwrap();
    let root = view.splits.iter().find(|sp| sp.node == 0).expect("the surrogate should split at the root");
    let t = root.threshold.expect("numeric split");
    let x = boundary_point()[&root.feature].as_f64().unwrap();
    let crossed = if x <= t { t + 0.5 } else { t - 0.5 };

    let (status, original) = call(&s, "POST", &format!("/sessions/{id}/explain"), None).await;
    assert_eq!(status, StatusCode::OK);
    let body = json!({ "overrides": { root.feature.clone(): crossed } });
    let (status, e) = call(&s, "POST", &format!("/sessions/{id}/whatif"), Some(body.clone())).await;
    assert_eq!(status, StatusCode::OK, "{e}");
    assert_eq!(e["leaf_changed"], true);
    assert_ne!(e["context"], original["context"]);
    let (_, same) = call(&s, "POST", &format!("/sessions/{id}/whatif"), Some(json!({ "overrides": {} }))).await;
    assert_eq!(same["leaf_changed"], false);
    assert_eq!(same["context"], original["context"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn identical_requests_give_identical_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let s = state();
    let id = create(&s, &spec(dir.path(), Some(boundary_point()))).await;
    let body = json!({ "overrides": { "x1": 0.9 } });
    let uri = format!("/sessions/{id}/whatif");
    let handles: Vec<_> = (0..8)
        .map(|_| {
            let (s, uri, body) = (s.clone(), uri.clone(), body.clone());
            tokio::spawn(async move { call(&s, "POST", &uri, Some(body)).await })
        })
        .collect();
    let mut results = Vec::new();
    for h in handles {
        results.push(h.await.unwrap());
    }
    assert!(results.iter().all(|r| r == &results[0] && r.0 == StatusCode::OK));

    let cached = call(&s, "POST", &format!("/sessions/{id}/explain"), None).await;
    let fresh = call(&s, "POST", &format!("/sessions/{id}/explain?fresh=true"), None).await;
    assert_eq!(cached, fresh);
}

#[tokio::test]
async fn snapshots_restore_without_refitting() {
    let dir = tempfile::tempdir().unwrap();
    let snaps = dir.path().join("snapshots");
    let config = ServiceConfig { snapshot_dir: Some(snaps.clone()), ..ServiceConfig::default() };
    let s = Arc::new(AppState::from_config(&config, lmte_eval::registry()).unwrap());
    let id = create(&s, &spec(dir.path(), Some(boundary_point()))).await;
    let (_, tree) = call(&s, "GET", &format!("/sessions/{id}/tree"), None).await;
    assert!(snaps.join(format!("{id}.json")).exists());

    let restored = Arc::new(AppState::from_config(&config, lmte_eval::registry()).unwrap());
    assert_eq!(restored.ids(), vec![id.clone()]);
    assert_eq!(call(&restored, "GET", &format!("/sessions/{id}/tree"), None).await.1, tree);
    let next = create(&restored, &spec(dir.path(), None)).await;
    assert_ne!(next, id);
}

#[tokio::test]
async fn serves_over_tcp_until_shutdown() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(serve_on(listener, state(), async {
        let _ = rx.await;
    }));
    let body = tokio::task::spawn_blocking(move || {
        ureq::get(&format!("http://{addr}/health")).call().unwrap().body_mut().read_to_string().unwrap()
    })
    .await
    .unwrap();
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap(), json!({ "status": "ok" }));
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
