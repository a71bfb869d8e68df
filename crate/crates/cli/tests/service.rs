use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use firmnet_cli::service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(cap: usize) -> Router {
    router(AppState::new(&ServiceConfig { workers: Some(2), result_cap: cap }).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, _, v) = call_raw(app, method, uri, body.map(|b| b.to_string())).await;
    (status, v)
}

async fn call_raw(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, axum::http::HeaderMap, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, headers, v)
}

async fn wait_done(app: &Router, id: &str) -> Value {
    for _ in 0..6000 {
        let (s, rec) = call(app, Method::GET, &format!("/api/v1/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        match rec["status"].as_str().unwrap() {
            "done" | "failed" => return rec,
            _ => tokio::time::sleep(Duration::from_millis(20)).await,
        }
    }
    panic!("job {id} did not finish");
}

fn query(cfg: &Value) -> String {
    form_urlencoded::byte_serialize(cfg.to_string().as_bytes()).collect()
}

fn small(steps: usize) -> Value {
    json!({"economy": {"n": 10, "d": 3}, "run": {"steps": steps}})
}

fn small_sweep(nx: usize, ny: usize, steps: usize) -> Value {
    let mut c = small(steps);
    c["sweep"] = json!({
        "x": {"param": "alpha", "lo": 0.2, "hi": 1.0, "n": nx},
        "y": {"param": "sigma", "lo": 0.0, "hi": 1.0, "n": ny}
    });
    c
}

#[tokio::test(flavor = "multi_thread")]
async fn default_simulation_completes_and_downsamples() {
    let app = app(4);
    let (s, rec) = call(&app, Method::POST, "/api/v1/simulate", Some(json!({}))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(rec["kind"], "simulate");
    let id = rec["id"].as_str().unwrap().to_string();
    let done = wait_done(&app, &id).await;
    assert_eq!(done["status"], "done", "{done}");
    assert_eq!(done["progress"], 1.0);
    assert_eq!(done["result_ref"], format!("/api/v1/jobs/{id}/result"));

    let (s, res) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/result?stride=50"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(res["label"].is_string());
    assert_eq!(res["fingerprint"], done["fingerprint"]);
    let tr = &res["trajectory"];
    assert_eq!(tr["length"], 5000);
    let points = tr["steps"].as_array().unwrap().len();
    assert!(points <= 101, "{points} points");
    assert_eq!(tr["prices"].as_array().unwrap().len(), points);
    assert_eq!(tr["prices"][0].as_array().unwrap().len(), 100);
}

#[tokio::test(flavor = "multi_thread")]
async fn schema_errors_are_400_with_field_path() {
    let app = app(4);
    let (s, _, e) = call_raw(&app, Method::POST, "/api/v1/simulate", Some("{\"run\": {\"steps\": \"many\"}}".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["path"], "run.steps");
    let (s, _, e) = call_raw(&app, Method::POST, "/api/v1/simulate", Some("{\"economy\": {".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"], "invalid_config");
    let (s, e) = call(&app, Method::POST, "/api/v1/simulate", Some(json!({"dynamics": {"alpha": -1.0}}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["path"], "dynamics.alpha");
    let (s, e) = call(&app, Method::POST, "/api/v1/sweep", Some(small(100))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["path"], "sweep");
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_jobs_are_404() {
    let app = app(4);
    for (m, uri) in [(Method::GET, "/api/v1/jobs/nope"), (Method::GET, "/api/v1/jobs/nope/result"), (Method::DELETE, "/api/v1/jobs/nope")] {
        let (s, e) = call(&app, m, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND);
        assert_eq!(e["error"], "unknown_job");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn evicted_results_are_410_and_resubmission_recomputes() {
    let app = app(1);
    let (_, a) = call(&app, Method::POST, "/api/v1/simulate", Some(small(200))).await;
    let a_id = a["id"].as_str().unwrap().to_string();
    wait_done(&app, &a_id).await;
    let mut other = small(200);
    other["run"]["seeds"] = json!([2]);
    let (_, b) = call(&app, Method::POST, "/api/v1/simulate", Some(other)).await;
    let b_id = b["id"].as_str().unwrap().to_string();
    wait_done(&app, &b_id).await;

    let (s, e) = call(&app, Method::GET, &format!("/api/v1/jobs/{a_id}/result"), None).await;
    assert_eq!(s, StatusCode::GONE);
    assert_eq!(e["error"], "result_evicted");
    let (s, _) = call(&app, Method::GET, &format!("/api/v1/jobs/{b_id}/result"), None).await;
    assert_eq!(s, StatusCode::OK);

    let (_, again) = call(&app, Method::POST, "/api/v1/simulate", Some(small(200))).await;
    assert_ne!(again["id"], a["id"]);
    assert_eq!(again["fingerprint"], a["fingerprint"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_requests_share_a_job() {
    let app = app(4);
    let (_, a) = call(&app, Method::POST, "/api/v1/simulate", Some(small(200))).await;
    let (_, b) = call(&app, Method::POST, "/api/v1/simulate", Some(small(200))).await;
    assert_eq!(a["id"], b["id"]);
    let mut other = small(200);
    other["dynamics"] = json!({"omega": 0.05});
    let (_, c) = call(&app, Method::POST, "/api/v1/simulate", Some(other)).await;
    assert_ne!(a["id"], c["id"]);
    assert_ne!(a["fingerprint"], c["fingerprint"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn sweep_returns_every_cell_with_progress() {
    let app = app(4);
    let (s, rec) = call(&app, Method::POST, "/api/v1/sweep", Some(small_sweep(10, 10, 200))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(rec["kind"], "sweep");
    let id = rec["id"].as_str().unwrap().to_string();
    let done = wait_done(&app, &id).await;
    assert_eq!(done["status"], "done", "{done}");
    let (s, d) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/result"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["cells"].as_array().unwrap().len(), 100);
    assert_eq!(d["x"]["param"], "alpha");
    assert_eq!(d["y"]["values"].as_array().unwrap().len(), 10);
    assert_eq!(d["meta"]["fingerprint"], done["fingerprint"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn cancelled_sweep_is_failed() {
    let app = app(4);
    let (_, rec) = call(&app, Method::POST, "/api/v1/sweep", Some(small_sweep(20, 20, 4000))).await;
    let id = rec["id"].as_str().unwrap().to_string();
    let (s, r) = call(&app, Method::DELETE, &format!("/api/v1/jobs/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["status"], "failed");
    assert_eq!(r["error"], "cancelled");
    tokio::time::sleep(Duration::from_millis(200)).await;
    let (_, r) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}"), None).await;
    assert_eq!(r["status"], "failed");
    assert_eq!(r["error"], "cancelled");
    let (s, _) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/result"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn result_before_completion_is_409() {
    let app = app(4);
    let (_, rec) = call(&app, Method::POST, "/api/v1/sweep", Some(small_sweep(20, 20, 4000))).await;
    let id = rec["id"].as_str().unwrap().to_string();
    let (s, e) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/result"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(e["error"], "not_ready");
    call(&app, Method::DELETE, &format!("/api/v1/jobs/{id}"), None).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sweeps_are_isolated() {
    let app = app(4);
    let a_cfg = small_sweep(3, 2, 200);
    let mut b_cfg = small_sweep(2, 3, 200);
    b_cfg["sweep"]["x"] = json!({"param": "omega", "values": [0.0, 0.2]});
    let (_, a) = call(&app, Method::POST, "/api/v1/sweep", Some(a_cfg)).await;
    let (_, b) = call(&app, Method::POST, "/api/v1/sweep", Some(b_cfg)).await;
    let (a_id, b_id) = (a["id"].as_str().unwrap().to_string(), b["id"].as_str().unwrap().to_string());
    assert_ne!(a_id, b_id);
    wait_done(&app, &a_id).await;
    wait_done(&app, &b_id).await;
    let (_, da) = call(&app, Method::GET, &format!("/api/v1/jobs/{a_id}/result"), None).await;
    let (_, db) = call(&app, Method::GET, &format!("/api/v1/jobs/{b_id}/result"), None).await;
    assert_eq!(da["cells"].as_array().unwrap().len(), 6);
    assert_eq!(db["cells"].as_array().unwrap().len(), 6);
    assert_eq!(da["x"]["param"], "alpha");
    assert_eq!(db["x"]["param"], "omega");
    assert_eq!(db["x"]["values"], json!([0.0, 0.2]));
    assert_eq!(da["meta"]["fingerprint"], a["fingerprint"]);
    assert_eq!(db["meta"]["fingerprint"], b["fingerprint"]);
}

#[tokio::test(flavor = "multi_thread")]
async fn equilibrium_endpoint_and_not_realisable() {
    let app = app(4);
    let (s, r) = call(&app, Method::GET, "/api/v1/equilibrium", None).await;
    assert_eq!(s, StatusCode::OK);
    let eq = &r["equilibrium"];
    assert_eq!(eq["realisable"], true);
    assert_eq!(eq["prices"].as_array().unwrap().len(), 100);
    assert!(eq["residuals"]["profit"].as_f64().unwrap() < 1e-10);
    assert!(eq["residuals"]["clearing"].as_f64().unwrap() < 1e-10);

    let uri = format!("/api/v1/equilibrium?config={}", query(&json!({"eps": -5.0})));
    let (s, e) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["error"], "not_realisable");
    assert!((e["eps"].as_f64().unwrap() + 5.0).abs() < 1e-9, "{e}");

    let uri = format!("/api/v1/equilibrium?config={}", query(&json!({"economy": {"n": 5, "d": 5}})));
    let (s, e) = call(&app, Method::GET, &uri, None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(e["path"], "economy.d");
}

#[tokio::test(flavor = "multi_thread")]
async fn spectrum_has_two_n_values() {
    let app = app(4);
    let (s, r) = call(&app, Method::GET, "/api/v1/spectrum?seed=3", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["seed"], 3);
    let eigs = r["eigenvalues"].as_array().unwrap();
    assert_eq!(eigs.len(), 200);
    assert!(eigs.iter().all(|z| z["re"].as_f64().unwrap() < 0.0));
}

#[tokio::test(flavor = "multi_thread")]
async fn naive_job_runs() {
    let app = app(4);
    let (s, rec) = call(&app, Method::POST, "/api/v1/naive", Some(small(100))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(rec["kind"], "naive");
    let id = rec["id"].as_str().unwrap().to_string();
    assert_eq!(wait_done(&app, &id).await["status"], "done");
    let (_, full) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/result"), None).await;
    let (_, thin) = call(&app, Method::GET, &format!("/api/v1/jobs/{id}/result?stride=7"), None).await;
    let n_full = full["times"].as_array().unwrap().len();
    let n_thin = thin["times"].as_array().unwrap().len();
    assert!(n_thin < n_full && n_thin >= n_full / 7);
    assert_eq!(thin["times"].as_array().unwrap().last(), full["times"].as_array().unwrap().last());
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_allows_browser_origins() {
    let app = app(4);
    let (_, headers, _) = call_raw(&app, Method::GET, "/api/v1/jobs/x", None).await;
    assert!(headers.contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}
