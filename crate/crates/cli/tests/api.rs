use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::{to_bytes, Body};
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use mof_forge::service::{Service, ServiceConfig};
use mof_forge_cli::api::router;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> (Router, Arc<Service>) {
    let svc = Service::open(ServiceConfig::new(&mof_forge::fixtures_root(), dir)).unwrap();
    (router(svc.clone()), svc)
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn wait_awaiting(app: &Router, run_id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let (s, v) = call(app, Method::GET, &format!("/runs/{run_id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        if !v["snapshot"]["awaiting"].as_array().unwrap().is_empty() {
            return v;
        }
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

const MD: &str = "Calculate the diffusion coefficient of CO2 in UiO-66 using these settings";

fn md_body() -> Value {
    json!({ "text": MD, "attachments": [{ "name": "reference", "text": "pair_style lj/cut 12.0" }] })
}

#[tokio::test(flavor = "multi_thread")]
async fn clarification_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let (s, v) = call(&app, Method::POST, "/queries", Some(json!({ "text": "What is the surface area of a MOF?" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["version"], 1);
    assert_eq!(v["kind"], "clarification");
    let sid = v["session_id"].as_str().unwrap().to_string();

    let (s, v) = call(&app, Method::POST, &format!("/sessions/{sid}/clarify"), Some(json!({ "text": "UiO-66" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["kind"], "report");
    let narrative = v["report"]["narrative"].as_str().unwrap();
    assert!(narrative.contains("1946.02 m²/g"));
    assert!(narrative.contains("the default 1.2 Å was used"));

    let (s, v) = call(&app, Method::POST, &format!("/sessions/{sid}/clarify"), Some(json!({ "text": "UiO-66" }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["code"], "no_pending_clarification");
    assert_eq!(v["version"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn confirmation_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let (s, v) = call(&app, Method::POST, "/queries", Some(md_body())).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["kind"], "run_started");
    let run = v["run_id"].as_str().unwrap().to_string();
    let view = wait_awaiting(&app, &run).await;
    assert_eq!(view["snapshot"]["awaiting"][0]["correction"]["rule_id"], "md-coulomb");

    let uri = format!("/runs/{run}/confirmations");
    let (s, v) = call(&app, Method::POST, &uri, Some(json!({ "rule_ids": ["nope"], "accept": true }))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::CONFLICT, Some("not_awaiting")));
    let (s, _) = call(&app, Method::POST, &uri, Some(json!({ "rule_ids": [], "accept": true }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, Method::POST, &uri, Some(json!({ "rule_ids": ["md-coulomb"], "accept": true }))).await;
    assert_eq!(s, StatusCode::OK);

    let deadline = Instant::now() + Duration::from_secs(10);
    let view = loop {
        let (_, v) = call(&app, Method::GET, &format!("/runs/{run}"), None).await;
        if v["finished"] == true {
            break v;
        }
        assert!(Instant::now() < deadline);
        tokio::time::sleep(Duration::from_millis(5)).await;
    };
    assert_eq!(view["report"]["corrections"][0]["rule_id"], "md-coulomb");
    assert_eq!(view["report"]["corrections"][0]["confirmed"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn events_resume_for_two_consumers() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let (_, v) = call(&app, Method::POST, "/queries", Some(md_body())).await;
    let run = v["run_id"].as_str().unwrap().to_string();
    wait_awaiting(&app, &run).await;

    // consumer A reads now; consumer B starts later from A's cursor
    let (_, a1) = call(&app, Method::GET, &format!("/runs/{run}/events"), None).await;
    let cursor = a1["next"].as_u64().unwrap();
    call(&app, Method::POST, &format!("/runs/{run}/confirmations"), Some(json!({ "rule_ids": ["md-coulomb"], "accept": true })))
        .await;
    let mut b = a1["events"].as_array().unwrap().clone();
    let mut after = cursor;
    loop {
        let (s, page) = call(&app, Method::GET, &format!("/runs/{run}/events?after={after}&wait_ms=200"), None).await;
        assert_eq!(s, StatusCode::OK);
        b.extend(page["events"].as_array().unwrap().iter().cloned());
        after = page["next"].as_u64().unwrap();
        if page["finished"] == true && page["events"].as_array().unwrap().is_empty() {
            break;
        }
    }
    let (_, all) = call(&app, Method::GET, &format!("/runs/{run}/events"), None).await;
    assert_eq!(&b, all["events"].as_array().unwrap());
    let seqs: Vec<u64> = b.iter().map(|e| e["seq"].as_u64().unwrap()).collect();
    assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
}

#[tokio::test(flavor = "multi_thread")]
async fn funnel_and_unknown_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let (app, _) = app(tmp.path());
    let (s, v) = call(&app, Method::GET, "/screenings/coremof-2024-fsr/funnel", None).await;
    assert_eq!(s, StatusCode::OK);
    let counts: Vec<u64> = v["stages"].as_array().unwrap().iter().map(|s| s["output_count"].as_u64().unwrap()).collect();
    assert_eq!(v["stages"][0]["input_count"], 3786);
    assert_eq!(counts, [3776, 3771, 1878, 1000]);
    assert_eq!(v["shortlist"].as_array().unwrap().len(), 1000);

    let (s, v) = call(&app, Method::GET, "/screenings/missing/funnel", None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_screening")));
    let (s, _) = call(&app, Method::GET, "/runs/run-999999", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, Method::GET, "/runs/run-999999/events?after=3", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = call(&app, Method::POST, "/queries", Some(json!({ "text": "  " }))).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::BAD_REQUEST, Some("empty_query")));
    let (s, _) = call(&app, Method::POST, "/queries", Some(json!({ "nottext": 1 }))).await;
    assert!(s.is_client_error());
}
