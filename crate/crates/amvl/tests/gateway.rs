use std::sync::Arc;

use amvl::config::AppConfig;
use amvl::engine::{Engine, EngineOptions, WallClock};
use amvl::gateway::router;
use amvl_core::PolicyKind;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (Router, Arc<Engine>) {
    let mut opts = EngineOptions::new(PolicyKind::Amvl, Arc::new(WallClock::new()));
    opts.namespaces = Some(vec!["default".into(), "other".into()]);
    let engine = Arc::new(Engine::new(&AppConfig::default(), opts).unwrap());
    (router(engine.clone(), 4), engine)
}

async fn call(app: &Router, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(path).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn write(app: &Router, ns: &str, content: &str) -> (StatusCode, Value) {
    call(app, "POST", "/v1/write", Some(json!({"namespace": ns, "content": content, "label_value": 0.9}))).await
}

#[tokio::test]
async fn writes_get_increasing_ids_and_stats_count_them() {
    let (app, _) = app();
    let mut last = 0;
    for i in 0..100 {
        let (status, body) = write(&app, "default", &format!("topic:{} note {i}", i % 7)).await;
        assert_eq!(status, StatusCode::OK);
        let id = body["id"].as_u64().unwrap();
        assert!(id > last);
        last = id;
    }
    let (status, stats) = call(&app, "GET", "/v1/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["stored"], 100);
    let tiers = &stats["tiers"];
    let sum = tiers["hot"].as_u64().unwrap() + tiers["warm"].as_u64().unwrap() + tiers["cold"].as_u64().unwrap();
    assert_eq!(sum, 100);
}

#[tokio::test]
async fn input_errors_map_to_status_codes() {
    let (app, _) = app();
    let (status, body) = write(&app, "default", "").await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("EmptyContent")));
    let (status, body) = write(&app, "elsewhere", "hello").await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::FORBIDDEN, Some("UnknownNamespace")));
    let q = json!({"namespace": "default", "query": "anything", "n": 49});
    let (status, body) = call(&app, "POST", "/v1/recall", Some(q)).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("CapExceeded")));
}

#[tokio::test]
async fn recall_on_empty_namespace_is_empty() {
    let (app, _) = app();
    write(&app, "other", "topic:1 something").await;
    let (status, body) = call(&app, "POST", "/v1/recall", Some(json!({"namespace": "default", "query": "topic:1 x"}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["hits"], json!([]));
}

#[tokio::test]
async fn single_matching_item_is_the_first_hit() {
    let (app, _) = app();
    for i in 0..20 {
        write(&app, "default", &format!("topic:{} filler {i}", 10 + i % 30)).await;
    }
    let (_, w) = write(&app, "default", "topic:3 the wifi password is swordfish").await;
    let id = w["id"].as_u64().unwrap();
    let q = json!({"namespace": "default", "query": "topic:3 what is the wifi password"});
    let (status, body) = call(&app, "POST", "/v1/recall", Some(q)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["hits"][0]["id"].as_u64(), Some(id));
}

#[tokio::test]
async fn ask_cites_nothing_on_empty_store_and_is_deterministic() {
    let (app, _) = app();
    let q = json!({"namespace": "default", "query": "topic:2 anything"});
    let (status, body) = call(&app, "POST", "/v1/ask", Some(q.clone())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["citations"], json!([]));

    let (a, _) = self::app();
    let (b, _) = self::app();
    for app in [&a, &b] {
        write(app, "default", "topic:2 first").await;
        write(app, "default", "topic:2 second").await;
    }
    let (_, x) = call(&a, "POST", "/v1/ask", Some(q.clone())).await;
    let (_, y) = call(&b, "POST", "/v1/ask", Some(q)).await;
    assert_eq!(x, y);
    assert_eq!(x["citations"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn requests_never_run_maintenance() {
    let (app, engine) = app();
    for i in 0..50 {
        write(&app, "default", &format!("topic:{} n {i}", i % 5)).await;
        call(&app, "POST", "/v1/ask", Some(json!({"namespace": "default", "query": format!("topic:{} q", i % 5)}))).await;
    }
    let s = engine.summary();
    assert_eq!((s.sweeps, s.request_path_sweeps, s.request_path_tier_changes, s.request_path_evictions), (0, 0, 0, 0));
}
