mod common;

use std::sync::Arc;

use anonymise_core::export::{parse_eaf, parse_via, ANONYMISE_TIER};
use anonymise_review::http::router;
use anonymise_review::project::{sha256_hex, TrackData};
use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::*;

struct Reply {
    status: StatusCode,
    content_type: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let content_type = res
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

fn app(f: &Fixture) -> Router {
    let service = anonymise_review::ReviewService::new(f.service.root()).unwrap();
    router(Arc::new(service))
}

fn create_body(f: &Fixture, id: &str) -> Value {
    serde_json::to_value(request(&f.paths, id)).unwrap()
}

fn assert_error(reply: &Reply, status: StatusCode, code: &str) {
    assert_eq!(reply.status, status, "{}", String::from_utf8_lossy(&reply.body));
    let v = reply.json();
    assert_eq!(v["error"], code);
    assert!(v["detail"].as_str().is_some_and(|d| !d.is_empty()));
    assert_eq!(v.as_object().unwrap().len(), 2);
}

#[tokio::test]
async fn errors_have_a_uniform_shape() {
    let f = fixture();
    let app = app(&f);
    assert_error(&call(&app, "GET", "/projects/missing", None).await, StatusCode::NOT_FOUND, "not_found");
    assert_error(&call(&app, "GET", "/nowhere", None).await, StatusCode::NOT_FOUND, "not_found");
    assert_error(
        &call(&app, "POST", "/projects", Some(json!({"frames_dir": 3}))).await,
        StatusCode::BAD_REQUEST,
        "invalid",
    );

    let mut body = create_body(&f, "p");
    body["detections"] = json!(f.paths.root.join("absent.jsonl"));
    assert_error(&call(&app, "POST", "/projects", Some(body)).await, StatusCode::BAD_REQUEST, "input_missing");

    assert_eq!(call(&app, "POST", "/projects", Some(create_body(&f, "p"))).await.status, StatusCode::CREATED);
    assert_error(
        &call(&app, "POST", "/projects", Some(create_body(&f, "p"))).await,
        StatusCode::CONFLICT,
        "exists",
    );
    assert_error(
        &call(&app, "GET", "/projects/p/tracklets", None).await,
        StatusCode::CONFLICT,
        "conflict",
    );
    assert_error(
        &call(&app, "GET", "/projects/p/frames/abc/thumb", None).await,
        StatusCode::BAD_REQUEST,
        "invalid",
    );
    assert_error(
        &call(&app, "GET", "/projects/p/export/csv", None).await,
        StatusCode::NOT_FOUND,
        "not_found",
    );
}

#[tokio::test]
async fn review_over_http() {
    let f = fixture();
    let app = app(&f);

    let created = call(&app, "POST", "/projects", Some(create_body(&f, "p"))).await;
    assert_eq!(created.status, StatusCode::CREATED);
    assert_eq!(created.json()["state"], "draft");
    let listed = call(&app, "GET", "/projects", None).await.json();
    assert_eq!(listed.as_array().unwrap().len(), 1);

    let tracked = call(&app, "POST", "/projects/p/track", None).await.json();
    assert_eq!(tracked["tracklets"], 4);

    let tracklets = call(&app, "GET", "/projects/p/tracklets", None).await.json();
    let tracklets = tracklets.as_array().unwrap();
    assert_eq!(tracklets.len(), 4);
    let scene0 = call(&app, "GET", "/projects/p/tracklets?scene=0", None).await.json();
    assert!(scene0.as_array().unwrap().iter().all(|t| t["scene_id"] == 0));

    let labels = labels(&f.paths);
    let tracks: TrackData =
        serde_json::from_slice(&read(&f.service.project_dir("p").join("tracks.json"))).unwrap();
    let is_target = |id: &str| tracks.find(id).unwrap().detection_ids().all(|d| labels[d]);
    let reference = tracklets
        .iter()
        .map(|t| t["track_id"].as_str().unwrap())
        .find(|id| is_target(id))
        .unwrap()
        .to_string();

    let thumb = call(&app, "GET", &format!("/projects/p/frames/0/thumb?track={reference}"), None).await;
    assert_eq!(thumb.status, StatusCode::OK, "{}", String::from_utf8_lossy(&thumb.body));
    assert_eq!(thumb.content_type.as_deref(), Some("image/png"));
    image::load_from_memory(&thumb.body).unwrap();

    let scored = call(&app, "POST", "/projects/p/reference", Some(json!({"track_ids": [reference]}))).await;
    assert_eq!(scored.json()["state"], "refs_chosen");
    assert_error(
        &call(&app, "POST", "/projects/p/threshold", Some(json!({"threshold": 1.01}))).await,
        StatusCode::BAD_REQUEST,
        "invalid_input",
    );
    let scored = call(&app, "POST", "/projects/p/threshold", Some(json!({"threshold": 0.5}))).await.json();
    assert_eq!(scored["state"], "scored");
    assert_eq!(scored["matches"], 2);
    assert_eq!(call(&app, "GET", "/projects/p/scores", None).await.json(), scored);

    let clusters = call(&app, "GET", "/projects/p/clusters", None).await.json();
    assert_eq!(clusters["clusters"].as_array().unwrap().len(), 3);
    let picked = call(&app, "POST", "/projects/p/clusters/pick", Some(json!({"cluster_ids": [2]}))).await.json();
    assert_eq!(picked["picked"], json!([2]));

    let audio = call(&app, "GET", "/projects/p/segments/s0/audio", None).await;
    assert_eq!(audio.status, StatusCode::OK);
    assert_eq!(audio.content_type.as_deref(), Some("audio/wav"));
    assert_eq!(&audio.body[..4], b"RIFF");
    assert_error(
        &call(&app, "GET", "/projects/p/segments/s77/audio", None).await,
        StatusCode::NOT_FOUND,
        "not_found",
    );

    let approved = call(&app, "POST", "/projects/p/approve", None).await.json();
    let plan_hash = approved["plan_hash"].as_str().unwrap().to_string();
    let plan = call(&app, "GET", "/projects/p/plan", None).await;
    assert_eq!(sha256_hex(&plan.body), plan_hash);
    assert_error(
        &call(&app, "POST", "/projects/p/threshold", Some(json!({"threshold": 0.3}))).await,
        StatusCode::CONFLICT,
        "conflict",
    );
    assert_error(&call(&app, "GET", "/projects/p/report", None).await, StatusCode::NOT_FOUND, "not_found");

    let report = call(&app, "POST", "/projects/p/execute", None).await.json();
    assert_eq!(report["plan_hash"], plan_hash.as_str());
    assert_eq!(call(&app, "POST", "/projects/p/execute", None).await.json(), report);
    assert_eq!(call(&app, "GET", "/projects/p/report", None).await.json(), report);
    let shown = call(&app, "GET", "/projects/p", None).await.json();
    assert_eq!(shown["project"]["state"], "redacted");
    assert_eq!(shown["executing"], false);

    let log = call(&app, "GET", "/projects/p/log", None).await.json();
    let ops: Vec<&str> = log.as_array().unwrap().iter().map(|e| e["action"]["op"].as_str().unwrap()).collect();
    assert_eq!(
        ops,
        ["create", "track", "set_reference", "set_threshold", "pick_clusters", "approve", "execute"]
    );

    let via = call(&app, "GET", "/projects/p/export/via", None).await;
    let regions = parse_via(&serde_json::from_slice(&via.body).unwrap()).unwrap();
    let observed: usize = tracks.units().map(|t| t.observations.len()).sum();
    assert_eq!(regions.len(), observed);

    let eaf = call(&app, "GET", "/projects/p/export/eaf", None).await;
    assert_eq!(eaf.content_type.as_deref(), Some("application/xml"));
    let doc = parse_eaf(std::str::from_utf8(&eaf.body).unwrap()).unwrap();
    assert!(!doc.tier(ANONYMISE_TIER).unwrap().annotations.is_empty());
    assert!(doc.tier("SPK2").unwrap().annotations.iter().all(|a| a.value == "redact"));
    assert!(doc.tier("SPK0").unwrap().annotations.iter().all(|a| a.value == "keep"));
}

#[tokio::test]
async fn approval_with_no_matches_needs_confirm() {
    let f = fixture();
    let app = app(&f);
    call(&app, "POST", "/projects", Some(create_body(&f, "p"))).await;
    call(&app, "POST", "/projects/p/track", None).await;
    let tracklets = call(&app, "GET", "/projects/p/tracklets", None).await.json();
    let any = tracklets[0]["track_id"].clone();
    call(&app, "POST", "/projects/p/reference", Some(json!({"track_ids": [any]}))).await;
    call(&app, "POST", "/projects/p/threshold", Some(json!({"threshold": 1.0}))).await;
    assert_error(
        &call(&app, "POST", "/projects/p/approve", Some(json!({}))).await,
        StatusCode::CONFLICT,
        "confirm_required",
    );
    let ok = call(&app, "POST", "/projects/p/approve", Some(json!({"confirm": true}))).await;
    assert_eq!(ok.status, StatusCode::OK);
}
