use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use dcad_core::models;
use dcad_server::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(config: ServerConfig) -> Router {
    router(AppState::new(config))
}

fn app() -> Router {
    app_with(ServerConfig::default())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = req
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes)
            .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn create(app: &Router, text: &str) -> Value {
    let (status, body) = call(app, "POST", "/programs", Some(json!({ "text": text }))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body
}

fn vertex(mesh: &Value, v: usize) -> [f64; 3] {
    let a = mesh["vertices"].as_array().unwrap();
    [0, 1, 2].map(|k| a[3 * v + k].as_f64().unwrap())
}

fn param(body: &Value, name: &str) -> f64 {
    body["params"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["name"] == name)
        .unwrap()["value"]
        .as_f64()
        .unwrap()
}

fn pull() -> Value {
    json!({ "moved": [{ "vid": 7, "target": [1.5, 0.5, 0.5] }] })
}

#[tokio::test]
async fn create_returns_mesh_and_params() {
    let app = app();
    let body = create(&app, models::BOX).await;
    assert_eq!(body["v"], 1);
    assert_eq!(body["revision"], 0);
    assert_eq!(body["mesh"]["vertices"].as_array().unwrap().len(), 24);
    assert_eq!(body["mesh"]["faces"].as_array().unwrap().len(), 6);
    assert_eq!(body["mesh"]["triangles"].as_array().unwrap().len(), 12);
    assert_eq!(body["mesh"]["edges"].as_array().unwrap().len(), 12);
    assert_eq!(param(&body, "w"), 1.0);

    let again = create(&app, models::BOX).await;
    assert_ne!(again["id"], body["id"]);
    assert_eq!(again["mesh"], body["mesh"]);
}

#[tokio::test]
async fn invalid_programs_are_unprocessable() {
    let app = app();
    let (status, body) = call(
        &app,
        "POST",
        "/programs",
        Some(json!({ "text": "param w = 1\nsolid b = box(w, 1\n" })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["v"], 1);
    assert_eq!(body["diagnostics"][0]["line"], 3);

    let (status, body) = call(
        &app,
        "POST",
        "/programs",
        Some(json!({ "text": "solid b = box(q, 1, 1)\n" })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(
        body["diagnostics"][0]["message"]
            .as_str()
            .unwrap()
            .contains('q'),
        "{body}"
    );

    let (status, body) = call(&app, "POST", "/programs", Some(json!({ "txt": "" }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["v"], 1);
}

#[tokio::test]
async fn param_updates_reevaluate_without_recompiling() {
    let app = app();
    let id = create(&app, models::BOX).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, body) = call(
        &app,
        "PUT",
        &format!("/programs/{id}/params"),
        Some(json!({ "w": 3.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["revision"], 0);
    assert!((vertex(&body["mesh"], 7)[0] - 1.5).abs() < 1e-12);
    assert!(body["text"].as_str().unwrap().contains("param w = 3"));

    let (status, _) = call(
        &app,
        "PUT",
        &format!("/programs/{id}/params"),
        Some(json!({ "nope": 1.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    // Violates the model's clamp on w.
    let (status, body) = call(
        &app,
        "PUT",
        &format!("/programs/{id}/params"),
        Some(json!({ "w": -1.0 })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");
    let (_, body) = call(&app, "GET", &format!("/programs/{id}"), None).await;
    assert_eq!(param(&body, "w"), 3.0);
}

#[tokio::test]
async fn text_updates_bump_revision() {
    let app = app();
    let id = create(&app, models::BOX).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let text = format!("{}translate(b, 1, 0, 0)\n", models::BOX);
    let (status, body) = call(
        &app,
        "PUT",
        &format!("/programs/{id}"),
        Some(json!({ "text": text })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["revision"], 1);
    assert!((vertex(&body["mesh"], 0)[0] - 0.5).abs() < 1e-12);

    let (status, _) = call(
        &app,
        "PUT",
        &format!("/programs/{id}"),
        Some(json!({ "text": "solid = box" })),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (_, body) = call(&app, "GET", &format!("/programs/{id}"), None).await;
    assert_eq!(body["revision"], 1);
}

#[tokio::test]
async fn unknown_session_is_not_found() {
    let app = app();
    for (method, uri, body) in [
        ("GET", "/programs/zzz", None),
        ("GET", "/programs/zzz/mesh", None),
        ("PUT", "/programs/zzz/params", Some(json!({}))),
        ("POST", "/programs/zzz/edits", Some(pull())),
        ("DELETE", "/programs/zzz", None),
    ] {
        let (status, body) = call(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {uri}");
        assert_eq!(body["v"], 1);
    }
}

#[tokio::test]
async fn edit_select_round_trip() {
    let app = app();
    let id = create(&app, models::BOX).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, body) = call(&app, "POST", &format!("/programs/{id}/edits"), Some(pull())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "done");
    let gallery = &body["gallery"];
    assert_eq!(gallery["v"], 1);
    assert_eq!(gallery["options"].as_array().unwrap().len(), 1);
    assert!((gallery["options"][0]["params"][0].as_f64().unwrap() - 3.0).abs() < 1e-4);
    let eid = body["edit_id"].as_str().unwrap().to_string();

    let select = format!("/programs/{id}/edits/{eid}/select");
    let (status, sel) = call(&app, "POST", &select, Some(json!({ "index": 0 }))).await;
    assert_eq!(status, StatusCode::OK, "{sel}");
    assert!(
        sel["text"].as_str().unwrap().contains("param w = 3.0"),
        "{}",
        sel["text"]
    );
    assert_eq!(sel["mesh"]["vertices"], gallery["options"][0]["positions"]);
    let (_, mesh) = call(&app, "GET", &format!("/programs/{id}/mesh"), None).await;
    assert_eq!(mesh["vertices"], gallery["options"][0]["positions"]);
    assert_eq!(mesh["v"], 1);

    let (_, again) = call(&app, "POST", &select, Some(json!({ "index": 0 }))).await;
    assert_eq!(again, sel);
    let (status, _) = call(&app, "POST", &select, Some(json!({ "index": 5 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        "POST",
        &format!("/programs/{id}/edits/e99/select"),
        Some(json!({ "index": 0 })),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // An identity edit from the selected state returns that state alone.
    let p = vertex(&mesh, 7);
    let ident = json!({ "moved": [{ "vid": 7, "target": p }], "fixed": [0] });
    let (_, body) = call(&app, "POST", &format!("/programs/{id}/edits"), Some(ident)).await;
    let options = body["gallery"]["options"].as_array().unwrap();
    assert_eq!(options.len(), 1);
    let selected: Vec<f64> = sel["params"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["value"].as_f64().unwrap())
        .collect();
    assert_eq!(options[0]["params"], json!(selected));
}

#[tokio::test]
async fn edit_errors() {
    let app = app();
    let id = create(&app, models::BOX).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let url = format!("/programs/{id}/edits");
    let (status, body) = call(
        &app,
        "POST",
        &url,
        Some(json!({ "moved": [{ "vid": 8, "target": [0, 0, 0] }] })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    let (status, _) = call(&app, "POST", &url, Some(json!({ "moved": [] }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(
        &app,
        "POST",
        &url,
        Some(json!({ "moved": [{ "vid": 7, "target": [1, 1, 1] }], "gamma": { "vol": -1 } })),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut stale = pull();
    stale["revision"] = json!(4);
    let (status, body) = call(&app, "POST", &url, Some(stale)).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    let mut current = pull();
    current["revision"] = json!(0);
    let (status, body) = call(&app, "POST", &url, Some(current)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let eid = body["edit_id"].as_str().unwrap().to_string();

    // A gallery solved before a text change cannot be applied after it.
    call(
        &app,
        "PUT",
        &format!("/programs/{id}"),
        Some(json!({ "text": models::BOX })),
    )
    .await;
    let (status, _) = call(
        &app,
        "POST",
        &format!("{url}/{eid}/select"),
        Some(json!({ "index": 0 })),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn slow_syncs_answer_accepted_and_can_be_polled() {
    let app = app_with(ServerConfig {
        sync_wait: Duration::ZERO,
        ..Default::default()
    });
    let id = create(&app, models::DRESSER).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let edit = json!({ "moved": (36..40).map(|v| json!({ "vid": v, "target": [0.0, 0.0, 1.5] })).collect::<Vec<_>>() });
    let (status, body) = call(&app, "POST", &format!("/programs/{id}/edits"), Some(edit)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    assert_eq!(body["status"], "pending");
    let poll = body["poll"].as_str().unwrap().to_string();

    // Session requests queue behind the running solve, so once this returns
    // the edit is finished.
    let (status, _) = call(&app, "GET", &format!("/programs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = call(&app, "GET", &poll, None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "done");
    assert!(!body["gallery"]["options"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn dump_restores_a_session() {
    let app = app();
    let id = create(&app, models::MOUNT).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    call(
        &app,
        "PUT",
        &format!("/programs/{id}/params"),
        Some(json!({ "w": 5.0 })),
    )
    .await;
    call(
        &app,
        "POST",
        &format!("/programs/{id}/edits"),
        Some(json!({ "moved": [{ "vid": 3, "target": [2.6, 0.0, 0.0] }] })),
    )
    .await;
    let (status, dump) = call(&app, "GET", &format!("/programs/{id}/dump"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(dump["v"], 1);
    assert_eq!(dump["params"]["w"], 5.0);
    assert_eq!(dump["edits"].as_array().unwrap().len(), 1);

    let (status, restored) = call(&app, "POST", "/programs", Some(dump)).await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, original) = call(&app, "GET", &format!("/programs/{id}/mesh"), None).await;
    assert_eq!(restored["mesh"], original);

    let (status, tape) = call(&app, "GET", &format!("/programs/{id}/tape"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(tape.as_str().unwrap().lines().count() > 20);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let app = app_with(ServerConfig {
        ttl: Duration::from_millis(20),
        ..Default::default()
    });
    let id = create(&app, models::BOX).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, _) = call(&app, "GET", &format!("/programs/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(60)).await;
    let (status, _) = call(&app, "GET", &format!("/programs/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn delete_and_bundled_models() {
    let app = app();
    let (status, body) = call(&app, "GET", "/models", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["models"].as_array().unwrap().len(), models::ALL.len());
    let id = create(&app, models::BOX).await["id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, _) = call(&app, "DELETE", &format!("/programs/{id}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = call(&app, "GET", &format!("/programs/{id}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
