use std::path::PathBuf;
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use shapeedit_core::autoencoder::{train_autoencoder, AutoencoderConfig};
use shapeedit_core::editor::EditConfig;
use shapeedit_core::jointspace::{train_jointspace, JointConfig};
use shapeedit_core::shapeworld::{
    generate_dataset, shapes_of, write_dataset, Category, DatasetConfig, ShapeParams, Split,
};
use shapeedit_server::{router, AppState, ServerConfig, MAX_STEPS};

struct Fixture {
    _dir: tempfile::TempDir,
    config: ServerConfig,
    state: AppState,
}

/// Models trained with the default configuration, saved to disk and loaded
/// back the way the server binary does.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let data = generate_dataset(&DatasetConfig::default(), 31).unwrap();
        let train = shapes_of(&data, Some(Split::Train));
        let ae = train_autoencoder(&train, &AutoencoderConfig::default(), 31).unwrap();
        let model = train_jointspace(&data, &ae, &JointConfig::default(), 31).unwrap();
        let path = |name: &str| -> PathBuf { dir.path().join(name) };
        ae.to_checkpoint().save(&path("ae.ckpt")).unwrap();
        model.to_checkpoint().save(&path("joint.ckpt")).unwrap();
        write_dataset(&path("dataset.jsonl"), &data).unwrap();
        let config = ServerConfig {
            checkpoint: path("joint.ckpt"),
            autoencoder: path("ae.ckpt"),
            dataset: path("dataset.jsonl"),
            edit: EditConfig::default(),
            swell: 0.05,
        };
        let state = AppState::load(&config).unwrap();
        Fixture {
            _dir: dir,
            config,
            state,
        }
    })
}

fn app() -> Router {
    router(fixture().state.clone(), None).unwrap()
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    use tower::ServiceExt;
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    send(app, Method::POST, uri, Some(&body.to_string())).await
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    send(app, Method::GET, uri, None).await
}

fn chair() -> ShapeParams {
    let mut p = ShapeParams::midpoint(Category::Chair);
    p.leg_height *= 0.93;
    p.seat_width *= 1.07;
    p.has_arms = true;
    p.has_back = true;
    p
}

async fn create(app: &Router, body: Value) -> String {
    let (status, v) = post(app, "/sessions", body).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    v["sessionId"].as_str().unwrap().to_owned()
}

fn params(v: &Value) -> ShapeParams {
    serde_json::from_value(v.clone()).unwrap()
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, v) = get(&app(), "/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn created_params_are_echoed_exactly() {
    let app = app();
    let p = chair();
    let (status, created) = post(&app, "/sessions", json!({ "params": p })).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(params(&created["params"]), p);
    assert!(!created["shape"]["boxes"].as_array().unwrap().is_empty());
    let id = created["sessionId"].as_str().unwrap();
    let (status, got) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(params(&got["params"]), p);
    assert_eq!(got["shape"], created["shape"]);
    assert_eq!(got["history"], json!([]));
    assert!(got["pending"].is_null());
}

#[tokio::test]
async fn random_sessions_follow_their_seed() {
    let app = app();
    let a = create(&app, json!({ "randomSeed": 12 })).await;
    let b = create(&app, json!({ "randomSeed": 12 })).await;
    let c = create(&app, json!({})).await;
    assert_ne!(a, b);
    let pa = get(&app, &format!("/sessions/{a}")).await.1["params"].clone();
    let pb = get(&app, &format!("/sessions/{b}")).await.1["params"].clone();
    assert_eq!(pa, pb);
    params(&get(&app, &format!("/sessions/{c}")).await.1["params"])
        .validate()
        .unwrap();
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let app = app();
    assert_eq!(get(&app, "/sessions/nope").await.0, StatusCode::NOT_FOUND);
    let edit = json!({ "utterance": "the legs are longer" });
    assert_eq!(
        post(&app, "/sessions/nope/edit", edit).await.0,
        StatusCode::NOT_FOUND
    );
    for action in ["accept", "undo"] {
        assert_eq!(
            send(
                &app,
                Method::POST,
                &format!("/sessions/nope/{action}"),
                None
            )
            .await
            .0,
            StatusCode::NOT_FOUND
        );
    }
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let app = app();
    let bad = |body: &'static str| {
        let app = app.clone();
        async move { send(&app, Method::POST, "/sessions", Some(body)).await }
    };
    assert_eq!(bad("{not json").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(bad(r#"{"surprise": 1}"#).await.0, StatusCode::BAD_REQUEST);
    let mut p = chair();
    p.leg_height = -1.0;
    assert_eq!(
        post(&app, "/sessions", json!({ "params": p })).await.0,
        StatusCode::BAD_REQUEST
    );

    let id = create(&app, json!({ "params": chair() })).await;
    let uri = format!("/sessions/{id}/edit");
    for body in [
        json!({}),
        json!({ "utterance": "   " }),
        json!({ "utterance": "the legs are longer", "steps": MAX_STEPS + 1 }),
        json!({ "utterance": "the legs are longer", "delta": -0.1 }),
        json!({ "utterance": 7 }),
    ] {
        let (status, v) = post(&app, &uri, body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        assert!(v["error"].is_string());
    }
    assert_eq!(
        send(&app, Method::POST, "/text/encode", Some("[]")).await.0,
        StatusCode::BAD_REQUEST
    );
}

#[tokio::test]
async fn zero_steps_gives_a_single_frame_near_the_source() {
    let app = app();
    let p = chair();
    let id = create(&app, json!({ "params": p })).await;
    let (status, v) = post(
        &app,
        &format!("/sessions/{id}/edit"),
        json!({ "utterance": "the legs are longer", "steps": 0 }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let trace = v["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(trace[0]["step"], 0);
    let back = params(&v["finalParams"]);
    assert_eq!(back.category, p.category);
    for (a, b) in p.values().iter().zip(back.values()) {
        assert!((a - b).abs() <= 0.05 * a, "{a} vs {b}");
    }
}

#[tokio::test]
async fn edit_responses_carry_the_full_trace() {
    let app = app();
    let id = create(&app, json!({ "params": chair() })).await;
    let (status, v) = post(
        &app,
        &format!("/sessions/{id}/edit"),
        json!({ "utterance": "the seat is wider", "steps": 6, "seed": 4 }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let trace = v["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 7);
    for (i, frame) in trace.iter().enumerate() {
        assert_eq!(frame["step"], i);
        for key in ["h", "deltaV", "stepScale", "clipped", "shape", "params"] {
            assert!(!frame[key].is_null(), "step {i} lacks {key}");
        }
    }
    assert_eq!(trace[6]["params"], v["finalParams"]);
    assert_eq!(v["failed"], false);
    assert!(v.get("pep").is_some() || v.get("pepReason").is_some());
    if v.get("pep").is_none() {
        assert!(v["pepReason"].is_string());
    }

    let (_, session) = get(&app, &format!("/sessions/{id}")).await;
    assert_eq!(session["pending"]["params"], v["finalParams"]);
    assert_eq!(session["pending"]["summary"]["steps"], 6);
}

#[tokio::test]
async fn unparseable_utterances_report_why_pep_is_missing() {
    let app = app();
    let id = create(&app, json!({ "params": chair() })).await;
    let (status, v) = post(
        &app,
        &format!("/sessions/{id}/edit"),
        json!({ "utterance": "make it nicer", "steps": 3, "seed": 1 }),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(v.get("pep").is_none());
    assert_eq!(v["pepReason"], "no_part_mentioned");
}

#[tokio::test]
async fn edits_with_the_same_seed_repeat() {
    let app = app();
    let body = json!({ "utterance": "the back is taller", "steps": 5, "seed": 9 });
    let mut finals = Vec::new();
    for _ in 0..2 {
        let id = create(&app, json!({ "params": chair() })).await;
        let (_, v) = post(&app, &format!("/sessions/{id}/edit"), body.clone()).await;
        finals.push(v["trace"].clone());
    }
    assert_eq!(finals[0], finals[1]);
}

#[tokio::test]
async fn accept_then_undo_restores_the_exact_source() {
    let app = app();
    let p = chair();
    let id = create(&app, json!({ "params": p })).await;
    let base = format!("/sessions/{id}");
    let (status, _) = send(&app, Method::POST, &format!("{base}/accept"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = send(&app, Method::POST, &format!("{base}/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let mut finals = Vec::new();
    for (i, utterance) in ["the legs are longer", "the seat is thinner"]
        .iter()
        .enumerate()
    {
        let (_, v) = post(
            &app,
            &format!("{base}/edit"),
            json!({ "utterance": utterance, "steps": 5, "seed": i }),
        )
        .await;
        let (status, accepted) = send(&app, Method::POST, &format!("{base}/accept"), None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(accepted["newSourceParams"], v["finalParams"]);
        finals.push(params(&v["finalParams"]));
    }
    let (_, s) = get(&app, &base).await;
    assert_eq!(params(&s["params"]), finals[1]);
    assert!(s["pending"].is_null());

    let (_, undone) = send(&app, Method::POST, &format!("{base}/undo"), None).await;
    assert_eq!(params(&undone["sourceParams"]), finals[0]);
    let (_, undone) = send(&app, Method::POST, &format!("{base}/undo"), None).await;
    assert_eq!(params(&undone["sourceParams"]), p);
    let (status, _) = send(&app, Method::POST, &format!("{base}/undo"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, s) = get(&app, &base).await;
    assert_eq!(params(&s["params"]), p);
    let kinds: Vec<&str> = s["history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds, ["accept", "accept", "undo", "undo"]);
}

#[tokio::test]
async fn sessions_do_not_share_state() {
    let app = app();
    let a = create(&app, json!({ "params": chair() })).await;
    let b = create(&app, json!({ "params": chair() })).await;
    let (_, before) = get(&app, &format!("/sessions/{b}")).await;
    post(
        &app,
        &format!("/sessions/{a}/edit"),
        json!({ "utterance": "the legs are longer", "steps": 5 }),
    )
    .await;
    send(&app, Method::POST, &format!("/sessions/{a}/accept"), None).await;
    let (_, after) = get(&app, &format!("/sessions/{b}")).await;
    assert_eq!(before, after);
    let (_, moved) = get(&app, &format!("/sessions/{a}")).await;
    assert_ne!(moved["params"], after["params"]);
}

#[tokio::test]
async fn text_encoding_is_a_unit_vector_with_simplex_weights() {
    let app = app();
    let (status, v) = post(
        &app,
        "/text/encode",
        json!({ "utterance": "the legs are longer" }),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let e: Vec<f64> = serde_json::from_value(v["embedding"].clone()).unwrap();
    let w: Vec<f64> = serde_json::from_value(v["votingWeights"].clone()).unwrap();
    assert_eq!(e.len(), JointConfig::default().joint_dim);
    assert_eq!(w.len(), JointConfig::default().experts);
    assert!((e.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-9);
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(w.iter().all(|&x| x >= 0.0));
    assert_eq!(v["truncated"], false);
}

#[tokio::test]
async fn model_info_describes_the_checkpoint() {
    let (status, v) = get(&app(), "/model/info").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["k"], JointConfig::default().experts);
    assert_eq!(v["jointDim"], JointConfig::default().joint_dim);
    assert_eq!(v["miningStrategy"], "multiutterance");
    assert_eq!(v["checkpointHash"].as_str().unwrap().len(), 64);
    assert!(v["valAccuracy"].as_f64().unwrap() > 0.5);
    assert!(v["temperature"].as_f64().unwrap() > 0.0);
}

#[tokio::test]
async fn cors_headers_follow_the_configured_origin() {
    use tower::ServiceExt;
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/health")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "GET")
            .body(Body::empty())
            .unwrap()
    };
    let res = app().oneshot(preflight("http://a.example")).await.unwrap();
    assert_eq!(res.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "*");

    let strict = router(fixture().state.clone(), Some("http://ui.example")).unwrap();
    let res = strict
        .clone()
        .oneshot(preflight("http://ui.example"))
        .await
        .unwrap();
    assert_eq!(
        res.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN],
        "http://ui.example"
    );
    // the browser rejects the mismatch; the header never names the caller
    let res = strict
        .oneshot(preflight("http://evil.example"))
        .await
        .unwrap();
    assert_eq!(
        res.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN],
        "http://ui.example"
    );
    assert!(router(fixture().state.clone(), Some("bad\norigin")).is_err());
}

#[tokio::test]
async fn checkpoint_files_are_never_written() {
    let f = fixture();
    let files = [
        &f.config.checkpoint,
        &f.config.autoencoder,
        &f.config.dataset,
    ];
    let before: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let app = app();
    let id = create(&app, json!({ "params": chair() })).await;
    for utterance in ["the legs are longer", "a wider back"] {
        post(
            &app,
            &format!("/sessions/{id}/edit"),
            json!({ "utterance": utterance, "steps": 4 }),
        )
        .await;
        send(&app, Method::POST, &format!("/sessions/{id}/accept"), None).await;
    }
    let after: Vec<Vec<u8>> = files.iter().map(|p| std::fs::read(p).unwrap()).collect();
    assert_eq!(before, after);
    // a fresh load sees the same model
    let reloaded = router(AppState::load(&f.config).unwrap(), None).unwrap();
    assert_eq!(
        get(&reloaded, "/model/info").await.1["checkpointHash"],
        get(&app, "/model/info").await.1["checkpointHash"]
    );
}

#[tokio::test]
async fn longer_legs_request_raises_leg_height() {
    let app = app();
    let mut raised = 0;
    for seed in 0..50u64 {
        let (_, created) = post(&app, "/sessions", json!({ "randomSeed": seed })).await;
        let id = created["sessionId"].as_str().unwrap();
        let before = params(&created["params"]).leg_height;
        let (status, v) = post(
            &app,
            &format!("/sessions/{id}/edit"),
            json!({ "utterance": "the legs are longer", "seed": seed }),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{v}");
        if params(&v["finalParams"]).leg_height > before {
            raised += 1;
        }
    }
    assert!(raised >= 40, "leg height raised in {raised} of 50 sessions");
}
