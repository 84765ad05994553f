//! HttpBackend against scripted servers: retries, status handling, schema
//! errors, timeouts, and output checks in the cascade helpers.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::post;
use axum::Router;
use gsmner::corpus::{EntityType, GoldEntity, ImageRef, Sample};
use gsmner::pipeline::protocol::{LlmRequest, Request, VeRequest};
use gsmner::pipeline::{
    llm_generate, run_pipeline, segment_from_box, ve_classify, vg_ground, Backend, BackendError,
    EntitySource, Expansions, HttpBackend, PipelineOptions,
};
use gsmner::prompts::compose_referring_expression;
use serde_json::{json, Value};

type Script = Arc<dyn Fn(usize, &str, &Value) -> (StatusCode, String) + Send + Sync>;

#[derive(Clone)]
struct Scripted {
    calls: Arc<AtomicUsize>,
    script: Script,
}

async fn handle(State(s): State<Scripted>, uri: Uri, body: String) -> HttpResponse {
    let n = s.calls.fetch_add(1, Ordering::SeqCst);
    let value: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
    let (status, text) = (s.script)(n, uri.path(), &value);
    if status == StatusCode::GATEWAY_TIMEOUT {
        tokio::time::sleep(Duration::from_millis(500)).await;
    }
    (status, text).into_response()
}

async fn serve(script: Script) -> (String, Arc<AtomicUsize>) {
    let calls = Arc::new(AtomicUsize::new(0));
    let state = Scripted {
        calls: calls.clone(),
        script,
    };
    let app = Router::new()
        .route("/v1/:endpoint", post(handle))
        .with_state(state);
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    (url, calls)
}

fn client(url: &str, retries: u32) -> HttpBackend {
    HttpBackend::new(url, Duration::from_millis(200), retries).unwrap()
}

fn llm_request() -> Request {
    Request::Llm(LlmRequest {
        prompt: "p".into(),
        max_tokens: 4,
    })
}

fn image() -> ImageRef {
    ImageRef {
        path: "img.jpg".into(),
        width: 20,
        height: 10,
    }
}

fn ok(body: Value) -> (StatusCode, String) {
    (StatusCode::OK, body.to_string())
}

#[tokio::test]
async fn retries_5xx_until_success() {
    let (url, calls) = serve(Arc::new(|n, _, _| {
        if n < 2 {
            (StatusCode::SERVICE_UNAVAILABLE, "busy".into())
        } else {
            ok(json!({"text": "fine"}))
        }
    }))
    .await;
    let text = llm_generate(&client(&url, 2), "p", 4).await.unwrap();
    assert_eq!(text, "fine");
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn gives_up_after_retry_budget() {
    let (url, calls) = serve(Arc::new(|_, _, _| {
        (StatusCode::INTERNAL_SERVER_ERROR, "boom".into())
    }))
    .await;
    let err = client(&url, 2).call(llm_request()).await.unwrap_err();
    assert!(
        matches!(err, BackendError::Status { status: 500, .. }),
        "{err:?}"
    );
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn client_errors_are_not_retried() {
    let (url, calls) = serve(Arc::new(|_, _, _| {
        (StatusCode::UNPROCESSABLE_ENTITY, "no".into())
    }))
    .await;
    let err = client(&url, 3).call(llm_request()).await.unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 422, ref body } if body == "no"));
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn malformed_bodies_are_schema_errors() {
    for body in ["not json", r#"{"txt": "x"}"#, r#"{"text": 1}"#] {
        let (url, calls) = serve(Arc::new(move |_, _, _| (StatusCode::OK, body.to_string()))).await;
        let err = client(&url, 3).call(llm_request()).await.unwrap_err();
        assert!(matches!(err, BackendError::Schema(_)), "{body}: {err:?}");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }
}

#[tokio::test]
async fn slow_backend_times_out() {
    let (url, calls) = serve(Arc::new(|_, _, _| {
        (StatusCode::GATEWAY_TIMEOUT, String::new())
    }))
    .await;
    let err = client(&url, 1).call(llm_request()).await.unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn connection_refused_is_transport() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let err = client(&url, 0).call(llm_request()).await.unwrap_err();
    assert!(matches!(err, BackendError::Transport(_)), "{err:?}");
}

#[tokio::test]
async fn request_bodies_match_the_wire_schema() {
    let (url, _) = serve(Arc::new(|_, path, body| {
        let want = json!({"image": "img.jpg", "expression": "Ann (PER) - a person"});
        assert_eq!(path, "/v1/ve");
        assert_eq!(body, &want);
        ok(json!({"label": "e", "score": 0.75}))
    }))
    .await;
    let req = Request::Ve(VeRequest {
        image: "img.jpg".into(),
        expression: "Ann (PER) - a person".into(),
    });
    client(&url, 0).call(req).await.unwrap();
}

#[tokio::test]
async fn cascade_helpers_check_backend_output() {
    let expr = compose_referring_expression("Ann", EntityType::Per, "").unwrap();
    let (url, _) = serve(Arc::new(|_, path, _| match path {
        "/v1/ve" => ok(json!({"label": "e", "score": 1.5})),
        "/v1/vg" => ok(json!({"box": [30, 30, 40, 40], "score": 0.9})),
        _ => ok(json!({"mask": {"w": 4, "h": 4, "counts": [16]}})),
    }))
    .await;
    let c = client(&url, 0);
    assert!(matches!(
        ve_classify(&c, &image(), &expr).await,
        Err(BackendError::Schema(_))
    ));
    assert!(matches!(
        vg_ground(&c, &image(), &expr).await,
        Err(BackendError::Invalid(_))
    ));
    let b = gsmner::corpus::BBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
    assert!(matches!(
        segment_from_box(&c, &image(), &b).await,
        Err(BackendError::Invalid(_))
    ));
}

#[tokio::test]
async fn vg_boxes_are_clamped_to_the_image() {
    let expr = compose_referring_expression("Ann", EntityType::Per, "").unwrap();
    let (url, _) = serve(Arc::new(|_, _, _| {
        ok(json!({"box": [-5, 2, 25, 8], "score": 0.9}))
    }))
    .await;
    let g = vg_ground(&client(&url, 0), &image(), &expr).await.unwrap();
    assert_eq!(g.bbox.to_array(), [0.0, 2.0, 20.0, 8.0]);
}

fn sample(id: &str, words: &[&str]) -> Sample {
    Sample {
        id: id.into(),
        tokens: words.iter().map(|w| w.to_string()).collect(),
        image: ImageRef {
            path: format!("{id}.jpg"),
            ..image()
        },
        caption: None,
        description: None,
        knowledge: None,
        entities: words
            .iter()
            .enumerate()
            .map(|(i, w)| GoldEntity {
                surface: w.to_string(),
                start: i,
                end: i + 1,
                etype: EntityType::Per,
                boxes: vec![],
                masks: vec![],
            })
            .collect(),
    }
}

#[tokio::test]
async fn failing_entity_fails_only_its_sample() {
    let (url, _) = serve(Arc::new(|_, path, body| {
        let expr = body["expression"].as_str().unwrap_or("");
        match path {
            _ if expr.starts_with("Bad") => (StatusCode::BAD_REQUEST, "refused".into()),
            "/v1/ve" => ok(json!({"label": "c", "score": 0.9})),
            _ => (StatusCode::NOT_FOUND, String::new()),
        }
    }))
    .await;
    let samples = vec![
        sample("a", &["Ann", "Bob"]),
        sample("b", &["Cy", "Bad"]),
        sample("c", &["Di"]),
    ];
    let backend = client(&url, 0);
    let run = run_pipeline(
        &samples,
        EntitySource::Gold,
        &Expansions::new(),
        &backend,
        PipelineOptions::default(),
    )
    .await
    .unwrap();
    let ids: Vec<&str> = run.records.iter().map(|r| r.id.as_str()).collect();
    assert_eq!(ids, ["a", "c"]);
    assert_eq!(run.failures.len(), 1);
    assert_eq!(run.failures[0].id, "b");
    assert_eq!(run.failures[0].errors.len(), 1);
    assert_eq!(
        (
            run.failures[0].errors[0].index,
            run.failures[0].errors[0].surface.as_str()
        ),
        (1, "Bad")
    );
    assert_eq!(run.missing_expansions, 5);

    let fast = PipelineOptions {
        fail_fast: true,
        ..PipelineOptions::default()
    };
    assert!(run_pipeline(
        &samples,
        EntitySource::Gold,
        &Expansions::new(),
        &backend,
        fast
    )
    .await
    .is_err());
}
