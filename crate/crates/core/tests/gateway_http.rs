//! The HTTP backend against a local chat-completions stub.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use incident_report::gateway::{
    ChatRequest, Decoding, EndpointConfig, FinishReason, Gateway, GatewayError, HttpBackend,
    RequestTag, RetryPolicy, UserPart,
};
use serde_json::{json, Value};

struct Stub {
    calls: AtomicU32,
    /// Status codes to return before succeeding.
    script: Vec<u16>,
}

async fn completions(State(stub): State<Arc<Stub>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = stub.calls.fetch_add(1, Ordering::SeqCst) as usize;
    if let Some(&code) = stub.script.get(n) {
        return (
            StatusCode::from_u16(code).unwrap(),
            Json(json!({"error": {"message": format!("scripted {code}")}})),
        );
    }
    let text = format!("echo {}", body["model"].as_str().unwrap_or_default());
    (
        StatusCode::OK,
        Json(json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]})),
    )
}

async fn serve(script: Vec<u16>) -> (String, Arc<Stub>) {
    let stub = Arc::new(Stub {
        calls: AtomicU32::new(0),
        script,
    });
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(stub.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (format!("http://{addr}/v1"), stub)
}

fn endpoint(base: &str, max_attempts: u32) -> EndpointConfig {
    let mut e = EndpointConfig::new(base, "stub-model");
    e.retry = RetryPolicy {
        max_attempts,
        backoff_base: Duration::from_millis(5),
    };
    e
}

fn request() -> ChatRequest {
    ChatRequest {
        model_name: "stub-model".into(),
        system_prompt: "sys".into(),
        user_parts: vec![UserPart::text("hello")],
        decoding: Decoding::default(),
        timeout: Duration::from_secs(5),
        tag: RequestTag {
            stage: "stage2".into(),
            video_id: "v1".into(),
            frame: None,
            ordinal: 0,
        },
    }
}

#[tokio::test]
async fn two_server_errors_then_success() {
    let (base, stub) = serve(vec![500, 500]).await;
    let gw = Gateway::new(Arc::new(HttpBackend::new()));
    let resp = gw.complete(&endpoint(&base, 3), &request()).await.unwrap();
    assert_eq!(resp.text, "echo stub-model");
    assert_eq!(resp.finish_reason, FinishReason::Stop);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
    assert_eq!(gw.call_log()[0].attempts, 3);
}

#[tokio::test]
async fn single_attempt_exhausts_on_server_error() {
    let (base, _) = serve(vec![500]).await;
    let gw = Gateway::new(Arc::new(HttpBackend::new()));
    let err = gw.complete(&endpoint(&base, 1), &request()).await.unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 1, .. }), "{err}");
}

#[tokio::test]
async fn client_errors_are_provider_errors_without_retry() {
    let (base, stub) = serve(vec![400]).await;
    let gw = Gateway::new(Arc::new(HttpBackend::new()));
    let err = gw.complete(&endpoint(&base, 4), &request()).await.unwrap_err();
    assert_eq!(
        err,
        GatewayError::Provider {
            status: 400,
            message: "scripted 400".into()
        }
    );
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn unreachable_endpoint_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let gw = Gateway::new(Arc::new(HttpBackend::new()));
    let err = gw
        .complete(&endpoint(&format!("http://127.0.0.1:{port}/v1"), 2), &request())
        .await
        .unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }), "{err}");
}

#[tokio::test]
async fn missing_api_key_variable_is_reported() {
    let (base, stub) = serve(vec![]).await;
    let mut e = endpoint(&base, 3);
    e.api_key_env = Some("INCIDENT_REPORT_TEST_KEY_THAT_IS_NOT_SET".into());
    let gw = Gateway::new(Arc::new(HttpBackend::new()));
    let err = gw.complete(&e, &request()).await.unwrap_err();
    assert!(matches!(err, GatewayError::MissingApiKey(_)));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 0);
}
