//! HTTP front end for [`MockResponder`], so the live client path can be
//! exercised without real models.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::mock::{mock_respond, MockResponder};
use super::protocol::{HEALTH_PATH, LLM_PATH, SEGMENT_PATH, VE_PATH, VG_PATH};

async fn handle(State(r): State<Arc<MockResponder>>, uri: Uri, body: String) -> Response {
    let value: Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(e) => {
            return (
                StatusCode::BAD_REQUEST,
                Json(json!({"error": e.to_string()})),
            )
                .into_response()
        }
    };
    match mock_respond(&r, uri.path(), value) {
        Ok(v) => Json(v).into_response(),
        Err(e) => (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({"error": e}))).into_response(),
    }
}

pub fn mock_router(responder: Arc<MockResponder>) -> Router {
    Router::new()
        .route(VE_PATH, post(handle))
        .route(VG_PATH, post(handle))
        .route(SEGMENT_PATH, post(handle))
        .route(LLM_PATH, post(handle))
        .route(HEALTH_PATH, get(|| async { Json(json!({"status": "ok"})) }))
        .with_state(responder)
}

/// A mock backend served on a local port; aborted on drop.
pub struct MockServer {
    addr: SocketAddr,
    task: JoinHandle<()>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves the mock in the
/// current tokio runtime.
pub async fn spawn_mock_server(
    responder: Arc<MockResponder>,
    addr: SocketAddr,
) -> std::io::Result<MockServer> {
    let listener = TcpListener::bind(addr).await?;
    let addr = listener.local_addr()?;
    let app = mock_router(responder);
    let task = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            log::error!("mock server stopped: {e}");
        }
    });
    Ok(MockServer { addr, task })
}
