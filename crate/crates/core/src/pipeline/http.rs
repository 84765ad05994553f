use std::time::Duration;

use async_trait::async_trait;

use super::protocol::{HealthResponse, Request, Response, HEALTH_PATH};
use super::{Backend, BackendError, ConfigError};

const RETRY_BACKOFF: Duration = Duration::from_millis(50);

/// Client for a live backend. Transport failures and 5xx responses are
/// retried up to `retries` extra times; 4xx responses and malformed bodies
/// are not.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    client: reqwest::Client,
    base: String,
    retries: u32,
}

impl HttpBackend {
    pub fn new(base: &str, timeout: Duration, retries: u32) -> Result<Self, ConfigError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ConfigError::Client(e.to_string()))?;
        Ok(Self {
            client,
            base: base.trim_end_matches('/').to_string(),
            retries,
        })
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub async fn health(&self) -> Result<HealthResponse, BackendError> {
        let resp = self
            .client
            .get(format!("{}{HEALTH_PATH}", self.base))
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: resp.text().await.unwrap_or_default(),
            });
        }
        resp.json()
            .await
            .map_err(|e| BackendError::Schema(e.to_string()))
    }

    async fn attempt(&self, request: &Request) -> Result<Response, BackendError> {
        let resp = self
            .client
            .post(format!("{}{}", self.base, request.path()))
            .json(&request.body())
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Schema(e.to_string()))?;
        Response::from_wire(request, value).map_err(BackendError::Schema)
    }
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Transport(_) => true,
        BackendError::Status { status, .. } => *status >= 500,
        _ => false,
    }
}

#[async_trait]
impl Backend for HttpBackend {
    async fn call(&self, request: Request) -> Result<Response, BackendError> {
        let mut attempt = 0;
        loop {
            match self.attempt(&request).await {
                Err(e) if retryable(&e) && attempt < self.retries => {
                    attempt += 1;
                    log::warn!("{} attempt {attempt} failed: {e}; retrying", request.path());
                    tokio::time::sleep(RETRY_BACKOFF * attempt).await;
                }
                other => return other,
            }
        }
    }
}
