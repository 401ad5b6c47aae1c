//! Blocking HTTP client for remote generator services.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::protocol::*;
use super::{Backend, BackendError, Result};

pub const ENV_BACKEND_URL: &str = "SEGPIPE_BACKEND_URL";
pub const ENV_BACKEND_TIMEOUT_SECS: &str = "SEGPIPE_BACKEND_TIMEOUT_SECS";
pub const ENV_BACKEND_RETRIES: &str = "SEGPIPE_BACKEND_RETRIES";

#[derive(Clone, Debug, PartialEq)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Total attempts per request, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles for each later one.
    pub backoff: Duration,
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_secs(300),
            attempts: 3,
            backoff: Duration::from_millis(200),
        }
    }

    /// Reads the endpoint, timeout and attempt count from the environment.
    pub fn from_env() -> Option<Self> {
        let mut cfg = Self::new(std::env::var(ENV_BACKEND_URL).ok()?);
        if let Some(secs) = std::env::var(ENV_BACKEND_TIMEOUT_SECS).ok().and_then(|v| v.parse::<f64>().ok()) {
            cfg.timeout = Duration::from_secs_f64(secs);
        }
        if let Some(n) = std::env::var(ENV_BACKEND_RETRIES).ok().and_then(|v| v.parse().ok()) {
            cfg.attempts = n;
        }
        Some(cfg)
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Unavailable(format!("cannot build HTTP client: {e}")))?;
        Ok(HttpBackend { config, client })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    /// POSTs a JSON envelope with retries. Requests are idempotent, so every
    /// attempt carries the same `Idempotency-Key` derived from the endpoint
    /// and body.
    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, endpoint: &str, req: &Req) -> Result<Resp> {
        let body = serde_json::to_vec(req).map_err(|e| BackendError::Protocol(e.to_string()))?;
        let key = hex::encode(Sha256::new().chain_update(endpoint).chain_update(&body).finalize());
        let url = format!("{}{}", self.config.base_url, endpoint);
        let attempts = self.config.attempts.max(1);
        let mut last = BackendError::Unavailable(format!("{url}: no attempt made"));
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * 2u32.pow(attempt - 1));
            }
            match self.attempt(&url, &key, &body) {
                Ok(bytes) => {
                    return serde_json::from_slice(&bytes)
                        .map_err(|e| BackendError::Protocol(format!("malformed response from {endpoint}: {e}")))
                }
                Err(e @ (BackendError::Unavailable(_) | BackendError::Timeout)) => {
                    tracing::warn!(%url, attempt, error = %e, "backend request failed");
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    fn attempt(&self, url: &str, key: &str, body: &[u8]) -> Result<Vec<u8>> {
        let resp = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .header("idempotency-key", key)
            .body(body.to_vec())
            .send()
            .map_err(|e| classify(url, e))?;
        let status = resp.status();
        let bytes = resp.bytes().map_err(|e| classify(url, e))?.to_vec();
        if status.is_success() {
            return Ok(bytes);
        }
        let err = match serde_json::from_slice::<ErrorEnvelope>(&bytes) {
            Ok(env) => BackendError::from_envelope(&env.error.kind, env.error.message),
            Err(_) => BackendError::Protocol(format!("{url}: HTTP {status}")),
        };
        // Server-side overload is worth retrying; anything else is final.
        if status.is_server_error() && !matches!(err, BackendError::Shape(_) | BackendError::InvalidRequest(_)) {
            return Err(BackendError::Unavailable(err.to_string()));
        }
        Err(err)
    }
}

fn classify(url: &str, e: reqwest::Error) -> BackendError {
    if e.is_timeout() {
        BackendError::Timeout
    } else {
        BackendError::Unavailable(format!("{url}: {e}"))
    }
}

impl Backend for HttpBackend {
    fn info(&self) -> BackendInfo {
        BackendInfo { name: "http".into(), version: self.config.base_url.clone() }
    }

    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse> {
        self.call("/v1/caption", req)
    }

    fn text2mask(&self, req: &Text2MaskRequest) -> Result<Text2MaskResponse> {
        self.call("/v1/text2mask", req)
    }

    fn mask2img(&self, req: &Mask2ImgRequest) -> Result<Mask2ImgResponse> {
        self.call("/v1/mask2img", req)
    }
}
