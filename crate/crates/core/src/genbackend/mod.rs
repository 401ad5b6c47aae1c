//! Generator wire protocol and backends.
//!
//! Three request types cover the generative services the pipeline depends on:
//! image captioning, text-to-color-map sampling and color-map-conditioned
//! image sampling. They travel as JSON envelopes over HTTP with PNG payloads
//! base64-encoded. [`MockBackend`] implements all three deterministically so
//! the pipeline runs end to end without any model.

mod client;
mod mock;
mod ops;
mod protocol;
mod server;
mod stub;

pub use client::{HttpBackend, HttpBackendConfig, ENV_BACKEND_RETRIES, ENV_BACKEND_TIMEOUT_SECS, ENV_BACKEND_URL};
pub use mock::{MockBackend, MockConfig, DEFAULT_MAX_MOCK_CATEGORIES};
pub use ops::{caption, mask2img, text2mask, SamplingOptions};
pub(crate) use ops::mask2img_png;
pub use protocol::{
    BackendInfo, CaptionRequest, CaptionResponse, ErrorBody, ErrorEnvelope, Mask2ImgRequest, Mask2ImgResponse,
    Text2MaskRequest, Text2MaskResponse, CAPTION_PROMPT, DEFAULT_RESOLUTION, MASK2IMG_STEPS, TEXT2MASK_STEPS,
};
pub use server::{mock_serve, serve, MockServerHandle};
pub use stub::StubBackend;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend request timed out")]
    Timeout,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot bind: {0}")]
    Bind(String),
}

impl BackendError {
    /// Stable machine-readable kind used in error envelopes.
    pub fn kind(&self) -> &'static str {
        match self {
            BackendError::Unavailable(_) => "unavailable",
            BackendError::Protocol(_) => "protocol",
            BackendError::Timeout => "timeout",
            BackendError::Shape(_) => "shape",
            BackendError::InvalidRequest(_) => "invalid_request",
            BackendError::Bind(_) => "bind",
        }
    }

    pub(crate) fn from_envelope(kind: &str, message: String) -> Self {
        match kind {
            "unavailable" => BackendError::Unavailable(message),
            "timeout" => BackendError::Timeout,
            "shape" => BackendError::Shape(message),
            "invalid_request" => BackendError::InvalidRequest(message),
            _ => BackendError::Protocol(message),
        }
    }
}

pub type Result<T, E = BackendError> = std::result::Result<T, E>;

/// A generator service speaking the three request types.
pub trait Backend: Send + Sync {
    fn info(&self) -> BackendInfo;
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse>;
    fn text2mask(&self, req: &Text2MaskRequest) -> Result<Text2MaskResponse>;
    fn mask2img(&self, req: &Mask2ImgRequest) -> Result<Mask2ImgResponse>;
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn info(&self) -> BackendInfo {
        (**self).info()
    }
    fn caption(&self, req: &CaptionRequest) -> Result<CaptionResponse> {
        (**self).caption(req)
    }
    fn text2mask(&self, req: &Text2MaskRequest) -> Result<Text2MaskResponse> {
        (**self).text2mask(req)
    }
    fn mask2img(&self, req: &Mask2ImgRequest) -> Result<Mask2ImgResponse> {
        (**self).mask2img(req)
    }
}
