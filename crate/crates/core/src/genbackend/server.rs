//! HTTP endpoint serving any [`Backend`] over the wire protocol.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::sync::oneshot;

use super::protocol::*;
use super::{Backend, BackendError, MockBackend};

type Shared = Arc<dyn Backend>;

/// A running server; dropping it shuts the server down.
pub struct MockServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    runtime: Option<tokio::runtime::Runtime>,
    done: Option<tokio::task::JoinHandle<()>>,
}

impl MockServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let (Some(rt), Some(done)) = (self.runtime.as_ref(), self.done.take()) {
            let _ = rt.block_on(done);
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let (Some(rt), Some(done)) = (self.runtime.as_ref(), self.done.take()) {
            let _ = rt.block_on(done);
        }
        if let Some(rt) = self.runtime.take() {
            rt.shutdown_background();
        }
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves the deterministic mock on `addr` (port 0 picks a free port).
pub fn mock_serve(addr: SocketAddr, mock: MockBackend) -> Result<MockServerHandle, BackendError> {
    serve(addr, Arc::new(mock))
}

pub fn serve(addr: SocketAddr, backend: Shared) -> Result<MockServerHandle, BackendError> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_io()
        .build()
        .map_err(|e| BackendError::Bind(e.to_string()))?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind(addr))
        .map_err(|e| BackendError::Bind(format!("{addr}: {e}")))?;
    let addr = listener.local_addr().map_err(|e| BackendError::Bind(e.to_string()))?;
    let app = Router::new()
        .route("/v1/info", get(info))
        .route("/v1/caption", post(caption))
        .route("/v1/text2mask", post(text2mask))
        .route("/v1/mask2img", post(mask2img))
        .with_state(backend);
    let (tx, rx) = oneshot::channel::<()>();
    let done = runtime.spawn(async move {
        let served = axum::serve(listener, app).with_graceful_shutdown(async {
            let _ = rx.await;
        });
        if let Err(e) = served.await {
            tracing::error!(error = %e, "server stopped with error");
        }
    });
    tracing::info!(%addr, "generator backend listening");
    Ok(MockServerHandle { addr, shutdown: Some(tx), runtime: Some(runtime), done: Some(done) })
}

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    let bytes = serde_json::to_vec(body).expect("response serializes");
    (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

fn error_response(err: &BackendError) -> Response {
    let status = match err {
        BackendError::Protocol(_) => StatusCode::BAD_REQUEST,
        BackendError::InvalidRequest(_) => StatusCode::UNPROCESSABLE_ENTITY,
        BackendError::Timeout => StatusCode::GATEWAY_TIMEOUT,
        BackendError::Unavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
        BackendError::Shape(_) | BackendError::Bind(_) => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let body = ErrorEnvelope { error: ErrorBody { kind: err.kind().into(), message: err.to_string() } };
    json_response(status, &body)
}

async fn handle<Req, Resp, F>(backend: Shared, body: Bytes, call: F) -> Response
where
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
    F: FnOnce(&dyn Backend, &Req) -> Result<Resp, BackendError> + Send + 'static,
{
    let req: Req = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error_response(&BackendError::Protocol(format!("malformed request: {e}"))),
    };
    match tokio::task::spawn_blocking(move || call(backend.as_ref(), &req)).await {
        Ok(Ok(resp)) => json_response(StatusCode::OK, &resp),
        Ok(Err(e)) => error_response(&e),
        Err(e) => error_response(&BackendError::Unavailable(format!("handler failed: {e}"))),
    }
}

async fn info(State(backend): State<Shared>) -> Response {
    json_response(StatusCode::OK, &backend.info())
}

async fn caption(State(backend): State<Shared>, body: Bytes) -> Response {
    handle(backend, body, |b, r: &CaptionRequest| b.caption(r)).await
}

async fn text2mask(State(backend): State<Shared>, body: Bytes) -> Response {
    handle(backend, body, |b, r: &Text2MaskRequest| b.text2mask(r)).await
}

async fn mask2img(State(backend): State<Shared>, body: Bytes) -> Response {
    handle(backend, body, |b, r: &Mask2ImgRequest| b.mask2img(r)).await
}
