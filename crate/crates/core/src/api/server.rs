//! HTTP face of a model: `POST /predict` and `GET /meta`.
//!
//! JSON numbers go through serde_json's shortest round-trip encoding, so the
//! wire never truncates an IEEE-754 double.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::model::{Instance, Model};

#[derive(Deserialize)]
struct PredictBody {
    x: Vec<f64>,
}

#[derive(Serialize)]
struct PredictReply {
    y: Vec<f64>,
}

#[derive(Serialize)]
struct MetaReply {
    d: usize,
    #[serde(rename = "C")]
    classes: usize,
}

#[derive(Serialize)]
struct ErrorReply {
    error: &'static str,
}

fn bad_request(code: &'static str) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorReply { error: code })).into_response()
}

async fn meta(State(model): State<Arc<Model>>) -> Response {
    Json(MetaReply {
        d: model.input_dim(),
        classes: model.class_count(),
    })
    .into_response()
}

async fn predict(
    State(model): State<Arc<Model>>,
    body: std::result::Result<Json<PredictBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(_) => return bad_request("BAD_JSON"),
    };
    if body.x.len() != model.input_dim() {
        return bad_request("DIM_MISMATCH");
    }
    if body.x.iter().any(|v| !v.is_finite()) {
        return bad_request("NON_FINITE");
    }
    let x = Instance::new(body.x).expect("finiteness checked");
    match model.predict(&x) {
        Ok(p) => Json(PredictReply {
            y: p.probs().to_vec(),
        })
        .into_response(),
        Err(e) => {
            log::error!("prediction failed: {e}");
            (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(ErrorReply { error: "INTERNAL" }),
            )
                .into_response()
        }
    }
}

/// A running prediction service. Shuts down gracefully on drop.
pub struct HttpServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl HttpServer {
    /// The bound address, useful when serving on port 0.
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for HttpServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves `model` over HTTP on `bind`, returning once the socket is bound.
///
/// Requests are handled concurrently; handlers share nothing but the
/// immutable model.
pub fn serve_http(model: Arc<Model>, bind: SocketAddr) -> Result<HttpServer> {
    let listener = std::net::TcpListener::bind(bind)?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;

    let router = Router::new()
        .route("/predict", post(predict))
        .route("/meta", get(meta))
        .with_state(model);

    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("plm-http-server".into())
        .spawn(move || {
            let runtime = match tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_io()
                .build()
            {
                Ok(rt) => rt,
                Err(e) => {
                    log::error!("failed to start server runtime: {e}");
                    return;
                }
            };
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("failed to adopt listener: {e}");
                        return;
                    }
                };
                let serve = axum::serve(listener, router).with_graceful_shutdown(async {
                    let _ = rx.await;
                });
                if let Err(e) = serve.await {
                    log::error!("server error: {e}");
                }
            });
        })
        .map_err(Error::Io)?;

    Ok(HttpServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
