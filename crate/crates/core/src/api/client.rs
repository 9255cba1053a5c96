//! HTTP client side of the prediction protocol.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{PredictionApi, QueryLedger};
use crate::error::{Error, Result};
use crate::model::{Instance, Prediction};

#[derive(Serialize)]
struct PredictBody<'a> {
    x: &'a [f64],
}

#[derive(Deserialize)]
struct PredictReply {
    y: Vec<f64>,
}

#[derive(Deserialize)]
struct MetaReply {
    d: usize,
    #[serde(rename = "C")]
    classes: usize,
}

#[derive(Deserialize)]
struct ErrorReply {
    error: String,
}

/// Remote prediction API speaking the `/predict` + `/meta` protocol.
pub struct HttpApi {
    base: String,
    client: reqwest::blocking::Client,
    input_dim: usize,
    class_count: usize,
    ledger: Arc<QueryLedger>,
}

/// Connects to a served model: fetches `/meta` once and returns an API
/// handle whose every `predict` performs one `POST /predict`.
pub fn connect_http(endpoint: &str) -> Result<HttpApi> {
    let base = endpoint.trim_end_matches('/').to_string();
    let client = reqwest::blocking::Client::new();
    let response = client
        .get(format!("{base}/meta"))
        .send()
        .map_err(transport)?;
    if !response.status().is_success() {
        return Err(Error::Protocol(format!(
            "GET /meta returned {}",
            response.status()
        )));
    }
    let meta: MetaReply = response
        .json()
        .map_err(|e| Error::Protocol(format!("bad /meta body: {e}")))?;
    Ok(HttpApi {
        base,
        client,
        input_dim: meta.d,
        class_count: meta.classes,
        ledger: Arc::new(QueryLedger::unlimited()),
    })
}

impl HttpApi {
    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }
}

fn transport(e: reqwest::Error) -> Error {
    Error::Transport(e.to_string())
}

impl PredictionApi for HttpApi {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn predict(&self, x: &Instance) -> Result<Prediction> {
        if x.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.dim(),
            });
        }
        self.ledger.record()?;
        let response = self
            .client
            .post(format!("{}/predict", self.base))
            .json(&PredictBody { x: x.values() })
            .send()
            .map_err(transport)?;
        let status = response.status();
        if !status.is_success() {
            let code = response
                .json::<ErrorReply>()
                .map(|e| e.error)
                .unwrap_or_else(|_| "UNKNOWN".into());
            return Err(Error::Protocol(format!(
                "POST /predict returned {status}: {code}"
            )));
        }
        let reply: PredictReply = response
            .json()
            .map_err(|e| Error::Protocol(format!("bad /predict body: {e}")))?;
        if reply.y.len() != self.class_count {
            return Err(Error::Protocol(format!(
                "expected {} probabilities, got {}",
                self.class_count,
                reply.y.len()
            )));
        }
        Prediction::new(reply.y)
    }
}
