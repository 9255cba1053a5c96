//! The query-only boundary between interpreters and models.
//!
//! Interpreters see a [`PredictionApi`]: one `predict` call plus the declared
//! dimensions. No parameters, gradients, or region identifiers are reachable
//! through it; evaluation code that needs the white-box oracle receives the
//! [`crate::model::Model`] separately and explicitly.

mod client;
mod server;

pub use client::{connect_http, HttpApi};
pub use server::{serve_http, HttpServer};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Instance, Model, Prediction};

/// A deterministic, parameter-hiding prediction interface.
pub trait PredictionApi: Send + Sync {
    fn input_dim(&self) -> usize;
    fn class_count(&self) -> usize;
    fn predict(&self, x: &Instance) -> Result<Prediction>;
}

/// Counts predict calls; optionally enforces a hard budget.
#[derive(Debug)]
pub struct QueryLedger {
    count: AtomicU64,
    budget: Option<u64>,
}

impl QueryLedger {
    pub fn unlimited() -> Self {
        Self {
            count: AtomicU64::new(0),
            budget: None,
        }
    }

    pub fn with_budget(budget: u64) -> Self {
        Self {
            count: AtomicU64::new(0),
            budget: Some(budget),
        }
    }

    /// Records one query. With a budget set, the count never exceeds it: the
    /// call that would cross the budget fails without incrementing.
    pub fn record(&self) -> Result<()> {
        match self.budget {
            None => {
                self.count.fetch_add(1, Ordering::Relaxed);
                Ok(())
            }
            Some(budget) => self
                .count
                .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |c| {
                    (c < budget).then_some(c + 1)
                })
                .map(|_| ())
                .map_err(|_| Error::BudgetExhausted { budget }),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

/// In-process adapter: predictions are the model's forward pass, and nothing
/// else of the model is reachable through the trait.
pub struct InProcessApi {
    model: Arc<Model>,
    ledger: Arc<QueryLedger>,
}

/// Wraps a model behind the prediction interface with unlimited queries.
pub fn wrap_in_process(model: Arc<Model>) -> InProcessApi {
    InProcessApi {
        model,
        ledger: Arc::new(QueryLedger::unlimited()),
    }
}

/// Wraps a model behind the prediction interface with a hard query budget.
pub fn wrap_with_budget(model: Arc<Model>, budget: u64) -> InProcessApi {
    InProcessApi {
        model,
        ledger: Arc::new(QueryLedger::with_budget(budget)),
    }
}

impl InProcessApi {
    pub fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }
}

impl PredictionApi for InProcessApi {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn class_count(&self) -> usize {
        self.model.class_count()
    }

    fn predict(&self, x: &Instance) -> Result<Prediction> {
        if x.dim() != self.model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.input_dim(),
                got: x.dim(),
            });
        }
        self.ledger.record()?;
        self.model.predict(x)
    }
}

/// Decorator that counts queries against a caller-owned ledger before
/// delegating. Used by the experiment runner to meter individual method
/// calls on a shared API.
pub struct Metered<'a> {
    inner: &'a dyn PredictionApi,
    ledger: QueryLedger,
}

impl<'a> Metered<'a> {
    pub fn new(inner: &'a dyn PredictionApi) -> Self {
        Self {
            inner,
            ledger: QueryLedger::unlimited(),
        }
    }

    pub fn count(&self) -> u64 {
        self.ledger.count()
    }
}

impl PredictionApi for Metered<'_> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }

    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    fn predict(&self, x: &Instance) -> Result<Prediction> {
        self.ledger.record()?;
        self.inner.predict(x)
    }
}
