//! Desk-scale piecewise linear models with a white-box oracle.
//!
//! A piecewise linear model (PLM) partitions the input space into finitely
//! many regions; inside each region the pre-softmax map is a single affine
//! function. Two families are provided: model trees whose leaves carry
//! multinomial logistic classifiers, and fully connected rectifier networks.
//! Both expose the same oracle: [`Model::local_form`] returns the affine
//! classifier `(W, b)` governing a given instance together with a region
//! identifier, so evaluation code can compare a black-box interpretation
//! against the exact ground truth.

mod relu;
mod tree;

pub mod io;

pub use relu::{build_relu_net, ReluLayer, ReluNet, ReluNetSpec};
pub use tree::{build_synthetic_plm, ModelTree, TreeNode};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::interpret::DecisionFeatures;

/// Absolute slack under which an instance counts as sitting on a region
/// boundary (a tree threshold or a hidden pre-activation at zero).
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// A d-dimensional input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    values: Vec<f64>,
}

impl Instance {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "instance",
            });
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Euclidean distance to another instance of the same dimension.
    pub fn distance(&self, other: &Instance) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Instance> for Vec<f64> {
    fn from(x: Instance) -> Self {
        x.values
    }
}

/// A C-dimensional probability vector produced by a model or an API.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    probs: Vec<f64>,
}

impl Prediction {
    /// Validates the simplex invariants: entries in (0, 1), summing to 1
    /// within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                got: probs.len(),
            });
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite {
                context: "prediction",
            });
        }
        if probs.iter().any(|&p| p <= 0.0 || p >= 1.0) {
            return Err(Error::Saturated {
                context: "probability outside (0, 1)".into(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.probs[class]
    }

    /// Index of the most probable class.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Largest class probability.
    pub fn max_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::MIN, f64::max)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &DVector<f64>) -> Result<Prediction> {
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Prediction::new(exps.iter().map(|e| e / sum).collect())
}

/// Identifies a locally linear region: a leaf of a model tree or the hidden
/// activation pattern of a rectifier network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionId {
    Leaf(usize),
    Activation(String),
}

impl std::fmt::Display for RegionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegionId::Leaf(id) => write!(f, "leaf:{id}"),
            RegionId::Activation(bits) => write!(f, "act:{bits}"),
        }
    }
}

/// The affine classifier `softmax(W^T x + b)` governing one region.
///
/// `weights` has d rows and C columns; column `c` holds the weight vector of
/// class `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLinearForm {
    pub region: RegionId,
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl LocalLinearForm {
    pub fn new(region: RegionId, weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.ncols() != bias.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.ncols(),
                got: bias.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite {
                context: "local linear form",
            });
        }
        Ok(Self {
            region,
            weights,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn class_count(&self) -> usize {
        self.weights.ncols()
    }

    /// Evaluates `softmax(W^T x + b)` at `x`.
    pub fn predict(&self, x: &Instance) -> Result<Prediction> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        let xv = DVector::from_column_slice(x.values());
        let logits = self.weights.transpose() * xv + &self.bias;
        softmax(&logits)
    }

    /// Weight-difference vector `W_c - W_{c'}` between two classes.
    pub fn weight_difference(&self, c: usize, c_other: usize) -> Vec<f64> {
        (0..self.input_dim())
            .map(|j| self.weights[(j, c)] - self.weights[(j, c_other)])
            .collect()
    }

    /// Bias difference `b_c - b_{c'}` between two classes.
    pub fn bias_difference(&self, c: usize, c_other: usize) -> f64 {
        self.bias[c] - self.bias[c_other]
    }
}

/// Decision features of class `c`: the average of the weight differences
/// `W_c - W_{c'}` over every other class `c'`.
pub fn ground_truth_decision_features(form: &LocalLinearForm, class: usize) -> DecisionFeatures {
    let d = form.input_dim();
    let c_total = form.class_count();
    assert!(class < c_total, "class index out of range");
    let mut acc = vec![0.0; d];
    for c_other in 0..c_total {
        if c_other == class {
            continue;
        }
        for (j, slot) in acc.iter_mut().enumerate() {
            *slot += form.weights[(j, class)] - form.weights[(j, c_other)];
        }
    }
    let scale = 1.0 / (c_total as f64 - 1.0);
    DecisionFeatures {
        class,
        weights: acc.into_iter().map(|v| v * scale).collect(),
    }
}

/// A piecewise linear model. Immutable after construction; prediction and
/// oracle extraction are read-only and safe to call from many threads.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Tree(ModelTree),
    Relu(ReluNet),
}

impl Model {
    pub fn input_dim(&self) -> usize {
        match self {
            Model::Tree(t) => t.input_dim(),
            Model::Relu(n) => n.input_dim(),
        }
    }

    pub fn class_count(&self) -> usize {
        match self {
            Model::Tree(t) => t.class_count(),
            Model::Relu(n) => n.class_count(),
        }
    }

    /// Forward pass: the prediction the API would expose.
    pub fn predict(&self, x: &Instance) -> Result<Prediction> {
        match self {
            Model::Tree(t) => t.predict(x),
            Model::Relu(n) => n.predict(x),
        }
    }

    /// White-box oracle: the affine classifier governing `x` and the identity
    /// of its region. Fails with [`Error::Boundary`] when `x` is within
    /// [`BOUNDARY_TOLERANCE`] of a region boundary.
    pub fn local_form(&self, x: &Instance) -> Result<LocalLinearForm> {
        match self {
            Model::Tree(t) => t.local_form(x),
            Model::Relu(n) => n.local_form(x),
        }
    }

    /// Region identifier of `x` (a pure function of `x` given the model).
    pub fn region_of(&self, x: &Instance) -> Result<RegionId> {
        Ok(self.local_form(x)?.region)
    }
}
