//! Interpretation methods.
//!
//! Every method here answers the same question — which features drive the
//! model's prediction of class `c` at `x0` — and returns the same shape of
//! answer, a [`DecisionFeatures`] vector. They differ in what they need and
//! what they guarantee:
//!
//! - [`openapi_interpret`] queries only the API and is exact with
//!   probability one: it accepts a sample only after an overdetermined
//!   consistency check certifies it, shrinking the sampling hypercube until
//!   that happens.
//! - [`naive_interpret`] solves determined systems at a fixed radius with no
//!   verification; exact only in the ideal case where every sample shares
//!   the query's region.
//! - [`zoo_interpret`] estimates the log-odds gradient with symmetric
//!   difference quotients.
//! - [`lime_interpret`] fits the log-odds of hypercube samples by plain or
//!   ridge least squares.
//! - [`gradient_baseline`] holds the white-box oracle and evaluates the
//!   classic gradient attributions (comparison baselines, not API methods).

mod gradients;
mod lime;
mod naive;
mod openapi;
mod zoo;

pub use gradients::{gradient_baseline, GradientVariant};
pub use lime::{lime_interpret, Regularization};
pub use naive::naive_interpret;
pub use openapi::{openapi_interpret, OpenApiOptions, OpenApiResult};
pub use zoo::zoo_interpret;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Instance, Prediction};

/// Instances predicted with any class probability above this threshold are
/// excluded from interpretation: the saturated softmax leaves too little
/// log-odds information.
pub const SATURATION_THRESHOLD: f64 = 0.9999;

/// Per-feature signed importance of predicting class `class`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFeatures {
    pub class: usize,
    pub weights: Vec<f64>,
}

impl DecisionFeatures {
    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// The hypercube sample behind an interpretation: `points` all satisfy
/// `|p_i - center_i| <= radius` per coordinate.
#[derive(Debug, Clone)]
pub struct SampleCloud {
    pub center: Instance,
    pub radius: f64,
    pub points: Vec<Instance>,
}

/// Draws `count` points independently and uniformly from the hypercube of
/// half-width `radius` around `center`. Points are not clipped to any data
/// domain: models are defined on all of R^d.
pub fn sample_in_cube(
    center: &Instance,
    radius: f64,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Instance> {
    (0..count)
        .map(|_| {
            let values = center
                .values()
                .iter()
                .map(|&c| c + radius * (2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            Instance::new(values).expect("finite center and radius")
        })
        .collect()
}

/// Rejects predictions whose top probability exceeds the saturation
/// threshold.
pub fn ensure_unsaturated(y: &Prediction, context: &str) -> Result<()> {
    let top = y.max_prob();
    if top > SATURATION_THRESHOLD {
        return Err(Error::Saturated {
            context: format!("{context}: probability {top} > {SATURATION_THRESHOLD}"),
        });
    }
    Ok(())
}

/// Averages per-pair weight differences over all `c' != class`: the
/// one-vs-rest aggregation shared by every method.
pub(crate) fn average_pairwise(
    pairwise: &[Vec<f64>],
    class: usize,
    dim: usize,
) -> DecisionFeatures {
    let mut weights = vec![0.0; dim];
    for diff in pairwise {
        for (slot, v) in weights.iter_mut().zip(diff) {
            *slot += v;
        }
    }
    let scale = 1.0 / pairwise.len() as f64;
    for w in &mut weights {
        *w *= scale;
    }
    DecisionFeatures { class, weights }
}

#[cfg(test)]
pub(crate) mod test_support {
    use crate::model::{LocalLinearForm, Model, ModelTree, RegionId, TreeNode};
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    /// Depth-1 tree over d=2, split on feature 0 at 0.5, with clearly
    /// different leaf classifiers. Shared by the interpreter tests.
    pub(crate) fn split_tree() -> Arc<Model> {
        let left = LocalLinearForm::new(
            RegionId::Leaf(0),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::zeros(2),
        )
        .unwrap();
        let right = LocalLinearForm::new(
            RegionId::Leaf(1),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.3, -0.7]),
            DVector::from_column_slice(&[0.2, -0.1]),
        )
        .unwrap();
        let root = TreeNode::Split {
            feature: 0,
            threshold: 0.5,
            left: Box::new(TreeNode::Leaf { form: left }),
            right: Box::new(TreeNode::Leaf { form: right }),
        };
        Arc::new(Model::Tree(ModelTree::new(2, 2, root).unwrap()))
    }
}
