//! Surrogate-fit baseline: least-squares regression of the log-odds.
//!
//! Instead of the original formulation over predicted probabilities, the fit
//! targets `ln(y_c / y_c')`, which is affine inside a region, so the fitted
//! slopes approximate the weight differences directly. Plain least squares
//! and ridge regression (intercept unpenalized) are both available; ridge
//! shrinks the slopes toward zero and collapses to a constant fit when the
//! sampling radius is tiny.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{average_pairwise, sample_in_cube, DecisionFeatures};
use crate::api::PredictionApi;
use crate::error::{Error, Result};
use crate::linsys::{log_odds, MIN_PROBABILITY};
use crate::model::{Instance, Prediction};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    /// Ordinary least squares.
    None,
    /// Ridge penalty on the slopes with the given strength.
    Ridge(f64),
}

/// Fits intercept + slopes to the log-odds of `n_samples` hypercube samples
/// for every class pair and averages the slopes. Samples whose predictions
/// saturate are dropped; fewer than d+1 survivors is an error.
pub fn lime_interpret(
    api: &dyn PredictionApi,
    x0: &Instance,
    class: usize,
    radius: f64,
    n_samples: usize,
    regularization: Regularization,
    seed: u64,
) -> Result<DecisionFeatures> {
    let d = api.input_dim();
    let classes = api.class_count();
    assert!(class < classes, "class index out of range");
    assert!(radius > 0.0, "radius must be positive");
    if n_samples < d + 1 {
        return Err(Error::InsufficientSamples {
            needed: d + 1,
            got: n_samples,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<(Instance, Prediction)> = Vec::with_capacity(n_samples);
    for p in sample_in_cube(x0, radius, n_samples, &mut rng) {
        let y = api.predict(&p)?;
        if y.probs().iter().any(|&v| v < MIN_PROBABILITY) {
            continue; // saturated sample: drop
        }
        kept.push((p, y));
    }
    if kept.len() < d + 1 {
        return Err(Error::InsufficientSamples {
            needed: d + 1,
            got: kept.len(),
        });
    }

    let n = kept.len();
    let design = DMatrix::from_fn(n, d + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            kept[i].0.values()[j - 1]
        }
    });

    let mut pairwise = Vec::with_capacity(classes - 1);
    for c_other in (0..classes).filter(|&c| c != class) {
        let mut targets = DVector::zeros(n);
        for (i, (_, y)) in kept.iter().enumerate() {
            targets[i] = log_odds(y, class, c_other)?;
        }
        let beta = match regularization {
            Regularization::None => design
                .clone()
                .svd(true, true)
                .solve(&targets, 1e-12)
                .map_err(|_| Error::SingularSystem {
                    condition: f64::INFINITY,
                })?,
            Regularization::Ridge(lambda) => {
                let mut normal = design.transpose() * &design;
                for j in 1..=d {
                    normal[(j, j)] += lambda;
                }
                let rhs = design.transpose() * &targets;
                normal.lu().solve(&rhs).ok_or(Error::SingularSystem {
                    condition: f64::INFINITY,
                })?
            }
        };
        pairwise.push(beta.as_slice()[1..].to_vec());
    }
    Ok(average_pairwise(&pairwise, class, d))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::split_tree;
    use super::*;
    use crate::api::wrap_in_process;
    use crate::metrics::l1_exactness;
    use crate::model::ground_truth_decision_features;
    use std::sync::Arc;

    #[test]
    fn least_squares_on_linear_data_is_exact() {
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.25, 0.5]).unwrap();
        let oracle = ground_truth_decision_features(&model.local_form(&x0).unwrap(), 0);
        let features = lime_interpret(&api, &x0, 0, 1e-4, 3 * 3, Regularization::None, 5).unwrap();
        assert!(l1_exactness(&features, &oracle).unwrap() < 1e-6);
    }

    #[test]
    fn ridge_shrinks_slopes_toward_zero() {
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.25, 0.5]).unwrap();
        let oracle = ground_truth_decision_features(&model.local_form(&x0).unwrap(), 0);
        let plain = lime_interpret(&api, &x0, 0, 1e-4, 9, Regularization::None, 5).unwrap();
        let ridge = lime_interpret(&api, &x0, 0, 1e-4, 9, Regularization::Ridge(1.0), 5).unwrap();
        let err_plain = l1_exactness(&plain, &oracle).unwrap();
        let err_ridge = l1_exactness(&ridge, &oracle).unwrap();
        assert!(ridge.l1_norm() < 0.01 * oracle.l1_norm());
        assert!(err_ridge > 100.0 * err_plain);
    }

    #[test]
    fn straddling_samples_blend_the_two_regions() {
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.49, 0.5]).unwrap();
        // Radius 0.3 straddles the split at 0.5.
        let features = lime_interpret(&api, &x0, 0, 0.3, 60, Regularization::None, 8).unwrap();
        let left = model
            .local_form(&Instance::new(vec![0.25, 0.5]).unwrap())
            .unwrap();
        let right = model
            .local_form(&Instance::new(vec![0.75, 0.5]).unwrap())
            .unwrap();
        let d_left = left.weight_difference(0, 1)[0];
        let d_right = right.weight_difference(0, 1)[0];
        let crossed = features.weights[0];
        let (lo, hi) = if d_left < d_right {
            (d_left, d_right)
        } else {
            (d_right, d_left)
        };
        assert!(
            crossed > lo && crossed < hi,
            "blended slope {crossed} outside ({lo}, {hi})"
        );
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.25, 0.5]).unwrap();
        assert!(matches!(
            lime_interpret(&api, &x0, 0, 0.1, 2, Regularization::None, 1),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
