//! White-box gradient attributions, kept as comparison baselines.
//!
//! Inside a region the gradient of `ln(y_c / y_c')` is the weight difference
//! of the pair, so all three variants reduce to closed forms over the
//! region's decision features; the integrated variant averages them along a
//! straight path from a baseline point, crossing regions as it goes.

use super::DecisionFeatures;
use crate::error::{Error, Result};
use crate::model::{ground_truth_decision_features, Instance, Model};

#[derive(Debug, Clone, PartialEq)]
pub enum GradientVariant {
    /// Absolute gradient: unsigned importance.
    Saliency,
    /// Gradient times the input, feature-wise.
    GradTimesInput,
    /// Mean gradient along the straight path from `baseline` (zero vector by
    /// default) to the instance, midpoint rule over `steps` segments, times
    /// the input-minus-baseline difference.
    Integrated {
        baseline: Option<Vec<f64>>,
        steps: usize,
    },
}

impl GradientVariant {
    pub fn integrated_default() -> Self {
        GradientVariant::Integrated {
            baseline: None,
            steps: 300,
        }
    }
}

/// Evaluates a gradient attribution with full oracle access. These methods
/// are not reachable through a [`crate::api::PredictionApi`].
pub fn gradient_baseline(
    model: &Model,
    x0: &Instance,
    class: usize,
    variant: &GradientVariant,
) -> Result<DecisionFeatures> {
    let d = model.input_dim();
    assert!(class < model.class_count(), "class index out of range");

    match variant {
        GradientVariant::Saliency => {
            let mut df = ground_truth_decision_features(&model.local_form(x0)?, class);
            for w in &mut df.weights {
                *w = w.abs();
            }
            Ok(df)
        }
        GradientVariant::GradTimesInput => {
            let mut df = ground_truth_decision_features(&model.local_form(x0)?, class);
            for (w, x) in df.weights.iter_mut().zip(x0.values()) {
                *w *= x;
            }
            Ok(df)
        }
        GradientVariant::Integrated { baseline, steps } => {
            assert!(*steps >= 1, "need at least one path segment");
            let base = match baseline {
                Some(b) => {
                    if b.len() != d {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            got: b.len(),
                        });
                    }
                    b.clone()
                }
                None => vec![0.0; d],
            };
            let mut acc = vec![0.0; d];
            for t in 0..*steps {
                let alpha = (t as f64 + 0.5) / *steps as f64;
                let point: Vec<f64> = base
                    .iter()
                    .zip(x0.values())
                    .map(|(b, x)| b + alpha * (x - b))
                    .collect();
                let form = local_form_jittered(model, point)?;
                let df = ground_truth_decision_features(&form, class);
                for (slot, w) in acc.iter_mut().zip(&df.weights) {
                    *slot += w;
                }
            }
            let scale = 1.0 / *steps as f64;
            let weights = acc
                .iter()
                .zip(x0.values().iter().zip(&base))
                .map(|(a, (x, b))| a * scale * (x - b))
                .collect();
            Ok(DecisionFeatures { class, weights })
        }
    }
}

/// Oracle lookup that nudges a path point off a region boundary instead of
/// failing: the offsets are deterministic so repeated runs agree.
fn local_form_jittered(model: &Model, point: Vec<f64>) -> Result<crate::model::LocalLinearForm> {
    const OFFSETS: [f64; 4] = [0.0, 1e-9, -1e-9, 2e-9];
    let mut last = Error::Boundary;
    for (attempt, offset) in OFFSETS.iter().enumerate() {
        let candidate: Vec<f64> = point.iter().map(|v| v + offset).collect();
        match model.local_form(&Instance::new(candidate)?) {
            Ok(form) => {
                if attempt > 0 {
                    log::debug!("path step jittered by {offset:e} off a region boundary");
                }
                return Ok(form);
            }
            Err(Error::Boundary) => last = Error::Boundary,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}
