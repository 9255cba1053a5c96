//! Evaluation metrics: sample-cloud quality (region and weight difference),
//! exactness (L1 distance), consistency (cosine similarity), and the ranked
//! feature-ablation protocol.

use crate::api::PredictionApi;
use crate::error::{Error, Result};
use crate::interpret::{ensure_unsaturated, DecisionFeatures, SampleCloud};
use crate::model::{Instance, Model, RegionId};

/// Region lookup that retries with deterministic nudges when the point sits
/// exactly on a boundary.
fn region_with_jitter(model: &Model, x: &Instance) -> Result<RegionId> {
    const OFFSETS: [f64; 4] = [0.0, 1e-9, -1e-9, 2e-9];
    for offset in OFFSETS {
        let candidate: Vec<f64> = x.values().iter().map(|v| v + offset).collect();
        match model.region_of(&Instance::new(candidate)?) {
            Ok(region) => return Ok(region),
            Err(Error::Boundary) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Boundary)
}

/// 0 when every point of the cloud shares the center's region, else 1.
pub fn region_difference(model: &Model, x0: &Instance, cloud: &SampleCloud) -> Result<u8> {
    let home = region_with_jitter(model, x0)?;
    for p in &cloud.points {
        if region_with_jitter(model, p)? != home {
            return Ok(1);
        }
    }
    Ok(0)
}

/// Mean L1 gap between the center's pairwise weight differences and each
/// sampled point's, averaged over the C-1 class pairs and the cloud size.
pub fn weight_difference(
    model: &Model,
    x0: &Instance,
    cloud: &SampleCloud,
    class: usize,
) -> Result<f64> {
    let form0 = model.local_form(x0)?;
    let classes = form0.class_count();
    assert!(class < classes, "class index out of range");
    let mut total = 0.0;
    for p in &cloud.points {
        let form = model.local_form(p)?;
        for c_other in (0..classes).filter(|&c| c != class) {
            let d0 = form0.weight_difference(class, c_other);
            let di = form.weight_difference(class, c_other);
            total += d0.iter().zip(&di).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
    }
    Ok(total / ((classes - 1) as f64 * cloud.points.len() as f64))
}

/// L1 distance between two feature vectors of equal dimension.
pub fn l1_exactness(a: &DecisionFeatures, b: &DecisionFeatures) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(a.weights
        .iter()
        .zip(&b.weights)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Cosine similarity between two feature vectors; zero vectors are an error.
pub fn cosine_consistency(a: &DecisionFeatures, b: &DecisionFeatures) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let dot: f64 = a.weights.iter().zip(&b.weights).map(|(x, y)| x * y).sum();
    let na: f64 = a.weights.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.weights.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(dot / (na * nb))
}

/// One step of the ablation protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationStep {
    /// Absolute change of the class-c probability after altering the t
    /// highest-ranked features.
    pub cpp: f64,
    /// Whether the predicted label differs from the original.
    pub label_changed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCurve {
    pub steps: Vec<AblationStep>,
}

/// Ranking used by the ablation protocol: descending absolute weight, ties
/// broken by ascending feature index (zero weights therefore come last, in
/// index order).
pub fn ablation_order(features: &DecisionFeatures) -> Vec<usize> {
    let mut order: Vec<usize> = (0..features.dim()).collect();
    order.sort_by(|&i, &j| {
        features.weights[j]
            .abs()
            .partial_cmp(&features.weights[i].abs())
            .unwrap()
            .then(i.cmp(&j))
    });
    order
}

/// Runs the ablation protocol with the canonical ranking; see
/// [`ablation_curve_with_order`].
pub fn ablation_curve(
    api: &dyn PredictionApi,
    x0: &Instance,
    features: &DecisionFeatures,
    max_steps: usize,
) -> Result<AblationCurve> {
    ablation_curve_with_order(api, x0, features, &ablation_order(features), max_steps)
}

/// Cumulatively replaces features in the given order — positive weights by
/// 0, negative (and exactly-zero) weights by 0 or 1 per their sign — and
/// records the probability change and label flips after every step. The
/// interpreted class is the argmax prediction at `x0`.
pub fn ablation_curve_with_order(
    api: &dyn PredictionApi,
    x0: &Instance,
    features: &DecisionFeatures,
    order: &[usize],
    max_steps: usize,
) -> Result<AblationCurve> {
    let d = api.input_dim();
    if features.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: features.dim(),
        });
    }
    let y0 = api.predict(x0)?;
    ensure_unsaturated(&y0, "ablation instance")?;
    let class = y0.argmax();
    let base_prob = y0.prob(class);

    let mut altered = x0.values().to_vec();
    let mut steps = Vec::new();
    for &feature in order.iter().take(max_steps.min(d)) {
        altered[feature] = if features.weights[feature] > 0.0 {
            0.0
        } else if features.weights[feature] < 0.0 {
            1.0
        } else {
            0.0
        };
        let y = api.predict(&Instance::new(altered.clone())?)?;
        steps.push(AblationStep {
            cpp: (base_prob - y.prob(class)).abs(),
            label_changed: y.argmax() != class,
        });
    }
    Ok(AblationCurve { steps })
}

/// Number of curves whose label changed at the given 1-based step.
pub fn nlci(curves: &[AblationCurve], step: usize) -> usize {
    assert!(step >= 1, "steps are 1-based");
    curves
        .iter()
        .filter(|c| c.steps.get(step - 1).is_some_and(|s| s.label_changed))
        .count()
}
