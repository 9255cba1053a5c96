//! Zeroth-order baseline: symmetric difference quotients of the log-odds.
//!
//! Within one region the log-odds is affine, so the central difference
//! recovers each weight exactly — until a probe pair straddles a region
//! boundary, or the perturbation shrinks into floating-point cancellation.

use super::{average_pairwise, ensure_unsaturated, DecisionFeatures};
use crate::api::PredictionApi;
use crate::error::Result;
use crate::linsys::log_odds;
use crate::model::{Instance, Prediction};

/// Estimates the decision features by perturbing `x0` back and forth along
/// every axis with distance `h` and differencing the log-odds: 2d probe
/// queries plus the query-instance prediction.
pub fn zoo_interpret(
    api: &dyn PredictionApi,
    x0: &Instance,
    class: usize,
    h: f64,
) -> Result<DecisionFeatures> {
    let d = api.input_dim();
    let classes = api.class_count();
    assert!(class < classes, "class index out of range");
    assert!(h > 0.0, "perturbation distance must be positive");

    let y0 = api.predict(x0)?;
    ensure_unsaturated(&y0, "query instance")?;

    let mut probes: Vec<(Prediction, Prediction)> = Vec::with_capacity(d);
    for axis in 0..d {
        let probe = |sign: f64, name: &str| -> Result<Prediction> {
            let mut values = x0.values().to_vec();
            values[axis] += sign * h;
            let y = api.predict(&Instance::new(values)?)?;
            ensure_unsaturated(&y, &format!("probe {name} on axis {axis}"))?;
            Ok(y)
        };
        let plus = probe(1.0, "+h")?;
        let minus = probe(-1.0, "-h")?;
        probes.push((plus, minus));
    }

    let mut pairwise = Vec::with_capacity(classes - 1);
    for c_other in (0..classes).filter(|&c| c != class) {
        let mut diff = Vec::with_capacity(d);
        for (plus, minus) in &probes {
            let quotient =
                (log_odds(plus, class, c_other)? - log_odds(minus, class, c_other)?) / (2.0 * h);
            diff.push(quotient);
        }
        pairwise.push(diff);
    }
    Ok(average_pairwise(&pairwise, class, d))
}
