//! A determined-system interpretation at a fixed radius, kept as the
//! cautionary baseline: it solves but never verifies, so any sample from a
//! foreign region silently corrupts the answer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{average_pairwise, ensure_unsaturated, sample_in_cube, DecisionFeatures};
use crate::api::PredictionApi;
use crate::error::Result;
use crate::linsys::{solve_determined, EquationSystem, SolveOptions};
use crate::model::Instance;

/// Samples d points once in the hypercube of half-width `radius`, solves the
/// C-1 determined systems, and averages. No solvability verification, no
/// retry.
pub fn naive_interpret(
    api: &dyn PredictionApi,
    x0: &Instance,
    class: usize,
    radius: f64,
    seed: u64,
) -> Result<DecisionFeatures> {
    let d = api.input_dim();
    let classes = api.class_count();
    assert!(class < classes, "class index out of range");
    assert!(radius > 0.0, "radius must be positive");

    let y0 = api.predict(x0)?;
    ensure_unsaturated(&y0, "query instance")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tuples = Vec::with_capacity(d + 1);
    tuples.push((x0.clone(), y0));
    for p in sample_in_cube(x0, radius, d, &mut rng) {
        let y = api.predict(&p)?;
        tuples.push((p, y));
    }

    let opts = SolveOptions::default();
    let mut pairwise = Vec::with_capacity(classes - 1);
    for c_other in (0..classes).filter(|&c| c != class) {
        let system = EquationSystem::from_tuples(&tuples, class, c_other)?;
        pairwise.push(solve_determined(&system, &opts)?.params.weights);
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
    fn ideal_case_matches_the_oracle() {
        // Globally linear region: any radius keeps the ideal case intact.
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.25, 0.5]).unwrap();
        let oracle = ground_truth_decision_features(&model.local_form(&x0).unwrap(), 0);
        // Radius small enough to stay inside the left leaf.
        let features = naive_interpret(&api, &x0, 0, 1e-4, 11).unwrap();
        assert!(l1_exactness(&features, &oracle).unwrap() < 1e-8);
    }

    #[test]
    fn boundary_proximate_large_radius_is_usually_wrong() {
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.49, 0.5]).unwrap();
        let oracle = ground_truth_decision_features(&model.local_form(&x0).unwrap(), 0);
        let mut wrong = 0;
        for seed in 0..200 {
            let features = naive_interpret(&api, &x0, 0, 0.5, seed).unwrap();
            if l1_exactness(&features, &oracle).unwrap() > 1e-3 {
                wrong += 1;
            }
        }
        // d=2 leaves a sizable chance that both samples stay in-region, so
        // only a loose majority is guaranteed here; the acceptance suite
        // pins the >= 99% figure at d=10.
        assert!(wrong > 120, "only {wrong}/200 trials went wrong");
    }

    #[test]
    fn tiny_radius_restores_the_ideal_case() {
        let model = split_tree();
        let api = wrap_in_process(Arc::clone(&model));
        let x0 = Instance::new(vec![0.49, 0.5]).unwrap();
        let oracle = ground_truth_decision_features(&model.local_form(&x0).unwrap(), 0);
        for seed in 0..20 {
            let features = naive_interpret(&api, &x0, 0, 1e-4, seed).unwrap();
            assert!(l1_exactness(&features, &oracle).unwrap() < 1e-6);
        }
    }
}
