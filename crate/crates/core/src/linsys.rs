//! Linear equation systems over log-odds.
//!
//! Inside one locally linear region, the log-odds of two classes is an
//! affine function of the input: `ln(y_c / y_c') = D^T x + B`, where `D` is
//! the weight-difference vector of the two classes and `B` their bias
//! difference — the core parameters of the region for that class pair. Each
//! queried `(instance, prediction)` tuple therefore yields one linear
//! equation in the d+1 unknowns `(B, D)`.
//!
//! A square system of d+1 equations pins the parameters down but cannot be
//! verified. A system of d+2 equations is overdetermined: if it is
//! consistent, all its tuples share one set of core parameters, and the
//! solution is exact with probability one. Consistency is decided the way
//! the uniqueness argument is built: solve the square subsystem of the first
//! d+1 rows and substitute the solution into the last row.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Instance, Prediction};

/// Smallest probability that still enters a log-odds computation; anything
/// below signals softmax saturation and the caller should skip or resample.
pub const MIN_PROBABILITY: f64 = 1e-300;

/// Core parameters of a locally linear classifier for one class pair: the
/// weight-difference vector `D` and the bias difference `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreParams {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl CoreParams {
    /// L1 distance between the weight-difference vectors.
    pub fn weights_l1_gap(&self, other: &CoreParams) -> f64 {
        self.weights
            .iter()
            .zip(other.weights.iter())
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// `ln(y_c) - ln(y_c')`, computed as a difference of logs so the ratio can
/// not overflow.
pub fn log_odds(y: &Prediction, c: usize, c_other: usize) -> Result<f64> {
    assert!(c != c_other, "log-odds of a class against itself");
    let (yc, yo) = (y.prob(c), y.prob(c_other));
    if yc < MIN_PROBABILITY || yo < MIN_PROBABILITY {
        return Err(Error::Saturated {
            context: format!("probability underflow for class pair ({c}, {c_other})"),
        });
    }
    Ok(yc.ln() - yo.ln())
}

/// One log-odds equation: returns the coefficient row `[1, x_1, ..., x_d]`
/// (the leading 1 multiplies `B`) and the right-hand side `ln(y_c / y_c')`.
pub fn make_equation(
    x: &Instance,
    y: &Prediction,
    c: usize,
    c_other: usize,
) -> Result<(Vec<f64>, f64)> {
    let rhs = log_odds(y, c, c_other)?;
    let mut row = Vec::with_capacity(x.dim() + 1);
    row.push(1.0);
    row.extend_from_slice(x.values());
    Ok((row, rhs))
}

/// A stack of log-odds equations for one class pair.
#[derive(Debug, Clone)]
pub struct EquationSystem {
    class_pair: (usize, usize),
    rows: Vec<(Instance, f64)>,
}

impl EquationSystem {
    pub fn new(c: usize, c_other: usize) -> Self {
        assert!(c != c_other, "class pair must be distinct");
        Self {
            class_pair: (c, c_other),
            rows: Vec::new(),
        }
    }

    /// Builds one system from queried tuples, one row per tuple in order.
    pub fn from_tuples(
        tuples: &[(Instance, Prediction)],
        c: usize,
        c_other: usize,
    ) -> Result<Self> {
        let mut system = Self::new(c, c_other);
        for (x, y) in tuples {
            system.push(x, y)?;
        }
        Ok(system)
    }

    /// Appends the equation derived from one tuple.
    pub fn push(&mut self, x: &Instance, y: &Prediction) -> Result<()> {
        let rhs = log_odds(y, self.class_pair.0, self.class_pair.1)?;
        self.push_row(x.clone(), rhs);
        Ok(())
    }

    /// Appends a raw `(instance, rhs)` row. Useful for synthetic systems.
    pub fn push_row(&mut self, x: Instance, rhs: f64) {
        if let Some((first, _)) = self.rows.first() {
            assert_eq!(first.dim(), x.dim(), "mixed instance dimensions");
        }
        self.rows.push((x, rhs));
    }

    pub fn class_pair(&self) -> (usize, usize) {
        self.class_pair
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.rows.first().map_or(0, |(x, _)| x.dim())
    }

    pub fn rows(&self) -> &[(Instance, f64)] {
        &self.rows
    }

    fn matrix(&self, take: usize) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.input_dim();
        let a = DMatrix::from_fn(take, d + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                self.rows[i].0.values()[j - 1]
            }
        });
        let b = DVector::from_fn(take, |i, _| self.rows[i].1);
        (a, b)
    }
}

/// Numerical thresholds for the solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Relative residual under which an overdetermined system counts as
    /// consistent ("has a solution").
    pub residual_rtol: f64,
    /// A square system is singular when its smallest singular value drops
    /// below this fraction of the largest.
    pub rank_rtol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            residual_rtol: 1e-6,
            rank_rtol: 1e-10,
        }
    }
}

/// Solution of a determined system, with the condition number of its
/// coefficient matrix (tiny sampling radii make it observable).
#[derive(Debug, Clone)]
pub struct DeterminedSolution {
    pub params: CoreParams,
    pub condition: f64,
}

/// Solves the square system of d+1 equations in `(B, D)`.
pub fn solve_determined(
    system: &EquationSystem,
    opts: &SolveOptions,
) -> Result<DeterminedSolution> {
    let d = system.input_dim();
    assert_eq!(
        system.len(),
        d + 1,
        "determined system needs exactly d+1 rows"
    );
    let (a, b) = system.matrix(d + 1);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if smin < opts.rank_rtol * smax {
        return Err(Error::SingularSystem { condition });
    }
    let beta = svd
        .solve(&b, 0.0)
        .map_err(|_| Error::SingularSystem { condition })?;
    Ok(DeterminedSolution {
        params: CoreParams {
            weights: beta.as_slice()[1..].to_vec(),
            bias: beta[0],
        },
        condition,
    })
}

/// Outcome of the overdetermined consistency check.
#[derive(Debug, Clone)]
pub enum Consistency {
    /// The system has a solution; by the uniqueness argument it is exact
    /// with probability one.
    Consistent(DeterminedSolution),
    /// The substituted row disagrees with the subsystem solution: at least
    /// one tuple came from a different region.
    Inconsistent { residual: f64 },
    /// The square subsystem was numerically singular; treated as
    /// no-solution so the caller resamples.
    SingularSubsystem,
}

impl Consistency {
    pub fn into_params(self) -> Option<CoreParams> {
        match self {
            Consistency::Consistent(sol) => Some(sol.params),
            _ => None,
        }
    }
}

/// Decides whether a system of d+2 equations has a solution: solve the
/// square subsystem of the first d+1 rows, substitute into the last row, and
/// accept when the relative residual stays under `opts.residual_rtol`.
pub fn check_overdetermined(system: &EquationSystem, opts: &SolveOptions) -> Consistency {
    let d = system.input_dim();
    assert_eq!(
        system.len(),
        d + 2,
        "overdetermined system needs exactly d+2 rows"
    );
    let mut subsystem = system.clone();
    let (last_x, last_rhs) = subsystem.rows.pop().expect("d+2 rows");
    let solution = match solve_determined(&subsystem, opts) {
        Ok(sol) => sol,
        Err(Error::SingularSystem { condition }) => {
            log::debug!(
                "singular subsystem for pair {:?} (condition {condition:.3e}); resampling",
                system.class_pair()
            );
            return Consistency::SingularSubsystem;
        }
        Err(_) => unreachable!("square solve only fails as singular"),
    };
    let predicted = solution.params.bias
        + solution
            .params
            .weights
            .iter()
            .zip(last_x.values())
            .map(|(w, x)| w * x)
            .sum::<f64>();
    let residual = (predicted - last_rhs).abs();
    if residual <= opts.residual_rtol * last_rhs.abs().max(1.0) {
        Consistency::Consistent(solution)
    } else {
        Consistency::Inconsistent { residual }
    }
}
