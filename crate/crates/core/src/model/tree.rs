//! Model trees: axis-aligned splits with a multinomial logistic classifier
//! at every leaf. Each leaf is one locally linear region.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Instance, LocalLinearForm, Prediction, RegionId, BOUNDARY_TOLERANCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        form: LocalLinearForm,
    },
}

/// A binary model tree over `d` features and `C` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelTree {
    input_dim: usize,
    class_count: usize,
    root: TreeNode,
}

impl ModelTree {
    /// Validates that every leaf matches the declared dimensions and that
    /// every root-to-leaf path carries consistent axis-aligned constraints.
    pub fn new(input_dim: usize, class_count: usize, root: TreeNode) -> Result<Self> {
        if input_dim == 0 || class_count < 2 {
            return Err(Error::InvalidModel(
                "need d >= 1 and C >= 2 for a model tree".into(),
            ));
        }
        let mut lo = vec![f64::NEG_INFINITY; input_dim];
        let mut hi = vec![f64::INFINITY; input_dim];
        validate_node(&root, input_dim, class_count, &mut lo, &mut hi)?;
        Ok(Self {
            input_dim,
            class_count,
            root,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn leaf_count(&self) -> usize {
        fn count(node: &TreeNode) -> usize {
            match node {
                TreeNode::Leaf { .. } => 1,
                TreeNode::Split { left, right, .. } => count(left) + count(right),
            }
        }
        count(&self.root)
    }

    /// All leaf forms, left to right.
    pub fn leaves(&self) -> Vec<&LocalLinearForm> {
        fn walk<'a>(node: &'a TreeNode, out: &mut Vec<&'a LocalLinearForm>) {
            match node {
                TreeNode::Leaf { form } => out.push(form),
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn predict(&self, x: &Instance) -> Result<Prediction> {
        self.check_input(x)?;
        self.route(x, false)?.predict(x)
    }

    pub fn local_form(&self, x: &Instance) -> Result<LocalLinearForm> {
        self.check_input(x)?;
        Ok(self.route(x, true)?.clone())
    }

    fn check_input(&self, x: &Instance) -> Result<()> {
        if x.dim() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.dim(),
            });
        }
        Ok(())
    }

    /// Walks to the leaf containing `x`. Routing sends `x[feature] < t` left
    /// and the rest right; with `strict` set, a feature within
    /// [`BOUNDARY_TOLERANCE`] of a threshold on the path is a boundary error.
    fn route(&self, x: &Instance, strict: bool) -> Result<&LocalLinearForm> {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { form } => return Ok(form),
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let v = x.values()[*feature];
                    if strict && (v - threshold).abs() < BOUNDARY_TOLERANCE {
                        return Err(Error::Boundary);
                    }
                    node = if v < *threshold { left } else { right };
                }
            }
        }
    }
}

fn validate_node(
    node: &TreeNode,
    d: usize,
    c: usize,
    lo: &mut [f64],
    hi: &mut [f64],
) -> Result<()> {
    match node {
        TreeNode::Leaf { form } => {
            if form.input_dim() != d || form.class_count() != c {
                return Err(Error::InvalidModel(format!(
                    "leaf form is {}x{}, tree declares {}x{}",
                    form.input_dim(),
                    form.class_count(),
                    d,
                    c
                )));
            }
            Ok(())
        }
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if *feature >= d {
                return Err(Error::InvalidModel(format!(
                    "split feature {feature} out of range for d={d}"
                )));
            }
            if !threshold.is_finite() {
                return Err(Error::NonFinite {
                    context: "split threshold",
                });
            }
            if *threshold <= lo[*feature] || *threshold >= hi[*feature] {
                return Err(Error::InvalidModel(format!(
                    "split on feature {feature} at {threshold} leaves an empty region"
                )));
            }
            let saved_hi = hi[*feature];
            hi[*feature] = *threshold;
            validate_node(left, d, c, lo, hi)?;
            hi[*feature] = saved_hi;

            let saved_lo = lo[*feature];
            lo[*feature] = *threshold;
            validate_node(right, d, c, lo, hi)?;
            lo[*feature] = saved_lo;
            Ok(())
        }
    }
}

/// Builds a random model tree with `2^depth` leaves.
///
/// Split features are drawn uniformly; each threshold lands in the middle
/// 60% of the feature's remaining interval (so, in `[0.2, 0.8]` at the root),
/// which keeps every leaf region non-empty. Leaf coefficients are uniform in
/// `[-2, 2]`, keeping logits unsaturated at desk scale. Deterministic for a
/// fixed seed.
pub fn build_synthetic_plm(
    input_dim: usize,
    class_count: usize,
    depth: usize,
    seed: u64,
) -> Result<ModelTree> {
    if input_dim == 0 || class_count < 2 {
        return Err(Error::InvalidModel(
            "need d >= 1 and C >= 2 for a synthetic tree".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_leaf = 0usize;
    let mut lo = vec![0.0; input_dim];
    let mut hi = vec![1.0; input_dim];
    let root = build_node(
        input_dim,
        class_count,
        depth,
        &mut rng,
        &mut next_leaf,
        &mut lo,
        &mut hi,
    );
    ModelTree::new(input_dim, class_count, root)
}

fn build_node(
    d: usize,
    c: usize,
    depth: usize,
    rng: &mut ChaCha8Rng,
    next_leaf: &mut usize,
    lo: &mut [f64],
    hi: &mut [f64],
) -> TreeNode {
    if depth == 0 {
        let weights = DMatrix::from_fn(d, c, |_, _| rng.gen_range(-2.0..2.0));
        let bias = DVector::from_fn(c, |_, _| rng.gen_range(-2.0..2.0));
        let id = *next_leaf;
        *next_leaf += 1;
        return TreeNode::Leaf {
            form: LocalLinearForm::new(RegionId::Leaf(id), weights, bias)
                .expect("finite coefficients"),
        };
    }
    let feature = rng.gen_range(0..d);
    let span = hi[feature] - lo[feature];
    let threshold = lo[feature] + span * rng.gen_range(0.2..0.8);

    let saved_hi = hi[feature];
    hi[feature] = threshold;
    let left = build_node(d, c, depth - 1, rng, next_leaf, lo, hi);
    hi[feature] = saved_hi;

    let saved_lo = lo[feature];
    lo[feature] = threshold;
    let right = build_node(d, c, depth - 1, rng, next_leaf, lo, hi);
    lo[feature] = saved_lo;

    TreeNode::Split {
        feature,
        threshold,
        left: Box::new(left),
        right: Box::new(right),
    }
}
