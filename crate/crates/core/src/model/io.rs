//! Model serialization.
//!
//! Models are stored as JSON with every coefficient encoded as the 16-digit
//! hex form of its IEEE-754 bit pattern (`f64::to_bits`), so a save/load
//! round trip is bit-exact. See the README for the document layout.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    build_relu_net, LocalLinearForm, Model, ModelTree, RegionId, ReluLayer, ReluNetSpec, TreeNode,
};
use crate::error::{Error, Result};

fn f64_to_hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn hex_to_f64(s: &str) -> Result<f64> {
    if s.len() != 16 {
        return Err(Error::InvalidModel(format!(
            "expected 16 hex digits for a coefficient, got {s:?}"
        )));
    }
    let bits = u64::from_str_radix(s, 16)
        .map_err(|e| Error::InvalidModel(format!("bad coefficient {s:?}: {e}")))?;
    Ok(f64::from_bits(bits))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum WireModel {
    Tree {
        d: usize,
        classes: usize,
        root: WireNode,
    },
    Relu {
        widths: Vec<usize>,
        layers: Vec<WireLayer>,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WireNode {
    Split {
        feature: usize,
        threshold: String,
        left: Box<WireNode>,
        right: Box<WireNode>,
    },
    Leaf {
        id: usize,
        /// Row-major d x C matrix.
        weights: Vec<Vec<String>>,
        bias: Vec<String>,
    },
}

#[derive(Serialize, Deserialize)]
struct WireLayer {
    /// One row per output unit.
    weights: Vec<Vec<String>>,
    bias: Vec<String>,
}

fn encode_node(node: &TreeNode) -> WireNode {
    match node {
        TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } => WireNode::Split {
            feature: *feature,
            threshold: f64_to_hex(*threshold),
            left: Box::new(encode_node(left)),
            right: Box::new(encode_node(right)),
        },
        TreeNode::Leaf { form } => {
            let id = match form.region {
                RegionId::Leaf(id) => id,
                _ => unreachable!("tree leaves carry leaf region ids"),
            };
            WireNode::Leaf {
                id,
                weights: (0..form.weights.nrows())
                    .map(|i| form.weights.row(i).iter().map(|&v| f64_to_hex(v)).collect())
                    .collect(),
                bias: form.bias.iter().map(|&v| f64_to_hex(v)).collect(),
            }
        }
    }
}

fn decode_node(node: &WireNode, d: usize, classes: usize) -> Result<TreeNode> {
    match node {
        WireNode::Split {
            feature,
            threshold,
            left,
            right,
        } => Ok(TreeNode::Split {
            feature: *feature,
            threshold: hex_to_f64(threshold)?,
            left: Box::new(decode_node(left, d, classes)?),
            right: Box::new(decode_node(right, d, classes)?),
        }),
        WireNode::Leaf { id, weights, bias } => {
            if weights.len() != d || weights.iter().any(|row| row.len() != classes) {
                return Err(Error::InvalidModel(format!(
                    "leaf {id}: weight matrix is not {d}x{classes}"
                )));
            }
            let mut flat = Vec::with_capacity(d * classes);
            for row in weights {
                for cell in row {
                    flat.push(hex_to_f64(cell)?);
                }
            }
            let bias = bias
                .iter()
                .map(|s| hex_to_f64(s))
                .collect::<Result<Vec<_>>>()?;
            Ok(TreeNode::Leaf {
                form: LocalLinearForm::new(
                    RegionId::Leaf(*id),
                    DMatrix::from_row_slice(d, classes, &flat),
                    DVector::from_column_slice(&bias),
                )?,
            })
        }
    }
}

/// Serializes a model to its JSON document.
pub fn to_json(model: &Model) -> String {
    let wire = match model {
        Model::Tree(tree) => WireModel::Tree {
            d: tree.input_dim(),
            classes: tree.class_count(),
            root: encode_node(tree.root()),
        },
        Model::Relu(net) => {
            let spec = net.to_spec();
            WireModel::Relu {
                widths: spec.layer_widths,
                layers: spec
                    .layers
                    .iter()
                    .map(|l| WireLayer {
                        weights: l
                            .weights
                            .iter()
                            .map(|row| row.iter().map(|&v| f64_to_hex(v)).collect())
                            .collect(),
                        bias: l.bias.iter().map(|&v| f64_to_hex(v)).collect(),
                    })
                    .collect(),
            }
        }
    };
    serde_json::to_string_pretty(&wire).expect("wire model serializes")
}

/// Parses a model from its JSON document, re-validating all invariants.
pub fn from_json(text: &str) -> Result<Model> {
    let wire: WireModel = serde_json::from_str(text)?;
    match wire {
        WireModel::Tree { d, classes, root } => {
            let root = decode_node(&root, d, classes)?;
            Ok(Model::Tree(ModelTree::new(d, classes, root)?))
        }
        WireModel::Relu { widths, layers } => {
            let layers = layers
                .iter()
                .map(|l| {
                    let weights = l
                        .weights
                        .iter()
                        .map(|row| row.iter().map(|s| hex_to_f64(s)).collect())
                        .collect::<Result<Vec<Vec<f64>>>>()?;
                    let bias = l
                        .bias
                        .iter()
                        .map(|s| hex_to_f64(s))
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(ReluLayer { weights, bias })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Model::Relu(build_relu_net(&ReluNetSpec {
                layer_widths: widths,
                layers,
            })?))
        }
    }
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path)?;
    from_json(&text)
}
