//! Fully connected rectifier networks. Fixing the hidden activation pattern
//! of an instance turns the network into one affine map, so the region of an
//! instance is identified by its activation bitstring and the local form is
//! recovered by composing the layers with inactive units zeroed out.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{softmax, Instance, LocalLinearForm, Prediction, RegionId, BOUNDARY_TOLERANCE};
use crate::error::{Error, Result};

/// Raw construction data for one affine layer: `weights` has one row per
/// output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Construction data for a rectifier network. `layer_widths` runs from the
/// input dimension to the class count; every hidden layer applies
/// `max(z, 0)`, the output layer applies softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNetSpec {
    pub layer_widths: Vec<usize>,
    pub layers: Vec<ReluLayer>,
}

impl ReluNetSpec {
    /// Random spec with Kaiming-style uniform weights, deterministic per seed.
    pub fn random(layer_widths: Vec<usize>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        for pair in layer_widths.windows(2) {
            let (n_in, n_out) = (pair[0], pair[1]);
            let limit = (6.0 / n_in as f64).sqrt();
            let weights = (0..n_out)
                .map(|_| (0..n_in).map(|_| rng.gen_range(-limit..limit)).collect())
                .collect();
            let bias = (0..n_out).map(|_| rng.gen_range(-0.5..0.5)).collect();
            layers.push(ReluLayer { weights, bias });
        }
        Self {
            layer_widths,
            layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    weights: DMatrix<f64>, // n_out x n_in
    bias: DVector<f64>,    // n_out
}

/// A rectifier network ready for prediction and region extraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    widths: Vec<usize>,
    layers: Vec<Layer>,
}

/// Builds a network from its spec, checking that consecutive layer
/// dimensions agree.
pub fn build_relu_net(spec: &ReluNetSpec) -> Result<ReluNet> {
    if spec.layer_widths.len() < 2 {
        return Err(Error::InvalidModel(
            "a rectifier network needs at least input and output layers".into(),
        ));
    }
    if spec.layer_widths.contains(&0) {
        return Err(Error::InvalidModel("zero-width layer".into()));
    }
    if *spec.layer_widths.last().unwrap() < 2 {
        return Err(Error::InvalidModel("need C >= 2 output classes".into()));
    }
    if spec.layers.len() != spec.layer_widths.len() - 1 {
        return Err(Error::InvalidModel(format!(
            "expected {} layers, got {}",
            spec.layer_widths.len() - 1,
            spec.layers.len()
        )));
    }
    let mut layers = Vec::new();
    for (l, raw) in spec.layers.iter().enumerate() {
        let (n_in, n_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
        if raw.weights.len() != n_out || raw.bias.len() != n_out {
            return Err(Error::InvalidModel(format!(
                "layer {l}: expected {n_out} rows, got {}",
                raw.weights.len()
            )));
        }
        if raw.weights.iter().any(|row| row.len() != n_in) {
            return Err(Error::InvalidModel(format!(
                "layer {l}: expected rows of length {n_in}"
            )));
        }
        let flat: Vec<f64> = raw.weights.iter().flatten().copied().collect();
        if flat.iter().any(|w| !w.is_finite()) || raw.bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite {
                context: "network weights",
            });
        }
        layers.push(Layer {
            weights: DMatrix::from_row_slice(n_out, n_in, &flat),
            bias: DVector::from_column_slice(&raw.bias),
        });
    }
    Ok(ReluNet {
        widths: spec.layer_widths.clone(),
        layers,
    })
}

impl ReluNet {
    pub fn random(layer_widths: Vec<usize>, seed: u64) -> Result<Self> {
        build_relu_net(&ReluNetSpec::random(layer_widths, seed))
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn class_count(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Raw construction data, used for serialization.
    pub fn to_spec(&self) -> ReluNetSpec {
        let layers = self
            .layers
            .iter()
            .map(|l| ReluLayer {
                weights: (0..l.weights.nrows())
                    .map(|i| l.weights.row(i).iter().copied().collect())
                    .collect(),
                bias: l.bias.iter().copied().collect(),
            })
            .collect();
        ReluNetSpec {
            layer_widths: self.widths.clone(),
            layers,
        }
    }

    pub fn predict(&self, x: &Instance) -> Result<Prediction> {
        self.check_input(x)?;
        let mut a = DVector::from_column_slice(x.values());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &layer.weights * a + &layer.bias;
            if l + 1 == self.layers.len() {
                return softmax(&z);
            }
            a = z.map(|v| v.max(0.0));
        }
        unreachable!("network has at least one layer");
    }

    pub fn local_form(&self, x: &Instance) -> Result<LocalLinearForm> {
        self.check_input(x)?;
        let d = self.input_dim();
        // Composed affine map a(x) = M x + v with the activation pattern of x
        // held fixed: inactive rows are zeroed after every hidden layer.
        let mut m = DMatrix::<f64>::identity(d, d);
        let mut v = DVector::<f64>::zeros(d);
        let mut pattern = String::new();
        let mut a = DVector::from_column_slice(x.values());
        for (l, layer) in self.layers.iter().enumerate() {
            let z = &layer.weights * &a + &layer.bias;
            let mut mm = &layer.weights * &m;
            let mut vv = &layer.weights * &v + &layer.bias;
            if l + 1 == self.layers.len() {
                // Output layer: logits = mm * x + vv, stored as W = mm^T.
                return LocalLinearForm::new(RegionId::Activation(pattern), mm.transpose(), vv);
            }
            for (i, &zi) in z.iter().enumerate() {
                if zi.abs() < BOUNDARY_TOLERANCE {
                    return Err(Error::Boundary);
                }
                if zi > 0.0 {
                    pattern.push('1');
                } else {
                    pattern.push('0');
                    mm.row_mut(i).fill(0.0);
                    vv[i] = 0.0;
                }
            }
            m = mm;
            v = vv;
            a = z.map(|val| val.max(0.0));
        }
        unreachable!("network has at least one layer");
    }

    fn check_input(&self, x: &Instance) -> Result<()> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// widths [2,1,2]: one hidden unit computing x0 - x1, output layer
    /// sending it to (+1, -1).
    fn tiny_net() -> ReluNet {
        build_relu_net(&ReluNetSpec {
            layer_widths: vec![2, 1, 2],
            layers: vec![
                ReluLayer {
                    weights: vec![vec![1.0, -1.0]],
                    bias: vec![0.0],
                },
                ReluLayer {
                    weights: vec![vec![1.0], vec![-1.0]],
                    bias: vec![0.25, -0.25],
                },
            ],
        })
        .unwrap()
    }

    #[test]
    fn activation_pattern_follows_sign_of_hidden_unit() {
        let net = tiny_net();
        let active = net
            .local_form(&Instance::new(vec![0.3, 0.1]).unwrap())
            .unwrap();
        assert_eq!(active.region, RegionId::Activation("1".into()));
        let inactive = net
            .local_form(&Instance::new(vec![0.1, 0.3]).unwrap())
            .unwrap();
        assert_eq!(inactive.region, RegionId::Activation("0".into()));
    }

    #[test]
    fn inactive_unit_zeroes_the_composed_map() {
        let net = tiny_net();
        let form = net
            .local_form(&Instance::new(vec![0.1, 0.3]).unwrap())
            .unwrap();
        // Hidden path dead: W = 0, b = output bias.
        assert_eq!(form.weights, DMatrix::zeros(2, 2));
        assert_eq!(form.bias, DVector::from_column_slice(&[0.25, -0.25]));
        // Active side composes the output layer with the hidden row.
        let form = net
            .local_form(&Instance::new(vec![0.3, 0.1]).unwrap())
            .unwrap();
        assert_eq!(
            form.weights,
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn zero_weights_give_uniform_predictions() {
        let net = build_relu_net(&ReluNetSpec {
            layer_widths: vec![3, 2, 2],
            layers: vec![
                ReluLayer {
                    weights: vec![vec![0.0; 3]; 2],
                    bias: vec![0.0; 2],
                },
                ReluLayer {
                    weights: vec![vec![0.0; 2]; 2],
                    bias: vec![0.0; 2],
                },
            ],
        })
        .unwrap();
        let p = net
            .predict(&Instance::new(vec![0.4, 0.2, 0.9]).unwrap())
            .unwrap();
        assert_eq!(p.probs(), &[0.5, 0.5]);
    }

    #[test]
    fn forward_pass_matches_composed_form() {
        let net = ReluNet::random(vec![2, 2, 2], 11).unwrap();
        let x = Instance::new(vec![0.5, 0.5]).unwrap();
        let direct = net.predict(&x).unwrap();
        let via_form = net.local_form(&x).unwrap().predict(&x).unwrap();
        for (a, b) in direct.probs().iter().zip(via_form.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_pass_matches_composed_form_across_random_instances() {
        use rand::Rng;
        use rand::SeedableRng;
        let net = ReluNet::random(vec![3, 5, 4, 3], 13).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        while checked < 50 {
            let x = Instance::new((0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
            let form = match net.local_form(&x) {
                Ok(form) => form,
                Err(_) => continue, // boundary draw
            };
            let direct = net.predict(&x).unwrap();
            let via_form = form.predict(&x).unwrap();
            for (a, b) in direct.probs().iter().zip(via_form.probs()) {
                assert!((a - b).abs() < 1e-12);
            }
            checked += 1;
        }
    }

    #[test]
    fn identical_patterns_share_identical_forms() {
        let net = ReluNet::random(vec![3, 4, 3], 21).unwrap();
        let a = Instance::new(vec![0.50, 0.50, 0.50]).unwrap();
        let b = Instance::new(vec![0.51, 0.50, 0.49]).unwrap();
        let fa = net.local_form(&a).unwrap();
        let fb = net.local_form(&b).unwrap();
        if fa.region == fb.region {
            assert_eq!(fa.weights, fb.weights);
            assert_eq!(fa.bias, fb.bias);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_construction_error() {
        let spec = ReluNetSpec {
            layer_widths: vec![2, 1, 2],
            layers: vec![
                ReluLayer {
                    weights: vec![vec![1.0, -1.0, 3.0]], // 3 inputs, widths say 2
                    bias: vec![0.0],
                },
                ReluLayer {
                    weights: vec![vec![1.0], vec![-1.0]],
                    bias: vec![0.0, 0.0],
                },
            ],
        };
        assert!(build_relu_net(&spec).is_err());
    }

    #[test]
    fn boundary_pre_activation_is_an_error() {
        let net = tiny_net();
        // x0 == x1 puts the hidden pre-activation exactly at zero.
        let x = Instance::new(vec![0.2, 0.2]).unwrap();
        assert!(matches!(net.local_form(&x), Err(Error::Boundary)));
        assert!(net.predict(&x).is_ok());
    }
}
