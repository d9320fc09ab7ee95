//! Minimal dense feed-forward networks: leaky-ReLU / linear activations,
//! inverted dropout, manual backpropagation, and gradient-*ascent* updates.
//! Checkpoints serialize to human-inspectable JSON.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Linear,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Linear => x,
        }
    }

    fn derivative(&self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu { slope } => {
                if x >= 0.0 {
                    1.0
                } else {
                    *slope
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    /// `in_dim x out_dim`, applied as `x W + b` on row-major batches.
    #[serde(with = "crate::serde_util::mat")]
    pub weights: Array2<f64>,
    #[serde(with = "crate::serde_util::vec1")]
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
    /// Dropout rate applied after each layer's activation, in [0, 1).
    pub dropout_rates: Vec<f64>,
    pub rng_seed: u64,
}

/// Forward mode: training resamples dropout masks from the caller's RNG;
/// evaluation is deterministic with no dropout.
pub enum Mode<'r> {
    Train(&'r mut ChaCha8Rng),
    Eval,
}

/// Records everything the backward pass needs for one batch.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input: Array2<f64>,
    pre_activations: Vec<Array2<f64>>,
    /// Post-activation, post-dropout outputs per layer.
    outputs: Vec<Array2<f64>>,
    /// Inverted-dropout masks (already scaled by 1/(1-rate)); None in eval
    /// mode or for rate 0.
    masks: Vec<Option<Array2<f64>>>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Array2<f64>>,
    pub d_bias: Vec<Array1<f64>>,
}

impl DenseNetwork {
    /// Builds a network with Glorot-uniform weights (`±sqrt(6/(fan_in+fan_out))`)
    /// and zero biases, seeded deterministically.
    pub fn new(
        dims: &[usize],
        activations: &[Activation],
        dropout_rates: &[f64],
        rng_seed: u64,
    ) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let n_layers = dims.len() - 1;
        if activations.len() != n_layers || dropout_rates.len() != n_layers {
            return Err(Error::Config(format!(
                "expected {n_layers} activations and dropout rates, got {} and {}",
                activations.len(),
                dropout_rates.len()
            )));
        }
        for &r in dropout_rates {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let layers = (0..n_layers)
            .map(|k| {
                let (fan_in, fan_out) = (dims[k], dims[k + 1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound));
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation: activations[k],
                }
            })
            .collect();
        Ok(DenseNetwork {
            layers,
            dropout_rates: dropout_rates.to_vec(),
            rng_seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.ncols()
    }

    /// Runs the network on a batch: affine, activation, then (train mode
    /// only) inverted dropout per layer.
    pub fn forward(&self, x: ArrayView2<f64>, mode: Mode) -> Result<(Array2<f64>, ForwardTape)> {
        let masks = match mode {
            Mode::Eval => vec![None; self.layers.len()],
            Mode::Train(rng) => self
                .layers
                .iter()
                .zip(&self.dropout_rates)
                .map(|(layer, &rate)| {
                    if rate == 0.0 {
                        None
                    } else {
                        let keep = 1.0 - rate;
                        let scale = 1.0 / keep;
                        let out = layer.weights.ncols();
                        Some(Array2::from_shape_fn((x.nrows(), out), |_| {
                            if rng.gen::<f64>() < keep {
                                scale
                            } else {
                                0.0
                            }
                        }))
                    }
                })
                .collect(),
        };
        self.forward_with_masks(x, masks)
    }

    /// Forward pass with caller-provided dropout masks; used by `forward`
    /// and by finite-difference gradient checks that must hold masks fixed.
    pub(crate) fn forward_with_masks(
        &self,
        x: ArrayView2<f64>,
        masks: Vec<Option<Array2<f64>>>,
    ) -> Result<(Array2<f64>, ForwardTape)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = x.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut pre = current.dot(&layer.weights);
            for mut row in pre.rows_mut() {
                row += &layer.bias;
            }
            let mut out = pre.mapv(|v| layer.activation.apply(v));
            if let Some(mask) = &masks[k] {
                out *= mask;
            }
            pre_activations.push(pre);
            outputs.push(out.clone());
            current = out;
        }
        let h = current;
        Ok((
            h,
            ForwardTape {
                input: x.to_owned(),
                pre_activations,
                outputs,
                masks,
            },
        ))
    }

    /// Backpropagates an upstream gradient `dL_dH` through the tape,
    /// returning per-layer parameter gradients.
    pub fn backward(&self, tape: &ForwardTape, dl_dh: ArrayView2<f64>) -> Result<Gradients> {
        let n = self.layers.len();
        if tape.pre_activations.len() != n {
            return Err(Error::State(format!(
                "tape has {} layers, network has {n}",
                tape.pre_activations.len()
            )));
        }
        let last = &tape.outputs[n - 1];
        if dl_dh.dim() != last.dim() {
            return Err(Error::State(format!(
                "upstream gradient shape {:?} does not match forward output {:?}",
                dl_dh.dim(),
                last.dim()
            )));
        }
        let mut d_weights = vec![Array2::zeros((0, 0)); n];
        let mut d_bias = vec![Array1::zeros(0); n];
        let mut grad = dl_dh.to_owned();
        for k in (0..n).rev() {
            if let Some(mask) = &tape.masks[k] {
                grad *= mask;
            }
            let act = self.layers[k].activation;
            let mut g_pre = tape.pre_activations[k].mapv(|v| act.derivative(v));
            g_pre *= &grad;
            let layer_input = if k == 0 {
                &tape.input
            } else {
                &tape.outputs[k - 1]
            };
            d_weights[k] = layer_input.t().dot(&g_pre);
            d_bias[k] = g_pre.sum_axis(Axis(0));
            if k > 0 {
                grad = g_pre.dot(&self.layers[k].weights.t());
            }
        }
        Ok(Gradients { d_weights, d_bias })
    }

    /// Gradient of the loss w.r.t. the network *input*, chained through every
    /// layer of the tape; used when a network feeds into another.
    pub fn input_gradient(
        &self,
        tape: &ForwardTape,
        dl_dh: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        let n = self.layers.len();
        if tape.pre_activations.len() != n {
            return Err(Error::State(format!(
                "tape has {} layers, network has {n}",
                tape.pre_activations.len()
            )));
        }
        if dl_dh.dim() != tape.outputs[n - 1].dim() {
            return Err(Error::State(format!(
                "upstream gradient shape {:?} does not match forward output {:?}",
                dl_dh.dim(),
                tape.outputs[n - 1].dim()
            )));
        }
        let mut grad = dl_dh.to_owned();
        for k in (0..n).rev() {
            if let Some(mask) = &tape.masks[k] {
                grad *= mask;
            }
            let act = self.layers[k].activation;
            let mut g_pre = tape.pre_activations[k].mapv(|v| act.derivative(v));
            g_pre *= &grad;
            grad = g_pre.dot(&self.layers[k].weights.t());
        }
        Ok(grad)
    }

    /// Gradient-ascent step: every parameter moves by `+eta * grad`.
    pub fn ascend(&mut self, gradients: &Gradients, eta: f64) -> Result<()> {
        if gradients.d_weights.len() != self.layers.len() {
            return Err(Error::State("gradient/network layer count mismatch".into()));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            let dw = &gradients.d_weights[k];
            let db = &gradients.d_bias[k];
            if dw.dim() != layer.weights.dim() || db.len() != layer.bias.len() {
                return Err(Error::State(format!("gradient shape mismatch at layer {k}")));
            }
            if dw.iter().chain(db.iter()).any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient at layer {k} during ascent"
                )));
            }
        }
        for (k, layer) in self.layers.iter_mut().enumerate() {
            layer.weights.scaled_add(eta, &gradients.d_weights[k]);
            layer.bias.scaled_add(eta, &gradients.d_bias[k]);
        }
        Ok(())
    }
}

impl Gradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Gradients {
            d_weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect(),
            d_bias: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn add(&mut self, other: &Gradients) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_bias.iter_mut().zip(&other.d_bias) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.d_weights {
            *a *= factor;
        }
        for a in &mut self.d_bias {
            *a *= factor;
        }
    }
}
