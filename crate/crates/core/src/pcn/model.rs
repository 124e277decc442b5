//! Layered network shared by predictive coding and the baselines.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::{Activation, Matrix, Vector};

/// One weight layer: `μ = f(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Option<Vector>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Pre-activation `W x + b`.
    pub fn preactivation(&self, x: &[f64]) -> Vector {
        let mut a = self.weights.matvec(x);
        if let Some(b) = &self.bias {
            a.axpy(1.0, b);
        }
        a
    }

    pub fn param_count(&self) -> usize {
        self.weights.rows() * self.weights.cols() + self.bias.as_ref().map_or(0, Vector::len)
    }
}

/// Weight layers `W_1..W_L` mapping `x_0` (input) to `x_L` (output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcnModel {
    layers: Vec<Layer>,
}

impl PcnModel {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(PcnError::InvalidConfig("a model needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(PcnError::DimensionMismatch {
                    context: "PcnModel::new",
                    expected: pair[0].output_dim(),
                    got: pair[1].input_dim(),
                });
            }
        }
        for l in &layers {
            if let Some(b) = &l.bias {
                if b.len() != l.output_dim() {
                    return Err(PcnError::DimensionMismatch {
                        context: "PcnModel::new (bias)",
                        expected: l.output_dim(),
                        got: b.len(),
                    });
                }
            }
        }
        Ok(Self { layers })
    }

    /// Glorot-uniform weights, zero biases. `dims` lists `n_0..n_L`;
    /// `activations` has one entry per weight layer.
    pub fn glorot<R: Rng + ?Sized>(
        dims: &[usize],
        activations: &[Activation],
        with_bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(PcnError::InvalidConfig(format!(
                "need {} activations for {} dims",
                dims.len().saturating_sub(1),
                dims.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, data).expect("sized by construction"),
                    bias: with_bias.then(|| Vector::zeros(fan_out)),
                    activation,
                }
            })
            .collect();
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Layer `l` in 1-based numbering (`W_l`).
    pub fn layer(&self, l: usize) -> &Layer {
        &self.layers[l - 1]
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// `n_0..n_L`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Layer::output_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(PcnError::DimensionMismatch {
                context: "model input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn check_target(&self, target: &[f64]) -> Result<()> {
        if target.len() != self.output_dim() {
            return Err(PcnError::DimensionMismatch {
                context: "model target",
                expected: self.output_dim(),
                got: target.len(),
            });
        }
        Ok(())
    }

    /// Feedforward pass returning activities `x_0..x_L` and pre-activations
    /// `a_1..a_L`.
    pub fn forward_all(&self, input: &[f64]) -> (Vec<Vector>, Vec<Vector>) {
        let mut xs = Vec::with_capacity(self.depth() + 1);
        let mut pre = Vec::with_capacity(self.depth());
        xs.push(Vector::from_vec(input.to_vec()));
        for layer in &self.layers {
            let a = layer.preactivation(xs.last().expect("non-empty"));
            let act = layer.activation;
            xs.push(a.map(|v| act.f(v)));
            pre.push(a);
        }
        (xs, pre)
    }

    pub fn forward(&self, input: &[f64]) -> Vector {
        let mut x = Vector::from_vec(input.to_vec());
        for layer in &self.layers {
            let act = layer.activation;
            x = layer.preactivation(&x).map(|v| act.f(v));
        }
        x
    }

    pub fn predict_class(&self, input: &[f64]) -> usize {
        self.forward(input).argmax()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.as_ref().is_none_or(Vector::is_finite))
    }

    /// `θ += scale · delta`.
    pub fn apply(&mut self, delta: &ParamGrads, scale: f64) {
        for (layer, d) in self.layers.iter_mut().zip(&delta.layers) {
            layer.weights.axpy(scale, &d.weights);
            if let (Some(b), Some(db)) = (layer.bias.as_mut(), d.bias.as_ref()) {
                b.axpy(scale, db);
            }
        }
    }

    /// Euclidean distance between parameter vectors of two same-shaped models.
    pub fn distance(&self, other: &PcnModel) -> f64 {
        let mut acc = 0.0;
        for (a, b) in self.layers.iter().zip(&other.layers) {
            for (x, y) in a.weights.as_slice().iter().zip(b.weights.as_slice()) {
                acc += (x - y) * (x - y);
            }
            if let (Some(ba), Some(bb)) = (&a.bias, &b.bias) {
                for (x, y) in ba.iter().zip(bb.iter()) {
                    acc += (x - y) * (x - y);
                }
            }
        }
        acc.sqrt()
    }
}

/// Per-layer parameter-shaped buffers: gradients, updates, optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub weights: Matrix,
    pub bias: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrad>,
}

impl ParamGrads {
    pub fn zeros_like(model: &PcnModel) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| LayerGrad {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    bias: l.bias.as_ref().map(|b| Vector::zeros(b.len())),
                })
                .collect(),
        }
    }

    /// `self += s · other`
    pub fn axpy(&mut self, s: f64, other: &ParamGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.axpy(s, &b.weights);
            if let (Some(x), Some(y)) = (a.bias.as_mut(), b.bias.as_ref()) {
                x.axpy(s, y);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights = l.weights.scale(s);
            if let Some(b) = l.bias.as_mut() {
                *b = b.scale(s);
            }
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// Layer-major, row-major flattening; bias follows its layer's weights.
    pub fn flatten(&self) -> Vector {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            if let Some(b) = &l.bias {
                out.extend_from_slice(b);
            }
        }
        Vector::from_vec(out)
    }

    /// Flattened parameters of layer `index` (0-based).
    pub fn layer_flat(&self, index: usize) -> Vec<f64> {
        let l = &self.layers[index];
        let mut out = l.weights.as_slice().to_vec();
        if let Some(b) = &l.bias {
            out.extend_from_slice(b);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.as_ref().is_none_or(Vector::is_finite))
    }

    /// Mutable `(param, grad)`-style slice iteration in flattening order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            if let Some(b) = l.bias.as_mut() {
                out.push(b);
            }
        }
        out
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(l.weights.as_slice());
            if let Some(b) = &l.bias {
                out.push(b);
            }
        }
        out
    }
}

impl PcnModel {
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.weights.as_mut_slice());
            if let Some(b) = l.bias.as_mut() {
                out.push(b);
            }
        }
        out
    }
}
