//! Neural activities, prediction errors and the free-energy decomposition.
//!
//! Energies are reported as `E_l = ‖ε_l‖²` and `F = Σ E_l`. Every update in
//! this crate is the exact negative gradient of the *objective*
//! `F_impl = ½ Σ ‖ε_l‖²`, so reported quantities and gradients differ by
//! the constant [`CONVENTION_CONSTANT`] = 2:
//! `−∂F/∂x_l = 2 · inference_grad(l)`.
//!
//! With the cross-entropy output loss the output energy is the softmax
//! cross-entropy itself (not halved) and the objective is
//! `½ Σ_{l<L} ‖ε_l‖² + CE`.

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::{softmax, softmax_cross_entropy, Vector};
use crate::pcn::model::PcnModel;

/// Ratio between the reported free energy and the objective whose gradients
/// the updates follow (squared-error energies).
pub const CONVENTION_CONSTANT: f64 = 2.0;

/// Energy at the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputLoss {
    #[default]
    SquaredError,
    CrossEntropy,
}

/// Activities `x_0..x_L` and errors `ε_1..ε_L` of one sample.
///
/// `eps[l - 1]` holds `ε_l`. For the cross-entropy output it holds
/// `t − softmax(μ_L)`, the negative gradient of the loss w.r.t. the
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct PcnState {
    pub x: Vec<Vector>,
    pub eps: Vec<Vector>,
    pub clamp_in: bool,
    pub clamp_out: bool,
    pub loss: OutputLoss,
    /// `a_l = W_l x_{l−1} + b_l`, `pre[l - 1]`.
    pub(crate) pre: Vec<Vector>,
    /// `μ_l = f(a_l)`, `pred[l - 1]`.
    pub(crate) pred: Vec<Vector>,
}

impl PcnState {
    pub fn depth(&self) -> usize {
        self.eps.len()
    }

    /// Pre-activation of layer `l` (1-based).
    pub fn preactivation(&self, l: usize) -> &Vector {
        &self.pre[l - 1]
    }

    /// Prediction `μ_l = f(a_l)` of layer `l` (1-based).
    pub fn prediction(&self, l: usize) -> &Vector {
        &self.pred[l - 1]
    }

    fn output_uses_ce(&self) -> bool {
        self.loss == OutputLoss::CrossEntropy && self.clamp_out
    }

    /// Recomputes predictions and errors of layers `from..=L`.
    pub fn refresh_from(&mut self, model: &PcnModel, from: usize) {
        let depth = self.depth();
        for l in from.max(1)..=depth {
            let layer = model.layer(l);
            let a = layer.preactivation(&self.x[l - 1]);
            let act = layer.activation;
            self.pred[l - 1] = a.map(|v| act.f(v));
            self.pre[l - 1] = a;
        }
        self.refresh_errors();
    }

    /// Recomputes errors from cached predictions.
    pub fn refresh_errors(&mut self) {
        let depth = self.depth();
        for l in 1..=depth {
            self.eps[l - 1] = if l == depth && self.output_uses_ce() {
                self.x[l].sub(&softmax(&self.pred[l - 1]))
            } else {
                self.x[l].sub(&self.pred[l - 1])
            };
        }
    }

    /// Largest violation of `ε_l = x_l − f(W_l x_{l−1} + b_l)` against a
    /// fresh recomputation.
    pub fn consistency_error(&self, model: &PcnModel) -> f64 {
        let mut fresh = self.clone();
        fresh.refresh_from(model, 1);
        self.eps
            .iter()
            .zip(&fresh.eps)
            .map(|(a, b)| a.sub(b).max_abs())
            .fold(0.0, f64::max)
    }
}

/// Feedforward initialization: `x_0 = input`, `x_l = f(W_l x_{l−1})`; with a
/// target, `x_L` is overwritten and clamped.
pub fn feedforward_init(model: &PcnModel, input: &[f64], target: Option<&[f64]>) -> Result<PcnState> {
    feedforward_init_with_loss(model, input, target, OutputLoss::SquaredError)
}

pub fn feedforward_init_with_loss(
    model: &PcnModel,
    input: &[f64],
    target: Option<&[f64]>,
    loss: OutputLoss,
) -> Result<PcnState> {
    model.check_input(input)?;
    if let Some(t) = target {
        model.check_target(t)?;
    }
    let (mut x, pre) = model.forward_all(input);
    let pred: Vec<Vector> = x[1..].to_vec();
    if let Some(t) = target {
        let last = x.len() - 1;
        x[last] = Vector::from_vec(t.to_vec());
    }
    let mut state = PcnState {
        eps: pred.iter().map(|p| Vector::zeros(p.len())).collect(),
        x,
        clamp_in: true,
        clamp_out: target.is_some(),
        loss,
        pre,
        pred,
    };
    state.refresh_errors();
    Ok(state)
}

/// Layer energies and the decomposition `F = L + Ẽ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `E_1..E_L`.
    pub per_layer: Vec<f64>,
    /// `L = E_L`.
    pub output_loss: f64,
    /// `Ẽ = Σ_{l<L} E_l`.
    pub residual: f64,
    /// `F = L + Ẽ`.
    pub total: f64,
    pub loss: OutputLoss,
}

impl EnergyReport {
    /// The objective whose exact gradients drive inference and learning.
    pub fn objective(&self) -> f64 {
        match self.loss {
            OutputLoss::SquaredError => self.total / CONVENTION_CONSTANT,
            OutputLoss::CrossEntropy => self.residual / CONVENTION_CONSTANT + self.output_loss,
        }
    }
}

pub fn energy(state: &PcnState) -> EnergyReport {
    let depth = state.depth();
    let per_layer: Vec<f64> = (1..=depth)
        .map(|l| {
            if l == depth && state.output_uses_ce() {
                softmax_cross_entropy(&state.pred[l - 1], &state.x[l])
            } else {
                state.eps[l - 1].norm_sq()
            }
        })
        .collect();
    let output_loss = per_layer[depth - 1];
    let mut residual = 0.0;
    for e in &per_layer[..depth - 1] {
        residual += e;
    }
    EnergyReport {
        total: output_loss + residual,
        per_layer,
        output_loss,
        residual,
        loss: state.loss,
    }
}

/// Confirms a state's shapes agree with a model.
pub fn check_state(model: &PcnModel, state: &PcnState) -> Result<()> {
    let dims = model.dims();
    if state.x.len() != dims.len() {
        return Err(PcnError::DimensionMismatch {
            context: "state depth",
            expected: dims.len(),
            got: state.x.len(),
        });
    }
    for (x, &d) in state.x.iter().zip(&dims) {
        if x.len() != d {
            return Err(PcnError::DimensionMismatch {
                context: "state layer width",
                expected: d,
                got: x.len(),
            });
        }
    }
    Ok(())
}
