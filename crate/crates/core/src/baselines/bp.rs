//! Backpropagation on the output loss alone.

use crate::error::Result;
use crate::numkit::{softmax, softmax_cross_entropy, Vector};
use crate::pcn::model::{ParamGrads, PcnModel};
use crate::pcn::state::OutputLoss;

pub(crate) fn loss_of_output(y: &Vector, target: &[f64], loss: OutputLoss) -> f64 {
    match loss {
        OutputLoss::SquaredError => 0.5 * y.sub(&Vector::from_vec(target.to_vec())).norm_sq(),
        OutputLoss::CrossEntropy => softmax_cross_entropy(y, target),
    }
}

/// `½‖y − t‖²` for squared error, softmax cross-entropy otherwise.
pub fn output_loss(model: &PcnModel, input: &[f64], target: &[f64], loss: OutputLoss) -> f64 {
    loss_of_output(&model.forward(input), target, loss)
}

/// Exact reverse-mode gradients `∂L/∂W_l` (and `∂L/∂b_l`) of the output loss.
pub fn bp_grads(model: &PcnModel, input: &[f64], target: &[f64], loss: OutputLoss) -> Result<ParamGrads> {
    let mut acc = ParamGrads::zeros_like(model);
    accumulate_bp_grads(model, input, target, loss, &mut acc)?;
    Ok(acc)
}

/// Adds the [`bp_grads`] of one sample to `acc` and returns its output loss,
/// from a single forward pass.
pub fn accumulate_bp_grads(
    model: &PcnModel,
    input: &[f64],
    target: &[f64],
    loss: OutputLoss,
    acc: &mut ParamGrads,
) -> Result<f64> {
    model.check_input(input)?;
    model.check_target(target)?;
    let (xs, pre) = model.forward_all(input);
    let y = xs.last().expect("non-empty");
    let dl_dy = match loss {
        OutputLoss::SquaredError => y.sub(&Vector::from_vec(target.to_vec())),
        OutputLoss::CrossEntropy => softmax(y).sub(&Vector::from_vec(target.to_vec())),
    };
    backward_from(model, &xs, &pre, dl_dy, acc);
    Ok(loss_of_output(y, target, loss))
}

/// Vector-Jacobian product `upstreamᵀ ∂y/∂θ` of the network output `y`.
pub fn backward(model: &PcnModel, input: &[f64], upstream: &[f64]) -> Result<ParamGrads> {
    model.check_input(input)?;
    model.check_target(upstream)?;
    let (xs, pre) = model.forward_all(input);
    let mut acc = ParamGrads::zeros_like(model);
    backward_from(model, &xs, &pre, Vector::from_vec(upstream.to_vec()), &mut acc);
    Ok(acc)
}

fn backward_from(model: &PcnModel, xs: &[Vector], pre: &[Vector], mut upstream: Vector, acc: &mut ParamGrads) {
    for l in (1..=model.depth()).rev() {
        let layer = model.layer(l);
        let act = layer.activation;
        let delta: Vector = upstream
            .iter()
            .zip(pre[l - 1].iter())
            .map(|(u, &a)| u * act.df(a))
            .collect::<Vec<_>>()
            .into();
        let g = &mut acc.layers[l - 1];
        g.weights.add_outer(1.0, &delta, &xs[l - 1]);
        if let Some(b) = g.bias.as_mut() {
            b.axpy(1.0, &delta);
        }
        if l > 1 {
            upstream = layer.weights.matvec_t(&delta);
        }
    }
}
