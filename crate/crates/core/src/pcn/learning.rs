//! Learning phase: local synaptic updates from post-inference errors.

use crate::error::Result;
use crate::numkit::Vector;
use crate::pcn::model::{ParamGrads, PcnModel};
use crate::pcn::state::{check_state, PcnState};

/// `∂F_impl/∂W_l = −(ε_l ⊙ f′(a_l)) x_{l−1}ᵀ` at fixed activities (and
/// `−(ε_l ⊙ f′(a_l))` for biases).
pub fn energy_weight_grads(model: &PcnModel, state: &PcnState) -> ParamGrads {
    let mut acc = ParamGrads::zeros_like(model);
    accumulate_energy_weight_grads(model, state, &mut acc);
    acc
}

/// Adds [`energy_weight_grads`] to `acc` without a temporary.
pub fn accumulate_energy_weight_grads(model: &PcnModel, state: &PcnState, acc: &mut ParamGrads) {
    for (i, (layer, g)) in model.layers().iter().zip(acc.layers.iter_mut()).enumerate() {
        let act = layer.activation;
        let delta: Vector = state.eps[i]
            .iter()
            .zip(state.pre[i].iter())
            .map(|(e, &a)| -(e * act.df(a)))
            .collect::<Vec<_>>()
            .into();
        g.weights.add_outer(1.0, &delta, &state.x[i]);
        if let Some(b) = g.bias.as_mut() {
            b.axpy(1.0, &delta);
        }
    }
}

/// The update `ΔW_l = η (ε_l ⊙ f′(W_l x_{l−1})) x_{l−1}ᵀ`, i.e. `−η ∂F_impl/∂W_l`.
/// Returned, not applied.
pub fn weight_update(model: &PcnModel, state: &PcnState, eta: f64) -> Result<ParamGrads> {
    check_state(model, state)?;
    let mut g = energy_weight_grads(model, state);
    g.scale(-eta);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, Matrix};
    use crate::pcn::inference::{run_inference, InferenceConfig};
    use crate::pcn::model::Layer;
    use crate::pcn::state::{energy, feedforward_init, CONVENTION_CONSTANT};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn running_example_output_update() {
        let m = PcnModel::new(vec![
            Layer {
                weights: Matrix::from_rows(&[vec![2.0]]),
                bias: None,
                activation: Activation::Identity,
            },
            Layer {
                weights: Matrix::from_rows(&[vec![1.0]]),
                bias: None,
                activation: Activation::Identity,
            },
        ])
        .unwrap();
        let s = feedforward_init(&m, &[1.0], Some(&[5.0])).unwrap();
        let dw = weight_update(&m, &s, 0.01).unwrap();
        // descent direction: raising W_2 moves the prediction 2 toward 5
        assert!((dw.layers[1].weights[(0, 0)] - 0.06).abs() < 1e-15);
        assert_eq!(dw.layers[0].weights[(0, 0)], 0.0);
    }

    #[test]
    fn zero_error_gives_zero_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = PcnModel::glorot(&[3, 4, 2], &[Activation::Tanh; 2], true, &mut rng).unwrap();
        let s = feedforward_init(&m, &[0.1, 0.2, 0.3], None).unwrap();
        let dw = weight_update(&m, &s, 0.5).unwrap();
        assert_eq!(dw.norm(), 0.0);
    }

    #[test]
    fn matches_finite_differences_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = PcnModel::glorot(&[3, 4, 3], &[Activation::TeLU, Activation::Sigmoid], true, &mut rng).unwrap();
        let s = feedforward_init(&m, &[0.9, 0.2, 0.4], Some(&[0.1, 0.8, 0.3])).unwrap();
        let s = run_inference(&m, s, &InferenceConfig::default()).unwrap().state;
        let eta = 0.1;
        let dw = weight_update(&m, &s, eta).unwrap();
        let h = 1e-5;
        let f_at = |model: &PcnModel| {
            let mut st = s.clone();
            st.refresh_from(model, 1);
            energy(&st).total
        };
        for l in 0..2 {
            let (r, c) = m.layers()[l].weights.shape();
            for i in 0..r {
                for j in 0..c {
                    let mut p = m.clone();
                    p.layers_mut()[l].weights[(i, j)] += h;
                    let mut q = m.clone();
                    q.layers_mut()[l].weights[(i, j)] -= h;
                    let fd = (f_at(&p) - f_at(&q)) / (2.0 * h);
                    let expect = -eta * fd / CONVENTION_CONSTANT;
                    let got = dw.layers[l].weights[(i, j)];
                    assert!(
                        (got - expect).abs() <= 1e-6 * expect.abs().max(1e-8),
                        "{got} vs {expect}"
                    );
                }
            }
        }
    }
}
