//! Inference phase: gradient descent on the free energy w.r.t. activities.

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::Vector;
use crate::pcn::model::PcnModel;
use crate::pcn::state::{energy, PcnState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Euler step.
    pub gamma: f64,
    /// Maximum number of iterations.
    pub max_iters: usize,
    /// Stop once `‖∂F_impl/∂x‖ ≤ tol`.
    pub tol: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            gamma: 0.05,
            max_iters: 32,
            tol: 1e-6,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(PcnError::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.tol < 0.0 || self.tol.is_nan() {
            return Err(PcnError::InvalidConfig(format!(
                "tol must be nonnegative, got {}",
                self.tol
            )));
        }
        Ok(())
    }

    /// Zero iterations: the state stays at its feedforward initialization.
    pub fn frozen() -> Self {
        Self {
            max_iters: 0,
            ..Self::default()
        }
    }
}

/// One recorded inference iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceStep {
    pub iter: usize,
    /// Reported free energy `F = Σ E_l`.
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct InferenceOutcome {
    pub state: PcnState,
    /// Entry 0 is the initial state; entry `k` follows the `k`-th step.
    pub trajectory: Vec<InferenceStep>,
}

impl InferenceOutcome {
    pub fn iterations(&self) -> usize {
        self.trajectory.len() - 1
    }
}

/// `−ε_l + W_{l+1}ᵀ(ε_{l+1} ⊙ f′(a_{l+1}))`, the exact negative gradient of
/// the objective w.r.t. hidden layer `l` (`1 ≤ l ≤ L−1`).
pub fn inference_grad(model: &PcnModel, state: &PcnState, l: usize) -> Result<Vector> {
    let depth = model.depth();
    if l == 0 || l >= depth {
        return Err(PcnError::LayerOutOfRange {
            index: l,
            max: depth.saturating_sub(1),
        });
    }
    Ok(hidden_direction(model, state, l))
}

fn hidden_direction(model: &PcnModel, state: &PcnState, l: usize) -> Vector {
    let above = model.layer(l + 1);
    let act = above.activation;
    let delta = state.eps[l]
        .iter()
        .zip(state.pre[l].iter())
        .map(|(e, &a)| e * act.df(a))
        .collect::<Vec<_>>();
    let mut d = above.weights.matvec_t(&delta);
    d.axpy(-1.0, &state.eps[l - 1]);
    d
}

/// Directions for every free layer; `None` where the layer is clamped.
fn directions(model: &PcnModel, state: &PcnState) -> Vec<Option<Vector>> {
    let depth = model.depth();
    (0..=depth)
        .map(|l| {
            if l == 0 {
                None
            } else if l < depth {
                Some(hidden_direction(model, state, l))
            } else if state.clamp_out {
                None
            } else {
                Some(state.eps[depth - 1].scale(-1.0))
            }
        })
        .collect()
}

fn norm_of(dirs: &[Option<Vector>]) -> f64 {
    let mut acc = 0.0;
    for d in dirs.iter().flatten() {
        acc += d.norm_sq();
    }
    acc.sqrt()
}

/// Explicit Euler on the activities: every free layer moves simultaneously
/// by `gamma · direction` per iteration. Clamped layers never change.
pub fn run_inference(model: &PcnModel, mut state: PcnState, cfg: &InferenceConfig) -> Result<InferenceOutcome> {
    cfg.validate()?;
    let mut dirs = directions(model, &state);
    let mut grad_norm = norm_of(&dirs);
    let mut trajectory = vec![InferenceStep {
        iter: 0,
        energy: energy(&state).total,
        grad_norm,
    }];
    let mut iter = 0;
    while iter < cfg.max_iters && grad_norm > cfg.tol {
        for (x, d) in state.x.iter_mut().zip(&dirs) {
            if let Some(d) = d {
                x.axpy(cfg.gamma, d);
            }
        }
        // x_0 is clamped, so layer 1's prediction is unchanged.
        state.refresh_from(model, 2);
        iter += 1;
        let f = energy(&state).total;
        if !f.is_finite() {
            return Err(PcnError::NonFinite(format!(
                "free energy at inference iteration {iter} (gamma {} too large?)",
                cfg.gamma
            )));
        }
        dirs = directions(model, &state);
        grad_norm = norm_of(&dirs);
        trajectory.push(InferenceStep {
            iter,
            energy: f,
            grad_norm,
        });
    }
    Ok(InferenceOutcome { state, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Activation, Matrix};
    use crate::pcn::model::Layer;
    use crate::pcn::state::{feedforward_init, CONVENTION_CONSTANT};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_chain(ws: &[f64]) -> PcnModel {
        PcnModel::new(
            ws.iter()
                .map(|&w| Layer {
                    weights: Matrix::from_rows(&[vec![w]]),
                    bias: None,
                    activation: Activation::Identity,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn running_example_direction() {
        let m = identity_chain(&[2.0, 1.0]);
        let s = feedforward_init(&m, &[1.0], Some(&[5.0])).unwrap();
        assert_eq!(s.eps[0].as_slice(), &[0.0]);
        assert_eq!(s.eps[1].as_slice(), &[3.0]);
        assert_eq!(inference_grad(&m, &s, 1).unwrap().as_slice(), &[3.0]);
        assert!(matches!(
            inference_grad(&m, &s, 2),
            Err(PcnError::LayerOutOfRange { .. })
        ));
        assert!(inference_grad(&m, &s, 0).is_err());
    }

    #[test]
    fn unclamped_feedforward_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = PcnModel::glorot(&[3, 5, 5, 2], &[Activation::Tanh; 3], true, &mut rng).unwrap();
        let s = feedforward_init(&m, &[0.2, 0.5, 0.9], None).unwrap();
        for l in 1..3 {
            assert!(inference_grad(&m, &s, l).unwrap().iter().all(|&v| v == 0.0));
        }
        let out = run_inference(&m, s.clone(), &InferenceConfig::default()).unwrap();
        assert_eq!(out.iterations(), 0);
        assert_eq!(out.state.x, s.x);
        assert_eq!(out.trajectory[0].energy, 0.0);
    }

    #[test]
    fn matches_finite_differences_of_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = PcnModel::glorot(&[3, 4, 5, 2], &[Activation::Tanh; 3], true, &mut rng).unwrap();
        let mut s = feedforward_init(&m, &[0.3, 0.1, 0.7], Some(&[0.5, -0.5])).unwrap();
        for l in 1..3 {
            for v in s.x[l].iter_mut() {
                *v += rng.random_range(-0.3..0.3);
            }
        }
        s.refresh_from(&m, 1);
        let h = 1e-5;
        for l in 1..3 {
            let g = inference_grad(&m, &s, l).unwrap();
            for i in 0..s.x[l].len() {
                let mut p = s.clone();
                p.x[l][i] += h;
                p.refresh_from(&m, 1);
                let mut q = s.clone();
                q.x[l][i] -= h;
                q.refresh_from(&m, 1);
                let fd = (energy(&p).total - energy(&q).total) / (2.0 * h);
                let expect = -fd / CONVENTION_CONSTANT;
                let rel = (g[i] - expect).abs() / expect.abs().max(1e-8);
                assert!(rel <= 1e-6, "layer {l} unit {i}: {} vs {}", g[i], expect);
            }
        }
    }

    #[test]
    fn linear_chain_converges_to_closed_form() {
        // x0 = 1 clamped, x3 = 2 clamped, hidden x1, x2 free.
        // F_impl = ½[(x1 − a x0)² + (x2 − b x1)² + (x3 − c x2)²] is quadratic;
        // its minimizer solves the 2×2 normal equations.
        let (a, b, c) = (0.8, -1.2, 0.5);
        let m = identity_chain(&[a, b, c]);
        let s = feedforward_init(&m, &[1.0], Some(&[2.0])).unwrap();
        let cfg = InferenceConfig {
            gamma: 0.1,
            max_iters: 100_000,
            tol: 1e-12,
        };
        let out = run_inference(&m, s, &cfg).unwrap();
        let hess = DMatrix::from_row_slice(2, 2, &[1.0 + b * b, -b, -b, 1.0 + c * c]);
        let rhs = DVector::from_row_slice(&[a * 1.0, c * 2.0]);
        let sol = hess.lu().solve(&rhs).unwrap();
        assert!((out.state.x[1][0] - sol[0]).abs() <= 1e-8);
        assert!((out.state.x[2][0] - sol[1]).abs() <= 1e-8);
        assert_eq!(out.state.x[0][0], 1.0);
        assert_eq!(out.state.x[3][0], 2.0);
    }

    #[test]
    fn energy_never_increases_for_small_gamma() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = PcnModel::glorot(&[4, 8, 8, 3], &[Activation::Tanh; 3], true, &mut rng).unwrap();
            let input: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..1.0)).collect();
            let target: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = feedforward_init(&m, &input, Some(&target)).unwrap();
            let cfg = InferenceConfig {
                gamma: 0.05,
                max_iters: 100,
                tol: 0.0,
            };
            let out = run_inference(&m, s, &cfg).unwrap();
            for w in out.trajectory.windows(2) {
                assert!(w[1].energy <= w[0].energy + 1e-10, "seed {seed}");
            }
            assert!(out.state.consistency_error(&m) <= 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let m = identity_chain(&[3.0, 3.0, 3.0]);
        let s = feedforward_init(&m, &[1.0], Some(&[100.0])).unwrap();
        let cfg = InferenceConfig {
            gamma: 50.0,
            max_iters: 10_000,
            tol: 0.0,
        };
        assert!(matches!(run_inference(&m, s, &cfg), Err(PcnError::NonFinite(_))));
    }

    #[test]
    fn clamped_layers_are_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = PcnModel::glorot(&[2, 3, 2], &[Activation::TeLU; 2], false, &mut rng).unwrap();
        let s = feedforward_init(&m, &[0.4, 0.6], Some(&[1.0, 0.0])).unwrap();
        let out = run_inference(&m, s.clone(), &InferenceConfig::default()).unwrap();
        assert_eq!(out.state.x[0], s.x[0]);
        assert_eq!(out.state.x[2], s.x[2]);
        assert_ne!(out.state.x[1], s.x[1]);
    }
}
