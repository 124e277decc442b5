//! Simplified difference target propagation (`dtp-simple`).
//!
//! Targets flow down through learned feedback maps
//! `g_l(v) = act(Q_l v + c_l)` with the difference correction
//! `t_{l−1} = g_l(t_l) + x_{l−1} − g_l(x_l)`. Forward weights descend the
//! layer-local losses `½‖t_l − f(W_l x_{l−1})‖²`; feedback maps descend a
//! noisy reconstruction loss `½‖g_l(f(W_l x̃)) − x̃‖²`, `x̃ = x_{l−1} + ξ`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::{Activation, Matrix, Vector};
use crate::pcn::model::{LayerGrad, ParamGrads, PcnModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TpConfig {
    pub feedback_lr: f64,
    /// Std of the Gaussian corruption used to train feedback maps.
    pub noise_std: f64,
}

impl Default for TpConfig {
    fn default() -> Self {
        Self {
            feedback_lr: 1e-3,
            noise_std: 0.1,
        }
    }
}

/// Feedback map of layer `l`: `n_l → n_{l−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackLayer {
    pub q: Matrix,
    pub c: Vector,
    pub activation: Activation,
}

impl FeedbackLayer {
    fn apply(&self, v: &[f64]) -> Vector {
        let mut a = self.q.matvec(v);
        a.axpy(1.0, &self.c);
        let act = self.activation;
        a.map(|z| act.f(z))
    }
}

/// Feedback maps for layers `2..=L`; `layers[0]` belongs to layer 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpFeedback {
    pub layers: Vec<FeedbackLayer>,
}

impl TpFeedback {
    /// Glorot-uniform `Q_l`, zero `c_l`, activation of the layer being
    /// reconstructed.
    pub fn init<R: Rng + ?Sized>(model: &PcnModel, rng: &mut R) -> Self {
        let layers = (2..=model.depth())
            .map(|l| {
                let (rows, cols) = (model.layer(l).input_dim(), model.layer(l).output_dim());
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
                FeedbackLayer {
                    q: Matrix::from_vec(rows, cols, data).expect("sized by construction"),
                    c: Vector::zeros(rows),
                    activation: model.layer(l - 1).activation,
                }
            })
            .collect();
        Self { layers }
    }

    /// Identity feedback `g_l(v) = v` (requires equal adjacent widths).
    pub fn identity(model: &PcnModel) -> Result<Self> {
        let layers = (2..=model.depth())
            .map(|l| {
                let layer = model.layer(l);
                if layer.input_dim() != layer.output_dim() {
                    return Err(PcnError::DimensionMismatch {
                        context: "identity feedback",
                        expected: layer.input_dim(),
                        got: layer.output_dim(),
                    });
                }
                Ok(FeedbackLayer {
                    q: Matrix::identity(layer.input_dim()),
                    c: Vector::zeros(layer.input_dim()),
                    activation: Activation::Identity,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// Feedback map of layer `l` (2-based).
    pub fn map(&self, l: usize) -> &FeedbackLayer {
        &self.layers[l - 2]
    }

    fn check(&self, model: &PcnModel) -> Result<()> {
        if self.layers.len() + 1 != model.depth() {
            return Err(PcnError::DimensionMismatch {
                context: "feedback depth",
                expected: model.depth() - 1,
                got: self.layers.len(),
            });
        }
        for (l, fb) in (2..=model.depth()).zip(&self.layers) {
            let layer = model.layer(l);
            if fb.q.shape() != (layer.input_dim(), layer.output_dim()) {
                return Err(PcnError::DimensionMismatch {
                    context: "feedback map shape",
                    expected: layer.input_dim() * layer.output_dim(),
                    got: fb.q.rows() * fb.q.cols(),
                });
            }
        }
        Ok(())
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            out.push(l.q.as_mut_slice());
            out.push(&mut l.c);
        }
        out
    }
}

/// Targets `t_0..t_L` (`t_0` is the input, `t_L` the supplied target).
pub fn tp_targets(model: &PcnModel, feedback: &TpFeedback, input: &[f64], target: &[f64]) -> Result<Vec<Vector>> {
    model.check_input(input)?;
    model.check_target(target)?;
    feedback.check(model)?;
    let (xs, _) = model.forward_all(input);
    Ok(targets_from_activities(model, feedback, &xs, target))
}

fn targets_from_activities(model: &PcnModel, feedback: &TpFeedback, xs: &[Vector], target: &[f64]) -> Vec<Vector> {
    let depth = model.depth();
    let mut t = vec![Vector::default(); depth + 1];
    t[depth] = Vector::from_vec(target.to_vec());
    for l in (2..=depth).rev() {
        let g = feedback.map(l);
        // the correction is formed first so zero output error yields exact x_{l−1}
        let correction = g.apply(&t[l]).sub(&g.apply(&xs[l]));
        t[l - 1] = xs[l - 1].add(&correction);
    }
    t[0] = xs[0].clone();
    t
}

/// Per-layer terms `‖t_l − f(W_l t_{l−1})‖²`; their half-sum is `V_TP`.
pub fn tp_lyapunov_terms(model: &PcnModel, targets: &[Vector]) -> Vec<f64> {
    (1..=model.depth())
        .map(|l| {
            let layer = model.layer(l);
            let act = layer.activation;
            let pred = layer.preactivation(&targets[l - 1]).map(|v| act.f(v));
            targets[l].sub(&pred).norm_sq()
        })
        .collect()
}

/// `V_TP = Σ_l ½‖t_l − f(W_l t_{l−1})‖²`.
pub fn tp_lyapunov(model: &PcnModel, feedback: &TpFeedback, input: &[f64], target: &[f64]) -> Result<f64> {
    let t = tp_targets(model, feedback, input, target)?;
    Ok(0.5 * tp_lyapunov_terms(model, &t).iter().sum::<f64>())
}

/// Result of one sample's forward-weight computation.
#[derive(Debug, Clone)]
pub struct TpSample {
    /// Gradients of the layer-local losses `½‖t_l − f(W_l x_{l−1})‖²`.
    pub grads: ParamGrads,
    /// `‖t_l − f(W_l x_{l−1})‖²`, per layer.
    pub local_losses: Vec<f64>,
    pub targets: Vec<Vector>,
}

pub fn tp_forward_grads(model: &PcnModel, feedback: &TpFeedback, input: &[f64], target: &[f64]) -> Result<TpSample> {
    model.check_input(input)?;
    model.check_target(target)?;
    feedback.check(model)?;
    let (xs, pre) = model.forward_all(input);
    let targets = targets_from_activities(model, feedback, &xs, target);
    let mut local_losses = Vec::with_capacity(model.depth());
    let layers = (1..=model.depth())
        .map(|l| {
            let layer = model.layer(l);
            let act = layer.activation;
            let err = targets[l].sub(&xs[l]);
            local_losses.push(err.norm_sq());
            let delta: Vector = err
                .iter()
                .zip(pre[l - 1].iter())
                .map(|(e, &a)| -(e * act.df(a)))
                .collect::<Vec<_>>()
                .into();
            let mut weights = Matrix::zeros(layer.output_dim(), layer.input_dim());
            weights.add_outer(1.0, &delta, &xs[l - 1]);
            LayerGrad {
                weights,
                bias: layer.bias.as_ref().map(|_| delta),
            }
        })
        .collect();
    Ok(TpSample {
        grads: ParamGrads { layers },
        local_losses,
        targets,
    })
}

/// Gradients of the noisy reconstruction losses w.r.t. `(Q_l, c_l)`, in
/// [`TpFeedback::slices_mut`] order, plus the summed reconstruction loss.
pub fn feedback_grads<R: Rng + ?Sized>(
    model: &PcnModel,
    feedback: &TpFeedback,
    input: &[f64],
    noise_std: f64,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, f64)> {
    model.check_input(input)?;
    feedback.check(model)?;
    let noise = Normal::new(0.0, noise_std.max(0.0)).map_err(|e| PcnError::InvalidConfig(e.to_string()))?;
    let (xs, _) = model.forward_all(input);
    let mut grads = Vec::with_capacity(2 * feedback.layers.len());
    let mut total = 0.0;
    for l in 2..=model.depth() {
        let layer = model.layer(l);
        let fb = feedback.map(l);
        let mut corrupted = xs[l - 1].clone();
        if noise_std > 0.0 {
            for v in corrupted.iter_mut() {
                *v += noise.sample(rng);
            }
        }
        let act_f = layer.activation;
        let y = layer.preactivation(&corrupted).map(|v| act_f.f(v));
        let mut a = fb.q.matvec(&y);
        a.axpy(1.0, &fb.c);
        let act = fb.activation;
        let recon = a.map(|v| act.f(v));
        let err = recon.sub(&corrupted);
        total += 0.5 * err.norm_sq();
        let delta: Vector = err
            .iter()
            .zip(a.iter())
            .map(|(e, &z)| e * act.df(z))
            .collect::<Vec<_>>()
            .into();
        let mut gq = Matrix::zeros(fb.q.rows(), fb.q.cols());
        gq.add_outer(1.0, &delta, &y);
        grads.push(gq.into_vec());
        grads.push(delta.into_vec());
    }
    Ok((grads, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(seed: u64) -> PcnModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PcnModel::glorot(&[3, 4, 4, 2], &[Activation::Tanh; 3], true, &mut rng).unwrap()
    }

    #[test]
    fn zero_output_error_propagates_activities() {
        let m = net(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fb = TpFeedback::init(&m, &mut rng);
        let x = [0.3, 0.6, 0.1];
        let (xs, _) = m.forward_all(&x);
        let t = tp_targets(&m, &fb, &x, &xs[3]).unwrap();
        for l in 0..=3 {
            assert_eq!(t[l], xs[l], "layer {l}");
        }
        let sample = tp_forward_grads(&m, &fb, &x, &xs[3]).unwrap();
        assert_eq!(sample.grads.norm(), 0.0);
        assert!(sample.local_losses.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_feedback_is_pure_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = PcnModel::glorot(&[3, 4, 4, 4], &[Activation::Tanh; 3], true, &mut rng).unwrap();
        let fb = TpFeedback::identity(&m).unwrap();
        let x = [0.5, 0.5, 0.5];
        let (xs, _) = m.forward_all(&x);
        let target = [0.9, -0.4, 0.1, 0.0];
        let t = tp_targets(&m, &fb, &x, &target).unwrap();
        // t_{l−1} = t_l + x_{l−1} − x_l
        let expect2 = t[3].add(&xs[2]).sub(&xs[3]);
        for (a, b) in t[2].iter().zip(expect2.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        let expect1 = t[2].add(&xs[1]).sub(&xs[2]);
        for (a, b) in t[1].iter().zip(expect1.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn local_losses_are_finite() {
        let m = net(5);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let fb = TpFeedback::init(&m, &mut rng);
        let s = tp_forward_grads(&m, &fb, &[0.1, 0.2, 0.3], &[1.0, 0.0]).unwrap();
        assert!(s.local_losses.iter().all(|v| v.is_finite()));
        assert!(s.grads.is_finite());
        let v = tp_lyapunov(&m, &fb, &[0.1, 0.2, 0.3], &[1.0, 0.0]).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn output_layer_gradient_equals_backprop() {
        use crate::baselines::bp::bp_grads;
        use crate::pcn::state::OutputLoss;
        let m = net(7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fb = TpFeedback::init(&m, &mut rng);
        let (x, t) = ([0.4, 0.2, 0.8], [0.3, -0.1]);
        let tp = tp_forward_grads(&m, &fb, &x, &t).unwrap();
        let bp = bp_grads(&m, &x, &t, OutputLoss::SquaredError).unwrap();
        assert_eq!(tp.grads.layers[2], bp.layers[2]);
    }

    #[test]
    fn feedback_grads_match_finite_differences() {
        let m = net(9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let fb = TpFeedback::init(&m, &mut rng);
        let x = [0.7, 0.1, 0.5];
        let (g, _) = feedback_grads(&m, &fb, &x, 0.0, &mut rng).unwrap();
        let loss = |f: &TpFeedback| {
            feedback_grads(&m, f, &x, 0.0, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap()
                .1
        };
        let h = 1e-6;
        for s in 0..g.len() {
            for i in 0..g[s].len() {
                let mut p = fb.clone();
                p.slices_mut()[s][i] += h;
                let mut q = fb.clone();
                q.slices_mut()[s][i] -= h;
                let fd = (loss(&p) - loss(&q)) / (2.0 * h);
                assert!((g[s][i] - fd).abs() <= 1e-6 * fd.abs().max(1e-4));
            }
        }
    }
}
