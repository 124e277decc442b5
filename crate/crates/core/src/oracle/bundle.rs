//! Dense first- and second-order objects of tiny networks.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::baselines::bp::{backward, bp_grads, output_loss};
use crate::data::DatasetHandle;
use crate::error::{PcnError, Result};
use crate::numkit::{Matrix, Vector};
use crate::oracle::flat::{write_theta, FlatParams};
use crate::pcn::inference::{run_inference, InferenceConfig};
use crate::pcn::learning::energy_weight_grads;
use crate::pcn::model::{ParamGrads, PcnModel};
use crate::pcn::state::{feedforward_init, PcnState};

/// Dense assembly is refused above this many parameters.
pub const PARAM_GUARD: usize = 2000;
/// Central-difference step for Hessians (of analytic gradients).
pub const HESSIAN_STEP: f64 = 1e-4;
/// Central-difference step for gradient checks.
pub const GRADIENT_STEP: f64 = 1e-5;

/// All quantities refer to the batch-mean objectives
/// `L(θ) = (1/n) Σ ½‖y_i − t_i‖²` and
/// `Ẽ(θ) = (1/n) Σ ½ Σ_{l<L} ‖x_l^i − f(W_l x_{l−1}^i)‖²`, the latter with the
/// activities frozen at their converged inference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianBundle {
    pub grad_l: Vector,
    pub grad_e: Vector,
    pub h: Matrix,
    pub h_tilde: Matrix,
    /// Per-sample output Jacobians stacked row-wise and scaled by `1/√n`, so
    /// that `H_GN = JᵀJ`.
    pub j: Matrix,
    pub h_gn: Matrix,
    /// `H_GN` with every cross-layer block zeroed.
    pub b: Matrix,
    /// Mean gradient of the full PC objective at the converged states; its
    /// negative is the learning-phase update.
    pub grad_pc: Vector,
    /// Smallest eigenvalue of `H_GN`.
    pub min_eig_gn: f64,
    /// Largest relative deviation of `grad_l`/`grad_e` from central differences.
    pub grad_check: f64,
    pub layer_ranges: Vec<(usize, usize)>,
}

/// Converged supervised states for every sample of `data`.
pub fn converged_states(model: &PcnModel, data: &DatasetHandle, cfg: &InferenceConfig) -> Result<Vec<PcnState>> {
    (0..data.len())
        .map(|i| {
            let target = data.target(i);
            let s = feedforward_init(model, data.input(i), Some(&target))?;
            Ok(run_inference(model, s, cfg)?.state)
        })
        .collect()
}

fn mean_loss(model: &PcnModel, data: &DatasetHandle) -> f64 {
    let mut acc = 0.0;
    for i in 0..data.len() {
        acc += output_loss(
            model,
            data.input(i),
            &data.target(i),
            crate::pcn::state::OutputLoss::SquaredError,
        );
    }
    acc / data.len() as f64
}

fn mean_loss_grad(model: &PcnModel, data: &DatasetHandle) -> Result<Vector> {
    let mut g = ParamGrads::zeros_like(model);
    for i in 0..data.len() {
        g.axpy(
            1.0,
            &bp_grads(
                model,
                data.input(i),
                &data.target(i),
                crate::pcn::state::OutputLoss::SquaredError,
            )?,
        );
    }
    g.scale(1.0 / data.len() as f64);
    Ok(g.flatten())
}

/// Hidden-layer energy `Ẽ` with activities held at `states`.
fn residual_energy(model: &PcnModel, states: &[PcnState]) -> f64 {
    let depth = model.depth();
    let mut acc = 0.0;
    for s in states {
        for l in 1..depth {
            let layer = model.layer(l);
            let act = layer.activation;
            let pred = layer.preactivation(&s.x[l - 1]).map(|v| act.f(v));
            acc += 0.5 * s.x[l].sub(&pred).norm_sq();
        }
    }
    acc / states.len() as f64
}

/// Returns `(∇Ẽ, ∇F_impl)` at fixed states, both batch means.
fn state_grads(model: &PcnModel, states: &[PcnState]) -> (Vector, Vector) {
    let mut full = ParamGrads::zeros_like(model);
    for s in states {
        let mut fresh = s.clone();
        fresh.refresh_from(model, 1);
        full.axpy(1.0, &energy_weight_grads(model, &fresh));
    }
    full.scale(1.0 / states.len() as f64);
    let mut resid = full.clone();
    let last = resid.layers.last_mut().expect("depth >= 1");
    last.weights = Matrix::zeros(last.weights.rows(), last.weights.cols());
    if let Some(b) = last.bias.as_mut() {
        *b = Vector::zeros(b.len());
    }
    (resid.flatten(), full.flatten())
}

/// Symmetrized central-difference Jacobian of `grad` at `theta`.
fn fd_jacobian(theta: &[f64], h: f64, mut grad: impl FnMut(&[f64]) -> Result<Vector>) -> Result<Matrix> {
    let n = theta.len();
    let mut out = Matrix::zeros(n, n);
    let mut t = theta.to_vec();
    for j in 0..n {
        t[j] = theta[j] + h;
        let gp = grad(&t)?;
        t[j] = theta[j] - h;
        let gm = grad(&t)?;
        t[j] = theta[j];
        for i in 0..n {
            out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    out.symmetrize();
    Ok(out)
}

fn fd_gradient(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut t = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        t[j] = theta[j] + h;
        let fp = f(&t)?;
        t[j] = theta[j] - h;
        let fm = f(&t)?;
        t[j] = theta[j];
        out.push((fp - fm) / (2.0 * h));
    }
    Ok(out)
}

fn rel_dev(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub(crate) fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub(crate) fn eigenvalues(m: &Matrix) -> Vec<f64> {
    SymmetricEigen::new(to_na(m)).eigenvalues.iter().copied().collect()
}

/// Assembles the bundle at `model`, with `Ẽ` frozen at `states` (one per
/// sample of `data`).
pub fn assemble_bundle(model: &PcnModel, data: &DatasetHandle, states: &[PcnState]) -> Result<HessianBundle> {
    let p = model.param_count();
    if p > PARAM_GUARD {
        return Err(PcnError::ParameterGuard {
            count: p,
            limit: PARAM_GUARD,
        });
    }
    if data.is_empty() || states.len() != data.len() {
        return Err(PcnError::DimensionMismatch {
            context: "one converged state per sample",
            expected: data.len(),
            got: states.len(),
        });
    }
    let flat = FlatParams::from_model(model);
    let theta = flat.theta.as_slice();
    let with = |t: &[f64]| -> Result<PcnModel> {
        let mut m = model.clone();
        write_theta(&mut m, t)?;
        Ok(m)
    };

    let grad_l = mean_loss_grad(model, data)?;
    let (grad_e, grad_pc) = state_grads(model, states);

    let fd_l = fd_gradient(theta, GRADIENT_STEP, |t| Ok(mean_loss(&with(t)?, data)))?;
    let fd_e = fd_gradient(theta, GRADIENT_STEP, |t| Ok(residual_energy(&with(t)?, states)))?;
    let grad_check = rel_dev(&grad_l, &fd_l).max(if grad_e.max_abs() > 0.0 {
        rel_dev(&grad_e, &fd_e)
    } else {
        0.0
    });

    let h = fd_jacobian(theta, HESSIAN_STEP, |t| mean_loss_grad(&with(t)?, data))?;
    let h_tilde = fd_jacobian(theta, HESSIAN_STEP, |t| Ok(state_grads(&with(t)?, states).0))?;

    let n = data.len();
    let out_dim = model.output_dim();
    let scale = 1.0 / (n as f64).sqrt();
    let mut j = Matrix::zeros(n * out_dim, p);
    for i in 0..n {
        for k in 0..out_dim {
            let row = backward(model, data.input(i), &Vector::one_hot(out_dim, k))?.flatten();
            for (dst, v) in j.row_mut(i * out_dim + k).iter_mut().zip(row.iter()) {
                *dst = v * scale;
            }
        }
    }
    let mut h_gn = crate::numkit::matmul(&j.transpose(), &j)?;
    h_gn.symmetrize();

    let ranges: Vec<(usize, usize)> = flat.layer_ranges().into_iter().map(|r| (r.start, r.end)).collect();
    let layer_of = |idx: usize| ranges.iter().position(|&(s, e)| idx >= s && idx < e);
    let mut b = h_gn.clone();
    for r in 0..p {
        for c in 0..p {
            if layer_of(r) != layer_of(c) {
                b[(r, c)] = 0.0;
            }
        }
    }

    for (name, m) in [("H", &h), ("H_tilde", &h_tilde), ("H_GN", &h_gn)] {
        if !m.is_finite() {
            return Err(PcnError::NonFinite(format!("{name} has non-finite entries")));
        }
    }
    if !(grad_l.is_finite() && grad_e.is_finite()) {
        return Err(PcnError::NonFinite("bundle gradients".into()));
    }
    let min_eig_gn = eigenvalues(&h_gn).into_iter().fold(f64::INFINITY, f64::min);

    Ok(HessianBundle {
        grad_l,
        grad_e,
        h,
        h_tilde,
        j,
        h_gn,
        b,
        grad_pc,
        min_eig_gn,
        grad_check,
        layer_ranges: ranges,
    })
}

/// Runs inference to `cfg` on every sample, then assembles the bundle.
pub fn assemble_at_convergence(model: &PcnModel, data: &DatasetHandle, cfg: &InferenceConfig) -> Result<HessianBundle> {
    let states = converged_states(model, data, cfg)?;
    assemble_bundle(model, data, &states)
}

/// Hessian of the batch-mean squared-error loss by a second central
/// difference of the loss itself (no analytic gradient involved).
pub fn loss_hessian_double_fd(model: &PcnModel, data: &DatasetHandle, h: f64) -> Result<Matrix> {
    let theta = FlatParams::from_model(model).theta.into_vec();
    let n = theta.len();
    let f = |t: &[f64]| -> Result<f64> {
        let mut m = model.clone();
        write_theta(&mut m, t)?;
        Ok(mean_loss(&m, data))
    };
    let mut out = Matrix::zeros(n, n);
    let mut t = theta.clone();
    for i in 0..n {
        for j in i..n {
            let mut eval = |si: f64, sj: f64| -> Result<f64> {
                t.copy_from_slice(&theta);
                t[i] += si * h;
                t[j] += sj * h;
                f(&t)
            };
            let v = (eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?) / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthKind};
    use crate::numkit::Activation;
    use crate::pcn::model::Layer;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> InferenceConfig {
        InferenceConfig {
            gamma: 0.1,
            max_iters: 2000,
            tol: 1e-12,
        }
    }

    #[test]
    fn single_parameter_curvature() {
        let m = PcnModel::new(vec![Layer {
            weights: Matrix::from_rows(&[vec![0.3]]),
            bias: None,
            activation: Activation::Identity,
        }])
        .unwrap();
        let data = DatasetHandle::regression(Matrix::from_rows(&[vec![1.0]]), Matrix::from_rows(&[vec![0.7]])).unwrap();
        let b = assemble_at_convergence(&m, &data, &cfg()).unwrap();
        assert!((b.h[(0, 0)] - 1.0).abs() < 1e-9);
        assert!((b.h_gn[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(b.b, b.h_gn);
        assert_eq!(b.h_tilde[(0, 0)], 0.0);
    }

    #[test]
    fn linear_single_layer_hessian_is_gauss_newton() {
        let data = synth_dataset(SynthKind::Linreg, 12, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = PcnModel::glorot(&[2, 1], &[Activation::Identity], true, &mut rng).unwrap();
        let b = assemble_at_convergence(&m, &data, &cfg()).unwrap();
        let rel = b.h.sub(&b.h_gn).frobenius() / b.h_gn.frobenius();
        assert!(rel <= 1e-5, "{rel}");
    }

    #[test]
    fn tanh_hessian_matches_double_difference() {
        let data = synth_dataset(SynthKind::Linreg, 6, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = PcnModel::glorot(&[2, 2, 1], &[Activation::Tanh, Activation::Identity], true, &mut rng).unwrap();
        let b = assemble_at_convergence(&m, &data, &cfg()).unwrap();
        let oracle = loss_hessian_double_fd(&m, &data, 1e-4).unwrap();
        let rel = b.h.sub(&oracle).frobenius() / oracle.frobenius();
        assert!(rel <= 1e-3, "{rel}");
        assert!(b.grad_check < 1e-6, "{}", b.grad_check);
    }

    #[test]
    fn structural_invariants() {
        let data = synth_dataset(SynthKind::Linreg, 8, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = PcnModel::glorot(
            &[2, 3, 2, 1],
            &[Activation::Sigmoid, Activation::Tanh, Activation::Identity],
            true,
            &mut rng,
        )
        .unwrap();
        let b = assemble_at_convergence(&m, &data, &cfg()).unwrap();
        for mat in [&b.h, &b.h_tilde, &b.h_gn] {
            assert!(mat.max_asymmetry() <= 1e-7);
        }
        assert!(b.min_eig_gn >= -1e-8);
        let jtj = crate::numkit::matmul(&b.j.transpose(), &b.j).unwrap();
        assert!(jtj.sub(&b.h_gn).frobenius() < 1e-12);
        for (r, c) in [(0usize, 12usize), (12, 0), (18, 3)] {
            assert_eq!(b.b[(r, c)], 0.0);
        }
        assert_eq!(b.b[(0, 1)], b.h_gn[(0, 1)]);
        assert!(b.grad_check < 1e-6, "{}", b.grad_check);
    }

    #[test]
    fn guard_rejects_large_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = PcnModel::glorot(&[50, 50], &[Activation::Tanh], false, &mut rng).unwrap();
        let data = DatasetHandle::regression(Matrix::zeros(1, 50), Matrix::zeros(1, 50)).unwrap();
        assert!(matches!(
            assemble_at_convergence(&m, &data, &cfg()),
            Err(PcnError::ParameterGuard { count: 2500, .. })
        ));
    }
}
