//! Full-batch learning dynamics viewed as gradient flows on a Lyapunov value.

use nalgebra::{DMatrix, DVector};

use crate::baselines::tp::{tp_lyapunov, TpFeedback};
use crate::data::DatasetHandle;
use crate::error::{PcnError, Result};
use crate::oracle::flat::{write_theta, FlatParams};
use crate::pcn::inference::InferenceConfig;
use crate::pcn::model::{ParamGrads, PcnModel};
use crate::pcn::state::OutputLoss;
use crate::train::{bp_batch, pc_batch, tp_batch};

/// Which weight dynamics to run, with the Lyapunov value it descends.
#[derive(Debug, Clone)]
pub enum Dynamics {
    /// PC with inference run by `InferenceConfig`; value is the mean
    /// post-inference free energy.
    Pc(InferenceConfig),
    /// Backprop on the squared-error loss; value is the mean `‖y − t‖²`.
    Bp,
    /// `dtp-simple` forward updates with frozen feedback; value is the mean
    /// `V_TP`.
    Tp(TpFeedback),
}

impl Dynamics {
    /// Full-batch value and descent gradient.
    pub fn evaluate(&self, model: &PcnModel, data: &DatasetHandle) -> Result<(f64, ParamGrads)> {
        let all: Vec<usize> = (0..data.len()).collect();
        match self {
            Dynamics::Pc(cfg) => {
                let s = pc_batch(model, data, &all, OutputLoss::SquaredError, cfg)?;
                Ok((s.free_energy, s.grads))
            }
            Dynamics::Bp => {
                let s = bp_batch(model, data, &all, OutputLoss::SquaredError)?;
                Ok((s.free_energy, s.grads))
            }
            Dynamics::Tp(fb) => {
                let s = tp_batch(model, fb, data, &all)?;
                let mut v = 0.0;
                for &i in &all {
                    v += tp_lyapunov(model, fb, data.input(i), &data.target(i))?;
                }
                Ok((v / all.len() as f64, s.grads))
            }
        }
    }

    /// `steps` plain gradient-descent steps of size `lr`; returns the final
    /// value, or `None` if the run left the finite range.
    pub fn descend(&self, model: &mut PcnModel, data: &DatasetHandle, lr: f64, steps: usize) -> Result<Option<f64>> {
        for _ in 0..steps {
            match self.evaluate(model, data) {
                Ok((_, g)) if g.is_finite() => model.apply(&g, -lr),
                Ok(_) | Err(PcnError::NonFinite(_)) => return Ok(None),
                Err(e) => return Err(e),
            }
            if !model.is_finite() {
                return Ok(None);
            }
        }
        match self.evaluate(model, data) {
            Ok((v, _)) if v.is_finite() => Ok(Some(v)),
            Ok(_) | Err(PcnError::NonFinite(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

/// Outcome of [`find_equilibrium`].
#[derive(Debug, Clone)]
pub struct Equilibrium {
    pub model: PcnModel,
    pub value: f64,
    pub grad_norm: f64,
    pub gd_steps: usize,
    pub newton_steps: usize,
}

/// Gradient descent followed by Newton refinement (Hessian from central
/// differences of the gradient) until the gradient norm drops below `tol`.
pub fn find_equilibrium(
    model: PcnModel,
    data: &DatasetHandle,
    dynamics: &Dynamics,
    lr: f64,
    gd_steps: usize,
    tol: f64,
) -> Result<Equilibrium> {
    let mut model = model;
    let (mut value, mut g) = dynamics.evaluate(&model, data)?;
    let mut steps = 0;
    while steps < gd_steps && g.norm() > tol {
        model.apply(&g, -lr);
        (value, g) = dynamics.evaluate(&model, data)?;
        steps += 1;
    }
    let mut newton = 0;
    while g.norm() > tol && newton < 50 {
        let theta = FlatParams::from_model(&model).theta;
        let grad = g.flatten();
        let h = fd_hessian(&model, data, dynamics, &theta, 1e-5)?;
        let n = theta.len();
        let mut step = None;
        // Levenberg damping grows until the step reduces the gradient norm.
        let mut mu = 0.0;
        for _ in 0..12 {
            let a = DMatrix::from_fn(n, n, |i, j| h[i * n + j] + if i == j { mu } else { 0.0 });
            if let Some(d) = a.lu().solve(&DVector::from_column_slice(&grad)) {
                let cand: Vec<f64> = theta.iter().zip(d.iter()).map(|(t, d)| t - d).collect();
                let mut trial = model.clone();
                write_theta(&mut trial, &cand)?;
                if let Ok((v, tg)) = dynamics.evaluate(&trial, data) {
                    if tg.norm() < g.norm() && v.is_finite() {
                        step = Some((trial, v, tg));
                        break;
                    }
                }
            }
            mu = if mu == 0.0 { 1e-8 } else { mu * 10.0 };
        }
        match step {
            Some((m, v, tg)) => {
                model = m;
                value = v;
                g = tg;
            }
            None => break,
        }
        newton += 1;
    }
    Ok(Equilibrium {
        model,
        value,
        grad_norm: g.norm(),
        gd_steps: steps,
        newton_steps: newton,
    })
}

/// Eigenvalues (ascending) of the finite-difference Hessian of the descent
/// gradient at `model`.
pub fn curvature(model: &PcnModel, data: &DatasetHandle, dynamics: &Dynamics) -> Result<Vec<f64>> {
    let theta = FlatParams::from_model(model).theta;
    let n = theta.len();
    let h = fd_hessian(model, data, dynamics, &theta, 1e-5)?;
    let eig = nalgebra::SymmetricEigen::new(DMatrix::from_row_slice(n, n, &h));
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Row-major symmetrized Jacobian of the descent gradient.
fn fd_hessian(model: &PcnModel, data: &DatasetHandle, dynamics: &Dynamics, theta: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = theta.len();
    let mut out = vec![0.0; n * n];
    let mut probe = model.clone();
    let mut t = theta.to_vec();
    for j in 0..n {
        t[j] = theta[j] + h;
        write_theta(&mut probe, &t)?;
        let gp = dynamics.evaluate(&probe, data)?.1.flatten();
        t[j] = theta[j] - h;
        write_theta(&mut probe, &t)?;
        let gm = dynamics.evaluate(&probe, data)?.1.flatten();
        t[j] = theta[j];
        for i in 0..n {
            out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthKind};
    use crate::numkit::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bp_equilibrium_on_linear_regression() {
        let data = synth_dataset(SynthKind::Linreg, 16, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = PcnModel::glorot(&[2, 1], &[Activation::Identity], true, &mut rng).unwrap();
        let eq = find_equilibrium(m, &data, &Dynamics::Bp, 0.5, 50, 1e-10).unwrap();
        assert!(eq.grad_norm <= 1e-10, "{}", eq.grad_norm);
    }

    #[test]
    fn bp_curvature_is_the_design_covariance() {
        // The BP descent gradient is that of mean ½‖y − t‖², so on a linear
        // model its Jacobian is E[[x;1][x;1]ᵀ].
        let data = synth_dataset(SynthKind::Linreg, 16, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = PcnModel::glorot(&[2, 1], &[Activation::Identity], true, &mut rng).unwrap();
        let ev = curvature(&m, &data, &Dynamics::Bp).unwrap();
        let n = data.len() as f64;
        let mut c = DMatrix::<f64>::zeros(3, 3);
        for i in 0..data.len() {
            let x = data.input(i);
            let z = DVector::from_vec(vec![x[0], x[1], 1.0]);
            c += &z * z.transpose() * (1.0 / n);
        }
        let mut want: Vec<f64> = c.symmetric_eigen().eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
