//! Recovery from weight perturbations around an equilibrium.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::{PcnError, Result};
use crate::lab::dynamics::Dynamics;
use crate::lab::trajectory::{fit_decay, DecayFit, TrajectoryLog};
use crate::oracle::flat::{write_theta, FlatParams};
use crate::pcn::model::PcnModel;

/// Largest gradient norm accepted at the starting equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    /// Euclidean norm of the perturbation over all parameters.
    pub magnitude: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    pub trajectory: TrajectoryLog,
    /// `None` when too few samples sit above the noise floor (e.g. zero
    /// perturbation).
    pub fit: Option<DecayFit>,
    pub noise_floor: f64,
    pub diverged: bool,
}

/// Gaussian direction of norm `magnitude`.
pub fn perturbation(len: usize, spec: PerturbSpec) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let v: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x * spec.magnitude / norm).collect()
}

/// Perturbs `equilibrium`, runs `horizon` full-batch gradient steps of size
/// `lr` and fits the log-distance to the equilibrium.
///
/// The noise floor is the float resolution of `W*`; the fit uses the leading
/// samples above ten times that floor.
pub fn perturb_and_recover(
    equilibrium: &PcnModel,
    data: &DatasetHandle,
    dynamics: &Dynamics,
    spec: PerturbSpec,
    lr: f64,
    horizon: usize,
) -> Result<Recovery> {
    let (_, g0) = dynamics.evaluate(equilibrium, data)?;
    if g0.norm() > EQUILIBRIUM_TOL {
        return Err(PcnError::InvalidConfig(format!(
            "starting model is not at equilibrium: gradient norm {:.3e}",
            g0.norm()
        )));
    }
    let star = FlatParams::from_model(equilibrium);
    let delta = perturbation(star.len(), spec);
    let theta: Vec<f64> = star.theta.iter().zip(&delta).map(|(a, b)| a + b).collect();
    let mut model = equilibrium.clone();
    write_theta(&mut model, &theta)?;

    let mut trajectory = TrajectoryLog::default();
    let mut diverged = false;
    for t in 0..=horizon as u64 {
        let (v, g) = match dynamics.evaluate(&model, data) {
            Ok(r) => r,
            Err(PcnError::NonFinite(_)) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let dist = model.distance(equilibrium);
        if !(v.is_finite() && dist.is_finite() && g.is_finite()) {
            diverged = true;
            break;
        }
        trajectory.push(t, v, dist, g.norm());
        if t < horizon as u64 {
            model.apply(&g, -lr);
        }
    }
    let noise_floor = f64::EPSILON * (1.0 + star.theta.norm());
    let fit = fit_decay(&trajectory.times(), &trajectory.distances(), noise_floor);
    Ok(Recovery {
        trajectory,
        fit,
        noise_floor,
        diverged,
    })
}
