//! Paired region-of-attraction sampling for PC and `dtp-simple`.

use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::Result;
use crate::lab::dynamics::Dynamics;
use crate::lab::perturb::{perturbation, PerturbSpec};
use crate::oracle::flat::{write_theta, FlatParams};
use crate::pcn::model::PcnModel;

/// Success: final Lyapunov value within this distance of the equilibrium value.
pub const BASIN_TOL: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct AttractionProblem {
    pub equilibrium: PcnModel,
    pub data: DatasetHandle,
    pub pc: Dynamics,
    pub tp: Dynamics,
    pub lr: f64,
    /// Gradient steps per sampled initialization.
    pub budget: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasinRow {
    pub radius: f64,
    pub fraction_pc: f64,
    pub fraction_tp: f64,
}

/// Samples `directions` unit rays (seeds `seed..seed+directions`) shared by
/// both algorithms and starts from `W* + r·d` for every radius.
///
/// A ray counts as inside the basin at radius `r` only if every smaller
/// sampled radius on it also succeeded, so the estimates are non-increasing
/// in `r` by construction.
pub fn attraction_sample(
    problem: &AttractionProblem,
    radii: &[f64],
    directions: usize,
    seed: u64,
) -> Result<Vec<BasinRow>> {
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let star = FlatParams::from_model(&problem.equilibrium);
    let reference = |dyn_: &Dynamics| -> Result<Option<f64>> {
        let mut m = problem.equilibrium.clone();
        dyn_.descend(&mut m, &problem.data, problem.lr, problem.budget)
    };
    let v_eq = [reference(&problem.pc)?, reference(&problem.tp)?];
    let mut hits = vec![[0usize; 2]; radii.len()];
    for k in 0..directions {
        let d = perturbation(
            star.len(),
            PerturbSpec {
                magnitude: 1.0,
                seed: seed + k as u64,
            },
        );
        let mut alive = [true; 2];
        for &ri in &order {
            let r = radii[ri];
            for (a, dynamics) in [&problem.pc, &problem.tp].into_iter().enumerate() {
                if !alive[a] {
                    continue;
                }
                let ok = if r == 0.0 {
                    v_eq[a].is_some()
                } else {
                    let theta: Vec<f64> = star.theta.iter().zip(&d).map(|(t, u)| t + r * u).collect();
                    let mut m = problem.equilibrium.clone();
                    write_theta(&mut m, &theta)?;
                    let end = dynamics.descend(&mut m, &problem.data, problem.lr, problem.budget)?;
                    matches!((end, v_eq[a]), (Some(v), Some(eq)) if (v - eq).abs() <= BASIN_TOL)
                };
                alive[a] = ok;
                if ok {
                    hits[ri][a] += 1;
                }
            }
        }
    }
    let n = directions.max(1) as f64;
    Ok(radii
        .iter()
        .zip(&hits)
        .map(|(&radius, h)| BasinRow {
            radius,
            fraction_pc: h[0] as f64 / n,
            fraction_tp: h[1] as f64 / n,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::tp::TpFeedback;
    use crate::data::{synth_dataset, SynthKind};
    use crate::numkit::Activation;
    use crate::pcn::inference::InferenceConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn radius_zero_always_succeeds_and_fractions_are_monotone() {
        let data = synth_dataset(SynthKind::Linreg, 8, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = PcnModel::glorot(&[2, 3, 1], &[Activation::Tanh, Activation::Identity], true, &mut rng).unwrap();
        let fb = TpFeedback::init(&m, &mut rng);
        let problem = AttractionProblem {
            equilibrium: m,
            data,
            pc: Dynamics::Pc(InferenceConfig {
                gamma: 0.1,
                max_iters: 100,
                tol: 1e-10,
            }),
            tp: Dynamics::Tp(fb),
            lr: 0.1,
            budget: 20,
        };
        let rows = attraction_sample(&problem, &[0.0, 0.5, 5.0], 4, 0).unwrap();
        assert_eq!(rows[0].fraction_pc, 1.0);
        assert_eq!(rows[0].fraction_tp, 1.0);
        for w in rows.windows(2) {
            assert!(w[1].fraction_pc <= w[0].fraction_pc);
            assert!(w[1].fraction_tp <= w[0].fraction_tp);
        }
    }
}
