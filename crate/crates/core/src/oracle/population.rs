//! Seeded population of tiny trained networks for the update comparison.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{teacher_dataset, DatasetHandle};
use crate::error::{PcnError, Result};
use crate::numkit::Activation;
use crate::oracle::bundle::assemble_at_convergence;
use crate::oracle::updates::{qn_updates, UpdateComparison, DEFAULT_LAMBDA};
use crate::pcn::inference::InferenceConfig;
use crate::pcn::model::PcnModel;
use crate::train::{train, Algorithm, OptimizerConfig, TrainConfig};

/// Shape of one population member, fully determined by its seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub seed: u64,
    pub dims: Vec<usize>,
    /// Hidden activation; the output layer is linear.
    pub activation: Activation,
    pub samples: usize,
}

/// Population settings. Defaults: 2–3 layers, widths 2–8, 8–32 samples,
/// Tanh or Sigmoid hidden units, PC-SE training to a near-converged state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub seeds: Vec<u64>,
    pub lambda: f64,
    pub train_steps: usize,
    pub train_lr: f64,
    pub inference: InferenceConfig,
    /// Force every instance to a single linear-output layer (block-diagonal
    /// curvature equals the full Gauss-Newton matrix).
    pub single_layer: bool,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        Self {
            seeds: (0..200).collect(),
            lambda: DEFAULT_LAMBDA,
            train_steps: 400,
            train_lr: 0.2,
            inference: InferenceConfig {
                gamma: 0.1,
                max_iters: 1000,
                tol: 1e-10,
            },
            single_layer: false,
        }
    }
}

impl InstanceSpec {
    pub fn sample(seed: u64, single_layer: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = if single_layer { 1 } else { rng.random_range(2..=3) };
        let mut dims = vec![rng.random_range(2..=4)];
        for _ in 1..depth {
            dims.push(rng.random_range(2..=8));
        }
        dims.push(rng.random_range(1..=2));
        let activation = if rng.random_bool(0.5) {
            Activation::Tanh
        } else {
            Activation::Sigmoid
        };
        let samples = rng.random_range(8..=32);
        Self {
            seed,
            dims,
            activation,
            samples,
        }
    }

    pub fn activations(&self) -> Vec<Activation> {
        let depth = self.dims.len() - 1;
        (0..depth)
            .map(|l| {
                if l + 1 == depth {
                    Activation::Identity
                } else {
                    self.activation
                }
            })
            .collect()
    }

    /// Inputs uniform in `[0, 1]`, targets from a random teacher of the same
    /// architecture.
    pub fn dataset(&self) -> Result<DatasetHandle> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xda7a);
        let teacher = PcnModel::glorot(&self.dims, &self.activations(), true, &mut rng)?;
        teacher_dataset(&teacher, self.samples, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub spec: InstanceSpec,
    pub comparison: UpdateComparison,
    pub min_eig_gn: f64,
    pub grad_check: f64,
}

/// Trains the instance's student with full-batch PC-SE and compares updates
/// at the final weights.
pub fn run_instance(spec: &InstanceSpec, cfg: &PopulationConfig) -> Result<InstanceResult> {
    let data = spec.dataset()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let student = PcnModel::glorot(&spec.dims, &spec.activations(), true, &mut rng)?;
    let tcfg = TrainConfig {
        algorithm: Algorithm::PcSe,
        optimizer: OptimizerConfig::sgd(cfg.train_lr),
        batch_size: data.len(),
        epochs: cfg.train_steps,
        seed: spec.seed,
        shuffle: false,
        inference: cfg.inference,
        log_every: usize::MAX,
        run_id: format!("oracle-{}", spec.seed),
        ..TrainConfig::default()
    };
    let trained = train(student, &data, None, &tcfg)?;
    if let Some(msg) = trained.divergence {
        return Err(PcnError::NonFinite(msg));
    }
    let bundle = assemble_at_convergence(&trained.model, &data, &cfg.inference)?;
    let comparison = qn_updates(&bundle, cfg.lambda)?;
    Ok(InstanceResult {
        spec: spec.clone(),
        comparison,
        min_eig_gn: bundle.min_eig_gn,
        grad_check: bundle.grad_check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummary {
    pub instances: usize,
    /// Instances whose systems could not be solved; they count as failures.
    pub failed: usize,
    pub frac_pc_le_tp: f64,
    pub frac_pc_no_grad_e_le_tp: f64,
    pub median_cos_pc_qn: f64,
    pub median_cos_bp_qn: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn summarize(results: &[Result<InstanceResult>]) -> PopulationSummary {
    let ok: Vec<&InstanceResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let n = results.len().max(1) as f64;
    let count = |f: &dyn Fn(&UpdateComparison) -> bool| ok.iter().filter(|r| f(&r.comparison)).count() as f64 / n;
    PopulationSummary {
        instances: results.len(),
        failed: results.len() - ok.len(),
        frac_pc_le_tp: count(&|c| c.e_pc <= c.e_tp),
        frac_pc_no_grad_e_le_tp: count(&|c| c.e_pc_no_grad_e <= c.e_tp),
        median_cos_pc_qn: median(ok.iter().map(|r| r.comparison.cos_pc_qn).collect()),
        median_cos_bp_qn: median(ok.iter().map(|r| r.comparison.cos_bp_qn).collect()),
    }
}

/// Runs every seed in order; per-instance errors are kept, not raised.
pub fn run_population(cfg: &PopulationConfig) -> Vec<Result<InstanceResult>> {
    cfg.seeds
        .iter()
        .map(|&s| run_instance(&InstanceSpec::sample(s, cfg.single_layer), cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs_respect_population_bounds() {
        for seed in 0..200 {
            let s = InstanceSpec::sample(seed, false);
            assert!((3..=4).contains(&s.dims.len()));
            assert!(s.dims.iter().all(|&w| w <= 8));
            assert!(s.samples <= 32);
            assert!(matches!(s.activation, Activation::Tanh | Activation::Sigmoid));
        }
    }

    #[test]
    fn single_instance_is_deterministic() {
        let cfg = PopulationConfig {
            seeds: vec![3],
            train_steps: 20,
            ..PopulationConfig::default()
        };
        let a = run_population(&cfg);
        let b = run_population(&cfg);
        assert_eq!(a[0].as_ref().unwrap(), b[0].as_ref().unwrap());
        assert!(a[0].as_ref().unwrap().comparison.verify());
    }

    #[test]
    fn single_layer_population_has_zero_tp_error() {
        let cfg = PopulationConfig {
            seeds: vec![0, 1, 2],
            train_steps: 20,
            single_layer: true,
            ..PopulationConfig::default()
        };
        for r in run_population(&cfg) {
            assert_eq!(r.unwrap().comparison.e_tp, 0.0);
        }
    }
}
