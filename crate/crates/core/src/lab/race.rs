//! Epochs-to-criterion races between training algorithms.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::Result;
use crate::numkit::Activation;
use crate::pcn::model::PcnModel;
use crate::train::{train, Algorithm, TrainConfig};

/// Architecture shared by every contestant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub bias: bool,
}

impl Architecture {
    /// Glorot-uniform initialization seeded by `seed` alone.
    pub fn init(&self, seed: u64) -> Result<PcnModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PcnModel::glorot(&self.dims, &self.activations, self.bias, &mut rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaceRow {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// First epoch whose validation accuracy reaches the threshold fraction of
    /// the run's own best; `None` when never reached within the budget.
    pub epochs_to_criterion: Option<u64>,
    pub best_val: Option<f64>,
    pub best_epoch: Option<u64>,
    pub wall_secs: f64,
    /// Validation accuracy per epoch.
    pub curve: Vec<f64>,
    pub diverged: bool,
}

/// First (1-based) epoch with `curve[e] ≥ fraction · max(curve)`.
pub fn epochs_to_fraction(curve: &[f64], fraction: f64) -> Option<u64> {
    let best = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    curve.iter().position(|&v| v >= fraction * best).map(|i| i as u64 + 1)
}

/// Trains every algorithm in `algs` from the same initialization for every
/// seed in `seeds`; `base` supplies optimizer, batch size and inference
/// settings, and its `epochs` is the budget.
pub fn convergence_race(
    arch: &Architecture,
    train_set: &DatasetHandle,
    val_set: &DatasetHandle,
    algs: &[Algorithm],
    seeds: &[u64],
    base: &TrainConfig,
    fraction: f64,
) -> Result<Vec<RaceRow>> {
    let mut rows = Vec::with_capacity(algs.len() * seeds.len());
    for &seed in seeds {
        for &algorithm in algs {
            let cfg = TrainConfig {
                algorithm,
                seed,
                ..base.clone()
            };
            let start = Instant::now();
            let out = train(arch.init(seed)?, train_set, Some(val_set), &cfg)?;
            let curve = out.log.val_curve();
            let best = out.best_val();
            rows.push(RaceRow {
                algorithm,
                seed,
                epochs_to_criterion: epochs_to_fraction(&curve, fraction),
                best_val: best.map(|b| b.0),
                best_epoch: best.map(|b| b.1),
                wall_secs: start.elapsed().as_secs_f64(),
                curve,
                diverged: out.divergence.is_some(),
            });
        }
    }
    Ok(rows)
}

/// Median of the epochs-to-criterion of one algorithm; unreached runs count
/// as `budget + 1`.
pub fn median_epochs(rows: &[RaceRow], algorithm: Algorithm, budget: u64) -> Option<f64> {
    let mut v: Vec<f64> = rows
        .iter()
        .filter(|r| r.algorithm == algorithm)
        .map(|r| r.epochs_to_criterion.unwrap_or(budget + 1) as f64)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}
