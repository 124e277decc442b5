//! Per-layer comparison of an update direction with the backprop gradient.

use serde::{Deserialize, Serialize};

use crate::data::DatasetHandle;
use crate::error::Result;
use crate::pcn::inference::InferenceConfig;
use crate::pcn::model::{ParamGrads, PcnModel};
use crate::pcn::state::OutputLoss;
use crate::train::{bp_mean_grads, pc_batch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateGeometry {
    /// `‖dθ − dθ_BP‖ / ‖dθ_BP‖`; missing when the BP gradient vanishes.
    pub rel_error: Vec<Option<f64>>,
    /// Angle in radians; missing when either direction vanishes.
    pub angle: Vec<Option<f64>>,
}

/// Per-layer relative error and angle of `update` against `reference`.
/// Both are compared as given, so pass them with matching sign and scale.
pub fn layer_geometry(update: &ParamGrads, reference: &ParamGrads) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    (0..reference.layers.len())
        .map(|i| {
            let u = update.layer_flat(i);
            let r = reference.layer_flat(i);
            let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let diff = u.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let rel = (r_norm > 0.0).then(|| diff / r_norm);
            let angle = angle_between(&u, &r);
            (rel, angle)
        })
        .unzip()
}

/// Angle between two vectors via `2·atan2(‖â − b̂‖, ‖â + b̂‖)`, which stays
/// accurate near 0 and π where `acos` of the cosine does not.
pub fn angle_between(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (u, v) = (x / na, y / nb);
        minus += (u - v) * (u - v);
        plus += (u + v) * (u + v);
    }
    Some(2.0 * minus.sqrt().atan2(plus.sqrt()))
}

/// PC weight update after inference versus the BP gradient, on the mean
/// over `indices`.
pub fn update_geometry(
    model: &PcnModel,
    data: &DatasetHandle,
    indices: &[usize],
    inference: &InferenceConfig,
) -> Result<UpdateGeometry> {
    let pc = pc_batch(model, data, indices, OutputLoss::SquaredError, inference)?.grads;
    let bp = bp_mean_grads(model, data, indices)?;
    let (rel_error, angle) = layer_geometry(&pc, &bp);
    Ok(UpdateGeometry { rel_error, angle })
}
