//! Deterministic synthetic datasets, pure functions of `(kind, n, seed)`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::dataset::DatasetHandle;
use crate::error::{PcnError, Result};
use crate::numkit::Matrix;
use crate::pcn::model::PcnModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Two isotropic blobs around (0.3, 0.3) and (0.7, 0.7), resampled so
    /// every point is at least [`TWO_GAUSSIANS_MARGIN`] from the line
    /// `x₁ + x₂ = 1`.
    TwoGaussians,
    /// Four uniform disks at the corners of a square, diagonal pairs sharing
    /// a label (XOR). Opposite disks are exact point reflections through
    /// (0.5, 0.5), which caps any linear separator at 75% accuracy when `n`
    /// is a multiple of 4.
    XorMoons,
    /// `y = 0.8 x₁ − 0.5 x₂ + 0.2 + N(0, 0.05²)` with `x ~ U[0,1]²`.
    Linreg,
}

pub const TWO_GAUSSIANS_MARGIN: f64 = 0.05;
const TWO_GAUSSIANS_STD: f64 = 0.1;
const XOR_RADIUS: f64 = 0.18;
const LINREG_NOISE: f64 = 0.05;

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::TwoGaussians => "two_gaussians",
            SynthKind::XorMoons => "xor_moons",
            SynthKind::Linreg => "linreg",
        })
    }
}

impl FromStr for SynthKind {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_gaussians" => Ok(SynthKind::TwoGaussians),
            "xor_moons" => Ok(SynthKind::XorMoons),
            "linreg" => Ok(SynthKind::Linreg),
            other => Err(PcnError::InvalidConfig(format!("unknown synthetic dataset `{other}`"))),
        }
    }
}

/// Regression set with inputs uniform in `[0, 1]^d` and noiseless targets
/// `teacher.forward(x)`, so `teacher` itself is an exact zero-loss fit.
pub fn teacher_dataset<R: Rng + ?Sized>(teacher: &PcnModel, n: usize, rng: &mut R) -> Result<DatasetHandle> {
    let d = teacher.input_dim();
    let features: Vec<f64> = (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect();
    let features = Matrix::from_vec(n, d, features)?;
    let mut targets = Matrix::zeros(n, teacher.output_dim());
    for i in 0..n {
        let y = teacher.forward(features.row(i));
        targets.row_mut(i).copy_from_slice(&y);
    }
    DatasetHandle::regression(features, targets)
}

pub fn synth_dataset(kind: SynthKind, n: usize, seed: u64) -> Result<DatasetHandle> {
    if n < 4 {
        return Err(PcnError::InvalidConfig(format!(
            "synthetic datasets need n >= 4, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        SynthKind::TwoGaussians => two_gaussians(n, &mut rng),
        SynthKind::XorMoons => xor_clusters(n, &mut rng),
        SynthKind::Linreg => linreg(n, &mut rng),
    }
}

fn two_gaussians(n: usize, rng: &mut ChaCha8Rng) -> Result<DatasetHandle> {
    let noise = Normal::new(0.0, TWO_GAUSSIANS_STD).expect("valid std");
    let offset = TWO_GAUSSIANS_MARGIN * 2f64.sqrt();
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let center = if class == 0 { 0.3 } else { 0.7 };
        loop {
            let p = [center + noise.sample(rng), center + noise.sample(rng)];
            let s = p[0] + p[1] - 1.0;
            let inside = p.iter().all(|v| (0.0..=1.0).contains(v));
            let clear = if class == 0 { s <= -offset } else { s >= offset };
            if inside && clear {
                data.extend_from_slice(&p);
                break;
            }
        }
        labels.push(class);
    }
    DatasetHandle::classification(Matrix::from_vec(n, 2, data)?, labels, 2)
}

fn disk_point(rng: &mut ChaCha8Rng, cx: f64, cy: f64) -> [f64; 2] {
    loop {
        let dx = rng.random_range(-XOR_RADIUS..XOR_RADIUS);
        let dy = rng.random_range(-XOR_RADIUS..XOR_RADIUS);
        if dx * dx + dy * dy <= XOR_RADIUS * XOR_RADIUS {
            return [cx + dx, cy + dy];
        }
    }
}

fn xor_clusters(n: usize, rng: &mut ChaCha8Rng) -> Result<DatasetHandle> {
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        // a (0,0)-corner point and a (0,1)-corner point, then their reflections
        let a = disk_point(rng, 0.25, 0.25);
        let b = disk_point(rng, 0.25, 0.75);
        let quad = [
            (a, 0),
            (b, 1),
            ([1.0 - a[0], 1.0 - a[1]], 0),
            ([1.0 - b[0], 1.0 - b[1]], 1),
        ];
        for (p, y) in quad {
            if i == n {
                break;
            }
            data.extend_from_slice(&p);
            labels.push(y);
            i += 1;
        }
    }
    DatasetHandle::classification(Matrix::from_vec(n, 2, data)?, labels, 2)
}

fn linreg(n: usize, rng: &mut ChaCha8Rng) -> Result<DatasetHandle> {
    let noise = Normal::new(0.0, LINREG_NOISE).expect("valid std");
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random_range(0.0..1.0);
        let b: f64 = rng.random_range(0.0..1.0);
        x.extend_from_slice(&[a, b]);
        y.push(0.8 * a - 0.5 * b + 0.2 + noise.sample(rng));
    }
    DatasetHandle::regression(Matrix::from_vec(n, 2, x)?, Matrix::from_vec(n, 1, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_accuracy(d: &DatasetHandle, w: [f64; 2], c: f64) -> f64 {
        let mut correct = 0;
        for i in 0..d.len() {
            let x = d.input(i);
            let pred = usize::from(w[0] * x[0] + w[1] * x[1] + c > 0.0);
            correct += usize::from(pred == d.labels()[i]);
        }
        correct as f64 / d.len() as f64
    }

    /// Best accuracy over unit directions on a 1° grid, every threshold
    /// between consecutive projections, and both label orientations.
    fn best_linear_accuracy(d: &DatasetHandle) -> f64 {
        let mut best: f64 = 0.0;
        for deg in 0..360 {
            let th = (deg as f64).to_radians();
            let w = [th.cos(), th.sin()];
            let mut proj: Vec<f64> = (0..d.len())
                .map(|i| w[0] * d.input(i)[0] + w[1] * d.input(i)[1])
                .collect();
            proj.sort_by(f64::total_cmp);
            let mut cuts = vec![proj[0] - 1.0, proj[proj.len() - 1] + 1.0];
            cuts.extend(proj.windows(2).map(|p| 0.5 * (p[0] + p[1])));
            for t in cuts {
                let acc = linear_accuracy(d, w, -t);
                best = best.max(acc).max(1.0 - acc);
            }
        }
        best
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in [SynthKind::TwoGaussians, SynthKind::XorMoons, SynthKind::Linreg] {
            let a = synth_dataset(kind, 64, 3).unwrap();
            let b = synth_dataset(kind, 64, 3).unwrap();
            assert_eq!(a, b);
            let c = synth_dataset(kind, 64, 4).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn two_gaussians_fixed_separator_is_perfect() {
        for seed in 0..5 {
            let d = synth_dataset(SynthKind::TwoGaussians, 200, seed).unwrap();
            assert_eq!(linear_accuracy(&d, [1.0, 1.0], -1.0), 1.0);
        }
    }

    #[test]
    fn xor_has_no_good_linear_separator() {
        for seed in 0..3 {
            let d = synth_dataset(SynthKind::XorMoons, 200, seed).unwrap();
            let best = best_linear_accuracy(&d);
            assert!(best <= 0.75, "seed {seed}: {best}");
        }
    }

    #[test]
    fn features_in_unit_square_and_small_n_rejected() {
        let d = synth_dataset(SynthKind::Linreg, 50, 1).unwrap();
        assert!(d.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(d.target_dim(), 1);
        assert!(!d.is_classification());
        assert!(synth_dataset(SynthKind::Linreg, 3, 1).is_err());
    }
}
