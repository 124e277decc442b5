//! Dense linear algebra and the activation family.

pub mod activation;
pub mod matrix;

pub use activation::{estimate_lipschitz, Activation, LipschitzConstants};
pub use matrix::{cosine, dot, matmul, Matrix, Vector};

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vector {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let mut total = 0.0;
    for e in &exps {
        total += e;
    }
    Vector::from_vec(exps.into_iter().map(|e| e / total).collect())
}

/// `−Σ tᵢ log softmax(z)ᵢ`, computed via log-sum-exp.
pub fn softmax_cross_entropy(z: &[f64], target: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z {
        sum += (v - m).exp();
    }
    let log_z = m + sum.ln();
    let mut ce = 0.0;
    for (zi, ti) in z.iter().zip(target) {
        ce -= ti * (zi - log_z);
    }
    ce
}
