//! Damped Newton-type updates built from a [`HessianBundle`].

use nalgebra::{DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::numkit::{cosine, Matrix, Vector};
use crate::oracle::bundle::{to_na, HessianBundle};

/// Damping shared by every inverse unless stated otherwise.
pub const DEFAULT_LAMBDA: f64 = 1e-3;
/// Indefinite systems are solved by LU only below this condition number.
pub const MAX_CONDITION: f64 = 1e12;

fn damped(a: &Matrix, lambda: f64) -> nalgebra::DMatrix<f64> {
    let mut m = to_na(a);
    for i in 0..m.nrows() {
        m[(i, i)] += lambda;
    }
    m
}

/// Solves `(A + λI)x = b` by Cholesky; fails unless `A + λI` is positive definite.
pub fn solve_spd(a: &Matrix, b: &[f64], lambda: f64) -> Result<Vector> {
    if a.rows() != a.cols() || a.rows() != b.len() {
        return Err(PcnError::DimensionMismatch {
            context: "solve_spd system",
            expected: a.rows(),
            got: b.len(),
        });
    }
    let chol = damped(a, lambda).cholesky().ok_or(PcnError::NotPositiveDefinite)?;
    let x = chol.solve(&DVector::from_column_slice(b));
    Ok(Vector::from_vec(x.iter().copied().collect()))
}

/// Condition number `max|μ| / min|μ|` of the symmetric matrix `A + λI`.
pub fn condition_number(a: &Matrix, lambda: f64) -> f64 {
    let eig = SymmetricEigen::new(damped(a, lambda)).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
        (lo.min(v.abs()), hi.max(v.abs()))
    });
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `(A + λI)x = b`: Cholesky when positive definite, otherwise LU as
/// long as the condition number stays below [`MAX_CONDITION`].
pub fn solve_damped(a: &Matrix, b: &[f64], lambda: f64) -> Result<(Vector, f64)> {
    let cond = condition_number(a, lambda);
    match solve_spd(a, b, lambda) {
        Ok(x) => Ok((x, cond)),
        Err(PcnError::NotPositiveDefinite) => {
            if !(cond < MAX_CONDITION) {
                return Err(PcnError::Singular { condition: cond });
            }
            let x = damped(a, lambda)
                .lu()
                .solve(&DVector::from_column_slice(b))
                .ok_or(PcnError::Singular { condition: cond })?;
            Ok((Vector::from_vec(x.iter().copied().collect()), cond))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateComparison {
    pub dw_qn: Vector,
    pub dw_tp: Vector,
    pub dw_pc: Vector,
    /// `−(H + H̃ + λI)⁻¹ ∇L`, the PC update without the residual gradient.
    pub dw_pc_no_grad_e: Vector,
    pub dw_bp: Vector,
    /// Negative mean learning-phase gradient at the converged states.
    pub dw_pc_actual: Vector,
    pub e_pc: f64,
    pub e_pc_no_grad_e: f64,
    pub e_tp: f64,
    pub cos_pc_qn: f64,
    pub cos_bp_qn: f64,
    pub lambda: f64,
    pub cond_gn: f64,
    pub cond_b: f64,
    pub cond_pc: f64,
}

impl UpdateComparison {
    /// Recomputes the stored distances and checks them to `1e-12`.
    pub fn verify(&self) -> bool {
        let close = |stored: f64, a: &Vector, b: &Vector| (stored - a.sub(b).norm()).abs() <= 1e-12;
        close(self.e_pc, &self.dw_pc, &self.dw_qn)
            && close(self.e_tp, &self.dw_tp, &self.dw_qn)
            && close(self.e_pc_no_grad_e, &self.dw_pc_no_grad_e, &self.dw_qn)
    }
}

pub fn qn_updates(bundle: &HessianBundle, lambda: f64) -> Result<UpdateComparison> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(PcnError::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let g = &bundle.grad_l;
    let g_total = g.add(&bundle.grad_e);
    let mut h_pc = bundle.h.clone();
    h_pc.axpy(1.0, &bundle.h_tilde);

    let (qn, cond_gn) = solve_damped(&bundle.h_gn, g, lambda)?;
    let (tp, cond_b) = solve_damped(&bundle.b, g, lambda)?;
    let (pc, cond_pc) = solve_damped(&h_pc, &g_total, lambda)?;
    let (pc_no_e, _) = solve_damped(&h_pc, g, lambda)?;

    let dw_qn = qn.scale(-1.0);
    let dw_tp = tp.scale(-1.0);
    let dw_pc = pc.scale(-1.0);
    let dw_pc_no_grad_e = pc_no_e.scale(-1.0);
    let dw_bp = g.scale(-1.0);
    let dw_pc_actual = bundle.grad_pc.scale(-1.0);
    Ok(UpdateComparison {
        e_pc: dw_pc.sub(&dw_qn).norm(),
        e_pc_no_grad_e: dw_pc_no_grad_e.sub(&dw_qn).norm(),
        e_tp: dw_tp.sub(&dw_qn).norm(),
        cos_pc_qn: cosine(&dw_pc_actual, &dw_qn).unwrap_or(0.0),
        cos_bp_qn: cosine(&dw_bp, &dw_qn).unwrap_or(0.0),
        dw_qn,
        dw_tp,
        dw_pc,
        dw_pc_no_grad_e,
        dw_bp,
        dw_pc_actual,
        lambda,
        cond_gn,
        cond_b,
        cond_pc,
    })
}
