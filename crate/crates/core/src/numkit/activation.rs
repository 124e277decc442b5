//! Smooth activations with analytic derivatives up to third order, and
//! grid-based estimates of their Lipschitz constants.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::PcnError;

/// Scalar nonlinearity applied elementwise.
///
/// `TeLU` is `x · tanh(eˣ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    #[serde(rename = "telu")]
    TeLU,
}

/// Above this input TeLU equals the identity to machine precision
/// (tanh(e^40) == 1.0 exactly).
const TELU_LINEAR_CUTOFF: f64 = 40.0;

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Sigmoid,
        Activation::TeLU,
    ];

    /// Identifier used by the checkpoint format.
    pub fn id(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::TeLU => 3,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.id() == id)
    }

    /// `f`, `f′`, `f″` or `f‴` at `x`, for `order` 0 through 3.
    ///
    /// # Panics
    /// If `order > 3`.
    pub fn eval(self, x: f64, order: usize) -> f64 {
        let d = self.derivatives(x);
        assert!(order <= 3, "derivative order {order} not supported");
        d[order]
    }

    #[inline]
    pub fn f(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::TeLU => {
                if x > TELU_LINEAR_CUTOFF {
                    x
                } else {
                    x * x.exp().tanh()
                }
            }
        }
    }

    #[inline]
    pub fn df(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::TeLU => self.derivatives(x)[1],
        }
    }

    /// `[f, f′, f″, f‴]` at `x`.
    pub fn derivatives(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Identity => [x, 1.0, 0.0, 0.0],
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, s * (6.0 * t * t - 2.0)]
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let d1 = s * (1.0 - s);
                [s, d1, d1 * (1.0 - 2.0 * s), d1 * (1.0 - 6.0 * s + 6.0 * s * s)]
            }
            Activation::TeLU => telu_derivatives(x),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::TeLU => "telu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "linear" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" | "logistic" => Ok(Activation::Sigmoid),
            "telu" => Ok(Activation::TeLU),
            other => Err(PcnError::InvalidConfig(format!("unknown activation `{other}`"))),
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// With u = eˣ, T = tanh(u), g = sech²(u)·u = dT/dx:
//   g'  = g (1 − 2Tu)
//   g'' = g'(1 − 2Tu) − 2g(gu + Tu)
//   f' = T + x g,  f'' = 2g + x g',  f''' = 3g' + x g''
fn telu_derivatives(x: f64) -> [f64; 4] {
    if x > TELU_LINEAR_CUTOFF {
        return [x, 1.0, 0.0, 0.0];
    }
    let u = x.exp();
    let t = u.tanh();
    let c = u.cosh();
    let sech2 = 1.0 / (c * c);
    let g = sech2 * u;
    let k = 1.0 - 2.0 * t * u;
    let g1 = g * k;
    let g2 = g1 * k - 2.0 * g * (g * u + t * u);
    [x * t, t + x * g, 2.0 * g + x * g1, 3.0 * g1 + x * g2]
}

/// Grid estimates of the Lipschitz constants of `f`, `f′`, `f″` and `f‴`.
///
/// `k` bounds |f′|, `k1` bounds |f″|, `k2` bounds |f‴|, and `k3` is the
/// largest divided difference of `f‴` between neighbouring grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConstants {
    pub k: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl LipschitzConstants {
    /// Multiplicative margin applied by [`LipschitzConstants::certified`].
    pub const SAFETY_FACTOR: f64 = 1.01;

    /// The grid suprema inflated by [`Self::SAFETY_FACTOR`], for use as upper
    /// bounds in bound-checking code.
    pub fn certified(&self) -> Self {
        let s = Self::SAFETY_FACTOR;
        Self {
            k: self.k * s,
            k1: self.k1 * s,
            k2: self.k2 * s,
            k3: self.k3 * s,
        }
    }
}

/// Scans `[lo, hi]` at spacing `step` (grid points `lo + i·step`).
///
/// # Panics
/// If `lo >= hi` or `step <= 0`.
pub fn estimate_lipschitz(act: Activation, lo: f64, hi: f64, step: f64) -> LipschitzConstants {
    assert!(lo < hi, "empty interval");
    assert!(step > 0.0, "step must be positive");
    let n = ((hi - lo) / step).round() as usize;
    let mut out = LipschitzConstants {
        k: 0.0,
        k1: 0.0,
        k2: 0.0,
        k3: 0.0,
    };
    let mut prev_d3: Option<f64> = None;
    for i in 0..=n {
        let x = lo + i as f64 * step;
        let [_, d1, d2, d3] = act.derivatives(x);
        out.k = out.k.max(d1.abs());
        out.k1 = out.k1.max(d2.abs());
        out.k2 = out.k2.max(d3.abs());
        if let Some(p) = prev_d3 {
            out.k3 = out.k3.max((d3 - p).abs() / step);
        }
        prev_d3 = Some(d3);
    }
    out
}
