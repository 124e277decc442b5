use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    #[serde(rename = "rmsprop")]
    RmsProp,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd-momentum",
            OptimizerKind::RmsProp => "rmsprop",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = PcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sgd-momentum" => Ok(OptimizerKind::SgdMomentum),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            other => Err(PcnError::InvalidConfig(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Defaults: SGD with momentum 0.9 at lr 1e-3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    /// RMSProp squared-gradient decay.
    pub decay: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::SgdMomentum,
            lr: 1e-3,
            momentum: 0.9,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            lr,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(PcnError::InvalidConfig(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(PcnError::InvalidConfig(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.decay) {
            return Err(PcnError::InvalidConfig(format!(
                "decay must be in [0, 1), got {}",
                self.decay
            )));
        }
        Ok(())
    }
}

/// First-order optimizer over a fixed list of parameter slices.
///
/// Momentum follows `v ← μv + g, θ ← θ − lr·v`; RMSProp follows
/// `s ← ρs + (1−ρ)g², θ ← θ − lr·g/(√s + ε)`.
#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    buffers: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self {
            cfg,
            buffers: Vec::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Descends along `grads`. Slices must be given in the same order and
    /// with the same lengths on every call.
    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient list mismatch");
        if self.buffers.is_empty() && self.cfg.kind != OptimizerKind::Sgd {
            self.buffers = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        let OptimizerConfig {
            kind,
            lr,
            momentum,
            decay,
            eps,
        } = self.cfg;
        for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
            debug_assert_eq!(p.len(), g.len());
            match kind {
                OptimizerKind::Sgd => {
                    for (w, &d) in p.iter_mut().zip(g) {
                        *w -= lr * d;
                    }
                }
                OptimizerKind::SgdMomentum => {
                    for ((w, &d), v) in p.iter_mut().zip(g).zip(self.buffers[i].iter_mut()) {
                        *v = momentum * *v + d;
                        *w -= lr * *v;
                    }
                }
                OptimizerKind::RmsProp => {
                    for ((w, &d), s) in p.iter_mut().zip(g).zip(self.buffers[i].iter_mut()) {
                        *s = decay * *s + (1.0 - decay) * d * d;
                        *w -= lr * d / (s.sqrt() + eps);
                    }
                }
            }
        }
    }
}
