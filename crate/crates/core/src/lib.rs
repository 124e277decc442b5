//! Predictive coding networks, backprop and target-prop baselines, and a
//! set of stability diagnostics for comparing their learning dynamics.
//!
//! The common types are re-exported at the crate root.

pub mod baselines;
pub mod data;
pub mod error;
pub mod lab;
pub mod metrics;
pub mod numkit;
pub mod oracle;
pub mod pcn;
pub mod train;

pub use data::{DatasetHandle, Split, SynthKind};
pub use error::{FormatError, PcnError, Result};
pub use metrics::{MetricRecord, MetricsLog, Phase};
pub use numkit::{Activation, Matrix, Vector};
pub use pcn::{EnergyReport, InferenceConfig, OutputLoss, ParamGrads, PcnModel, PcnState};
pub use train::{Algorithm, OptimizerConfig, OptimizerKind, TrainConfig, TrainOutcome};
