//! Predictive coding networks: model, activities, inference and learning.

pub mod inference;
pub mod learning;
pub mod model;
pub mod state;

pub use inference::{inference_grad, run_inference, InferenceConfig, InferenceOutcome, InferenceStep};
pub use learning::{accumulate_energy_weight_grads, energy_weight_grads, weight_update};
pub use model::{Layer, LayerGrad, ParamGrads, PcnModel};
pub use state::{
    check_state, energy, feedforward_init, feedforward_init_with_loss, EnergyReport, OutputLoss, PcnState,
    CONVENTION_CONSTANT,
};
