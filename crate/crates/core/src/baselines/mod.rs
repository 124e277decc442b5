//! Comparators trained on the same architecture: backpropagation and a
//! simplified difference target propagation.

pub mod bp;
pub mod tp;

pub use bp::{accumulate_bp_grads, backward, bp_grads, output_loss};
pub use tp::{
    feedback_grads, tp_forward_grads, tp_lyapunov, tp_lyapunov_terms, tp_targets, FeedbackLayer, TpConfig, TpFeedback,
    TpSample,
};
