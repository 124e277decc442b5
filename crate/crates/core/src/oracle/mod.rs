//! Brute-force curvature objects and Newton-type update comparisons on tiny
//! networks.

pub mod bundle;
pub mod flat;
pub mod population;
pub mod updates;

pub use bundle::{
    assemble_at_convergence, assemble_bundle, converged_states, loss_hessian_double_fd, HessianBundle, PARAM_GUARD,
};
pub use flat::{write_theta, FlatParams, Segment, SegmentKind};
pub use population::{
    run_instance, run_population, summarize, InstanceResult, InstanceSpec, PopulationConfig, PopulationSummary,
};
pub use updates::{condition_number, qn_updates, solve_damped, solve_spd, UpdateComparison, DEFAULT_LAMBDA};
