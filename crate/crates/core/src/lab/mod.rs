//! Stability diagnostics: Lyapunov monitors, perturbation recovery,
//! convergence races, basin sampling and update geometry.

pub mod attraction;
pub mod dynamics;
pub mod geometry;
pub mod lyapunov;
pub mod perturb;
pub mod race;
pub mod trajectory;

pub use attraction::{attraction_sample, AttractionProblem, BasinRow};
pub use dynamics::{curvature, find_equilibrium, Dynamics, Equilibrium};
pub use geometry::{angle_between, layer_geometry, update_geometry, UpdateGeometry};
pub use lyapunov::{inference_log, lyapunov_monitor, monitor_series, LyapunovReport, LYAPUNOV_TOL};
pub use perturb::{perturb_and_recover, perturbation, PerturbSpec, Recovery, EQUILIBRIUM_TOL};
pub use race::{convergence_race, epochs_to_fraction, median_epochs, Architecture, RaceRow};
pub use trajectory::{fit_decay, quadratic_toy, DecayFit, TrajectoryLog, TrajectoryPoint};
