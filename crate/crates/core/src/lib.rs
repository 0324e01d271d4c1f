//! Mean-field branch dynamics of a two-state system coupled to an environment:
//! scenario model, exact and mean-field propagation, the theta family of
//! branches with its stationary-phase analysis, and decoherence metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod branches;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod propagators;
pub mod quadrature;

pub use branches::{
    action_mixing_check, make_theta_state, numeric_stationary_points, orthogonality_report, pointer_eigen_residual,
    saddle_point_state, saddle_point_state_with, stationary_points, superpose_branches, time_orthogonality,
    BoundaryWeight, BranchFamily, OrthogonalityReport, PrefactorConvention, SaddleOptions, StationaryPoint,
    StationaryPointReport, Superposition,
};
pub use error::{Error, Result};
pub use linalg::{
    hermitian_propagator, inner_product, partial_trace, reduce_pure, tensor_product, DensityMatrix, Operator, Spectrum,
    StateVector, C64,
};
pub use metrics::{
    decoherence_factor, decoherence_report, decoherence_time, decoherence_time_with, fidelity, reduced_density,
    time_average, DecoherenceReport, DecoherenceTimes,
};
pub use model::{
    build_total_hamiltonian, load_scenario, validate_non_demolition, Coupling, InteractionMode, InteractionSpec,
    NonDemolitionReport, PointerBasis, Scenario, ScenarioDocument, ScenarioParts, ThetaProfile, ThetaSpec, TimeGrid,
};
pub use propagators::{
    evolve_exact, evolve_mean_field, evolve_mean_field_from, evolve_subsystem, mean_field_error, refined_action,
    ActionRecord, BranchTrajectory, ExactTrajectory, MeanFieldEngine,
};
