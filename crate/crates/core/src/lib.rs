//! Dissipative quantum dynamics generated by a continuous, non-minimally
//! disturbing measurement.
//!
//! A monitored observable `A` with readout-proportional back-action `B`
//! produces, after averaging over readouts, a master equation of Lindblad
//! form. For the harmonic oscillator with `A = P`, `B = omega Q` this is
//! quantum Brownian motion with friction `gamma = lambda omega`.
//!
//! Modules:
//! - [`operator`]: truncated Fock-space operators and states
//! - [`measurement`]: the measurement model, jump operator and Hamiltonian shift
//! - [`master`]: master-equation right-hand sides, superoperator, RK4, steady state
//! - [`moments`]: closed moment equations of the oscillator
//! - [`trajectories`]: readout-conditioned evolution and ensemble averages
//! - [`thermal`]: bath temperature relations
//! - [`verify`]: invariant checks used by the command-line `verify` mode

pub mod error;
pub mod grid;
pub mod linalg;
pub mod master;
pub mod measurement;
pub mod moments;
pub mod operator;
pub mod randmat;
pub mod thermal;
pub mod trajectories;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec, C64};
pub use master::{
    build_liouvillian, evolve, rhs_double_commutator, rhs_lindblad, steady_state, EvolutionSeries,
    EvolveOptions, Liouvillian, LindbladGenerator, PositivityPolicy, SteadyState,
};
pub use measurement::{
    effective_hamiltonian, effective_oscillator_frequency, hamiltonian_shift, lindblad_operator,
    oscillator_model, EffectiveHamiltonian, MeasurementModel,
};
pub use moments::{
    diffusion_negligible_horizon, first_moment_rhs, integrate_moments, mean_energy,
    moments_from_density, second_moment_rhs, steady_moments, MomentParams, MomentSeries,
    MomentState,
};
pub use operator::{
    anticommutator, coherent_state, commutator, expectation, fock_state, make_oscillator_ops,
    thermal_state, DensityMatrix, Operator, OscillatorOps,
};
pub use thermal::{
    diffusion_coefficient, lambda_from_temperature, nbar, regime_classify,
    temperature_from_lambda, Regime, ThermalSpec,
};
pub use trajectories::{
    ensemble_average, run_trajectories, run_trajectory, EnsembleResult, StepKernel, TrajectoryOptions,
    TrajectoryRecord,
};
