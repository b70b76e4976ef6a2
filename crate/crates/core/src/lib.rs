//! Conditioned dynamics of a two-level atom driven by two counter-propagating
//! single photons under continuous homodyne or photon-counting measurement.

pub mod engine;
pub mod error;
pub mod filter;
pub mod operator;
pub mod oracle;
pub mod pulse;
pub mod slh;

pub use error::{Error, Result};
pub use filter::{
    excitation_probability, init_state, k_signals, z_signals, Branch, Component, Components, Filter,
    FilterState, HpJumpForm, KSignals, MasterMethod, MeasurementScheme, ModelParams,
};
pub use operator::{CMatrix, KetState, Mat2, Mat4, Mat8};
pub use oracle::{build_oracle, check_compatibility, extract_components, MeasurementMatrices, Oracle, OracleState};
pub use pulse::PulseShape;
pub use slh::{build_augmented, AugmentedSystem, SlhTriple};
pub use engine::{
    compare_with_oracle, convergence_study, default_window, integrate_master, local_maxima, peak_stats, run_ensemble,
    simulate_trajectory, ConvergenceStudy, Curve, EnsembleResult, OracleComparison, Peak, SimulationConfig, TimeGrid,
    TrajectoryResult,
};
