//! Scenario runner and acceptance checks for the two-photon filter simulator.

pub mod acceptance;
pub mod config;
pub mod error;
pub mod presets;
pub mod run;

pub use acceptance::{AcceptanceFlag, ACCEPTANCE_SEED};
pub use config::{parse_config, parse_file, parse_str, Scenario};
pub use error::{exit, CliError};
pub use presets::ScenarioPreset;
pub use run::{emit_csv, run_scenario, RunReport};
