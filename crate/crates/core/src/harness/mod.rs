//! Configuration, experiment commands and CSV output.

pub mod commands;
pub mod config;
pub mod stats;

pub use commands::{
    cmd_scalability, cmd_scaling_law, cmd_sweep_position, cmd_train, cmd_validate_solver,
};
pub use config::ExperimentConfig;
pub use stats::SummaryRow;
