//! Command line, configuration, experiment presets, result files and plots.

pub mod cli;
pub mod config;
pub mod output;
pub mod plot;
pub mod presets;

pub use config::{ExperimentConfig, DESK_SCALE};
pub use presets::{run_preset, RunOptions};
