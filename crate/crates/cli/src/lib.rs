//! Experiment driver: verification suites, closed-loop simulations and
//! constellation geometry reports, all written as CSV.

pub mod config;
pub mod fixtures;
pub mod output;
pub mod report;
pub mod simulate;
pub mod suites;

pub use config::ExperimentConfig;
