//! Experiment harness: scenario synthesis, the compared algorithms, batch
//! runs and CSV reports.

pub mod baselines;
pub mod config;
pub mod report;
pub mod scenario;
pub mod suite;
pub mod synth;

pub use config::{Algorithm, ExperimentConfig};
pub use suite::{run_suite, write_outputs, Parts, SuiteOutput};
