//! Configuration-driven experiments, metrics and outputs.

pub mod cache;
pub mod config;
pub mod metrics;
pub mod output;
pub mod presets;
pub mod raster;
pub mod report;
pub mod selftest;
pub mod suite;

pub use config::ExperimentConfig;
pub use metrics::{compute_errors, convergence_rate, energy_trace, max_norm_trace, AllenCahnEnergy};
pub use raster::load_permeability;
pub use report::{ErrorReport, ReportRow};
pub use suite::{run_multiscale, run_reference, run_single, run_suite, FineSetup, SuiteOptions, SuiteOutcome};
