//! Experiment runner for `upal-core`: learning curves, timing sweeps,
//! diagnostics and SVG plots, all driven by one TOML config.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod diag;
pub mod learner;
pub mod plot;
pub mod run;

pub use config::{Algo, ConfigError, DatasetSpec, ExperimentConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const CONFIG: u8 = 2;
}

/// Exit code for an error: config problems map to [`exit::CONFIG`].
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<ConfigError>()) {
        exit::CONFIG
    } else {
        exit::CHECK_FAILED
    }
}
