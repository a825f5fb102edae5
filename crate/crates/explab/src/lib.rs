//! Experiment harness around `psrlab`: TOML experiment files, sweeps with
//! trend summaries, phase scans, deterministic CSV and SVG output.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod trend;

pub use config::{ExperimentConfig, Param, Tier};
pub use error::{ExplabError, Result};
