//! Audio I/O, the missing-data experiment and CSV exports for `probfb`.

pub mod audio;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gaps;
pub mod report;
pub mod snr;
pub mod synth;
pub mod views;

pub use error::{CliError, Result};
