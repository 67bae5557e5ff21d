//! File formats, experiment protocols and the command-line front end for
//! `g2dm-core`.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;

pub use crate::config::{ExperimentConfig, Method};
pub use crate::error::{Error, Result};
