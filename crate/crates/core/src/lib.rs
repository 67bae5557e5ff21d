//! Adversarial distribution matching across multiple source domains.
//!
//! This crate is `no_std` (it needs `alloc`) and carries the algorithmic
//! pieces of the toolkit:
//!
//! - [`engine`]: dense tensors, a reverse-mode tape, SGD with momentum and
//!   the learning-rate schedules used by the trainers.
//! - [`domains`]: meta-distributions of synthetic domains under covariate
//!   shift, mixtures of domains and stratified splits.
//! - [`models`]: encoder, task classifier and one-vs-all domain
//!   discriminators fed through frozen random projections.
//! - [`training`]: the alternating minimax trainer and the ERM baseline.
//! - [`divergence`]: proxy A-distance estimation, the one-vs-all
//!   decomposition check, convex-hull Monte Carlo checks and the
//!   unseen-domain bound audit.
//!
//! File formats, the experiment harness and the command-line interface live
//! in the `g2dm` companion crate.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod divergence;
pub mod domains;
pub mod engine;
pub mod error;
pub mod math;
pub mod models;
pub mod rng;
pub mod training;

pub use crate::error::{Error, Result};
