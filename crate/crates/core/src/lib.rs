//! Early stopping of the EM (Richardson-Lucy) iteration for Poisson inverse
//! problems.
//!
//! The crate provides the forward model (FFT convolution and dense matrices),
//! the EM iteration with background, coupled perturbed trajectories for
//! Monte-Carlo divergence probes, four stopping criteria (PAUKL, PUKLA, REKL
//! and the Poisson discrepancy principle), ground-truth metrics, and a seeded
//! experiment harness.
//!
//! ```no_run
//! use emstop::{harness, ExperimentConfig};
//!
//! let config = ExperimentConfig::from_toml_str(include_str!("../../../configs/inverse_crime.toml"))?;
//! let sweep = harness::run_sweep(&config, None)?;
//! for row in sweep.summary() {
//!     println!("{}: {:.1} ± {:.1}", row.rule, row.mean_k, row.std_k);
//! }
//! # Ok::<(), emstop::Error>(())
//! ```

// Negated comparisons such as `!(x > 0.0)` are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod em;
mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod kl;
pub mod metrics;
pub mod operators;
pub mod random;
pub mod risk;

pub use error::{Error, Result};
pub use harness::{ExperimentConfig, Mode};
pub use image::{Dims, Image};
pub use kl::kl_divergence;
pub use operators::{ForwardOperator, Psf};
pub use random::RngStream;
