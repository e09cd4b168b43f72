//! Causal and associational concept attributions for time-series classifiers.
//!
//! The crate is `no_std` and only needs `alloc`. Everything that touches the
//! filesystem, threads or the command line lives in the companion `ccts` crate.
//!
//! The pieces fit together as follows:
//!
//! * [`data`] holds the series/mask/dataset types and segment splicing.
//! * [`scm`] is a synthetic structural causal model with exact imputers and
//!   quadrature/enumeration oracles for the effects.
//! * [`classifier`] is the fixed probabilistic classifier surface plus AUROC.
//! * [`imputer`] provides class-specific and unconditional segment samplers,
//!   including a small masked-denoising diffusion model.
//! * [`attribution`] turns classifier + imputers into treatment effects,
//!   associational attributions and bootstrap intervals.
//! * [`concepts`] discovers concepts by k-means and validates them with
//!   boosted stumps.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod attribution;
pub mod classifier;
pub mod concepts;
pub mod data;
mod error;
pub mod imputer;
pub mod quadrature;
pub mod rng;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
