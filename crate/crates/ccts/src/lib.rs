//! Command-line pipeline around `ccts-core`: dataset and checkpoint I/O,
//! parallel attribution and report rendering.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod parallel;
pub mod report;

pub use error::{Error, Result};
