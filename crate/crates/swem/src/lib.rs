//! File formats, synthetic streams, session runners and redundancy analysis
//! on top of [`swem_core`].

pub mod bench;
mod error;
pub mod format;
pub mod generator;
pub mod redundancy;
pub mod runner;
pub mod snapshot;

pub use crate::error::{Error, Result};
