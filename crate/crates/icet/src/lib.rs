//! File formats, Monte-Carlo benchmarking and reporting on top of `icet-core`.

pub mod bench;
pub mod dump;
pub mod error;
pub mod io;
pub mod stats;

pub use crate::error::{Error, Result};
