//! File formats, resumable pipeline stages, reports and the `econ` command
//! line around [`econ_core`].

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use error::{EconError, Result};
