//! File formats, training runner and command line for the diagnostic-report
//! GRPO lab. The computation lives in `diaglab-core`.

pub mod checkpoint;
pub mod cli;
pub mod codec;
pub mod config;
pub mod data;
pub mod error;
pub mod report;
pub mod runner;
pub mod socket;

pub use diaglab_core as core;
pub use error::FormatError;
