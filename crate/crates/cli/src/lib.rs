//! Command implementations behind the `modaprep` binary, exposed as a
//! library so integration tests can drive them directly.

pub mod args;
pub mod commands;
pub mod report;

pub use commands::{run, Outcome};
