//! Pipeline commands behind the `spineseg` binary.

pub mod commands;
pub mod config;
pub mod io;

pub use commands::{Failure, Outcome};
pub use config::{Overrides, RunConfig};
