//! Configured, reproducible experiment runs.

mod config;
mod record;
mod run;

pub use config::*;
pub use record::*;
pub use run::*;
