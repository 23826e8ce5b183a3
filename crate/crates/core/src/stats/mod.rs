//! Empirical summaries and goodness-of-fit tools.

mod gof;
mod summary;

pub use gof::*;
pub use summary::*;
