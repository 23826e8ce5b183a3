//! Normalized limit statistics, their limit parameters, and convergence diagnostics.

mod clt;
mod mardia;
mod scan;

pub use clt::*;
pub use mardia::*;
pub use scan::*;
