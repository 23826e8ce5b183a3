//! Random walks on the cone of positive semidefinite matrices.
//!
//! Two families of walks are simulated: walks on `p×q` matrices driven by Haar-random
//! frames ([`orbit`]), and Bessel-hypergroup walks of arbitrary index μ ([`hypergroup`]).
//! [`limit`] holds the normalized limit statistics and [`harness`] runs configured
//! experiments reproducibly.

pub mod error;
pub mod harness;
pub mod hypergroup;
pub mod laws;
pub mod limit;
pub mod linalg;
pub mod orbit;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use hypergroup::{
    bessel_character_1d, convolve_points, kappa_exact, kappa_mu, root_lipschitz_gap, run_bessel_walk,
    sample_contraction, semigroup_convolve, BesselParam, BesselWalkConfig, ContractionMatrix, ContractionSampler,
    TestFunction,
};
pub use laws::{LawKind, LawSpec, MomentData, RadialLaw};
pub use limit::{berry_esseen_scan, mardia_tests, moment_identity_rhs, normalize_clt, t_squared_limit, CltKind, RateFit};
pub use linalg::{CovMatrix, Field, HermVector, HermitianMatrix, Matrix, PsdMatrix};
pub use orbit::{run_group_walk, sample_radial_matrix, sample_stiefel_frame, GroupEngine, GroupWalkConfig, WalkTrajectory};
pub use rng::SeedSequence;
pub use stats::{chi2_cdf, ks_distance, EmpiricalSummary};
