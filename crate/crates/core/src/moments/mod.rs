//! Exact finite-N moment equations: the mean equation and the linear
//! generators of products of means and of second moments on the pair grid.

mod evolve;
mod matrix;

pub use evolve::{
    covariance_decay, evolve_means, evolve_moments, write_decay_csv, write_moments_csv,
    DecayReport, DecayRow, MomentTable, MomentTrajectory,
};
pub use matrix::{build_m, build_mhat, mean_ode_rhs, MeanGenerator, SparseMomentMatrix, MAX_URNS};
