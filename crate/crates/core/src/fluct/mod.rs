//! Ensemble statistics for the laws of large numbers and the fluctuation
//! limit, and sampling of the limiting Ornstein-Uhlenbeck pairings.

mod checks;
mod ensemble;
mod ou;
mod stats;

pub use checks::{
    fluctuation_variance_check, lln_ladder, lln_report, variance_within, write_report_csv, z_form,
    LadderRow, LlnRow, ReportRow, VarianceCheck,
};
pub use ensemble::{
    exact_means, pair_moments, run_ensemble, EnsembleRecord, EnsembleStats, PairMoments, Quantity,
    TestFunctionSet,
};
pub use ou::{preset_noise_norm, sample_limit_ou, OuSample};
pub use stats::{kolmogorov_survival, ks_normal, mse, zscore, KsResult, SampleSummary};
