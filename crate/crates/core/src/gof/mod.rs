//! Goodness-of-fit testing of the spot-variance occupation law.

pub mod bootstrap;
pub mod marginal;
pub mod stats;

pub use bootstrap::{
    bootstrap_estimated, bootstrap_known, estimated_replicates, known_replicates, noisy_returns, observed_statistic,
    BootstrapDesign, EstimatedDesign,
};
pub use marginal::{gig_pdf, ig_from_ts, Cdf, GigSampler, NullMarginal};
pub use stats::{ad, critical_value, cvm, pvalue, rks, statistic, CriticalValues, GofReport, Provenance, StatKind, StatValue};
