//! Offline steering of a rule-based query optimizer with single-rule-flip
//! hints.

pub mod bandit;
pub mod bits;
pub mod featuregen;
pub mod flightsim;
pub mod optkernel;
pub mod pipeline;
pub mod seed;
pub mod span;
pub mod tsv;
pub mod validation;
pub mod workload;
