//! Recompilation pruning, flight selection and scheduling, and simulated
//! pre-production runs.

pub mod executor;
mod flight;
mod schedule;

pub use executor::{execute, true_work, NoiseModel, RunMetrics, TrueWork};
pub use flight::{aa_run, cov, flight, AaError, AaStats, FlightConfig, FlightOutcome, FlightResult, DEFAULT_TIMEOUT_S};
pub use schedule::{
    classify, recompile_and_prune, run_queue, select_flights, survives, CostClass, CostCounts, FlightBudget, Pruned,
    ScheduledFlight, SlotStatus, Survivor, COST_EQ_TOL,
};
