//! Pre-production A/B runs and A/A variance measurement.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::executor::{execute, true_work, NoiseModel, RunMetrics};
use crate::optkernel::{compile, compile_with_flip, CompileError, Flip, Job, RuleCatalog, RuleConfig};
use crate::seed;

/// Flighting stops any single job after a day.
pub const DEFAULT_TIMEOUT_S: f64 = 24.0 * 3600.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightConfig {
    pub noise: NoiseModel,
    pub p_failure: f64,
    pub p_filtered: f64,
    pub per_job_timeout_s: f64,
}

impl Default for FlightConfig {
    fn default() -> Self {
        Self {
            noise: NoiseModel::default(),
            p_failure: 0.02,
            p_filtered: 0.03,
            per_job_timeout_s: DEFAULT_TIMEOUT_S,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FlightOutcome {
    Failure,
    Timeout,
    Filtered,
    Success { baseline: RunMetrics, treatment: RunMetrics },
}

impl FlightOutcome {
    pub fn name(&self) -> &'static str {
        match self {
            FlightOutcome::Failure => "failure",
            FlightOutcome::Timeout => "timeout",
            FlightOutcome::Filtered => "filtered",
            FlightOutcome::Success { .. } => "success",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightResult {
    pub outcome: FlightOutcome,
    /// Time the flight occupies a queue slot.
    pub duration_s: f64,
}

/// Run baseline and treatment of `job` side by side. `None` flights the
/// default configuration against itself.
pub fn flight(catalog: &RuleCatalog, job: &Job, flip: Option<Flip>, cfg: &FlightConfig, seed: u64) -> FlightResult {
    let mut rng = seed::rng(seed, &["flight"]);
    let u: f64 = rng.random();
    if u < cfg.p_filtered {
        return FlightResult {
            outcome: FlightOutcome::Filtered,
            duration_s: 0.0,
        };
    }
    let failed = u < cfg.p_filtered + cfg.p_failure;
    let (Ok(base_plan), Ok(treat_plan)) = (
        compile(catalog, job, &catalog.default_config()),
        compile_with_flip(catalog, job, flip),
    ) else {
        return FlightResult {
            outcome: FlightOutcome::Failure,
            duration_s: 0.0,
        };
    };
    let (baseline, _) = execute(job, &base_plan, &cfg.noise, seed::derive(seed, &["baseline"]));
    let (treatment, _) = execute(job, &treat_plan, &cfg.noise, seed::derive(seed, &["treatment"]));
    let duration = baseline.latency_s.max(treatment.latency_s);
    if failed {
        // dies part way through
        let at: f64 = rng.random();
        return FlightResult {
            outcome: FlightOutcome::Failure,
            duration_s: (at * duration).min(cfg.per_job_timeout_s),
        };
    }
    if duration > cfg.per_job_timeout_s {
        return FlightResult {
            outcome: FlightOutcome::Timeout,
            duration_s: cfg.per_job_timeout_s,
        };
    }
    FlightResult {
        outcome: FlightOutcome::Success { baseline, treatment },
        duration_s: duration,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AaStats {
    pub latency_cov: f64,
    pub pn_hours_cov: f64,
    pub data_read_cov: f64,
    pub data_written_cov: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum AaError {
    #[error("an A/A test needs at least 2 runs, got {0}")]
    TooFewRuns(usize),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

/// Sample coefficient of variation; 0 for a zero mean.
pub fn cov(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if mean == 0.0 || xs.iter().all(|x| *x == xs[0]) {
        return 0.0;
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean.abs()
}

/// Run `job` `n` times under the same configuration.
pub fn aa_run(
    catalog: &RuleCatalog,
    job: &Job,
    config: &RuleConfig,
    n: usize,
    noise: &NoiseModel,
    seed: u64,
) -> Result<AaStats, AaError> {
    if n < 2 {
        return Err(AaError::TooFewRuns(n));
    }
    let plan = compile(catalog, job, config)?;
    let work = true_work(job, &plan);
    let runs: Vec<RunMetrics> = (0..n)
        .map(|i| work.sample(noise, seed::derive(seed, &["aa", &job.job_id, &i.to_string()])))
        .collect();
    let col = |f: fn(&RunMetrics) -> f64| cov(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(AaStats {
        latency_cov: col(|r| r.latency_s),
        pn_hours_cov: col(|r| r.pn_hours),
        data_read_cov: col(|r| r.data_read),
        data_written_cov: col(|r| r.data_written),
    })
}
