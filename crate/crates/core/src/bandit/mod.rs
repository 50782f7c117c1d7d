//! Contextual-bandit recommendation of at most one rule flip per job.

mod log;
mod policy;

pub use log::{parse_log, read_log, write_log, LogError, LOG_COLUMNS};
pub use policy::{LearnParams, Policy, PolicyError};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featuregen::{ActionVector, ContextVector};
use crate::span::JobSpan;

/// Rewards are clipped to `[0, REWARD_CLIP]`.
pub const REWARD_CLIP: f64 = 2.0;

#[derive(Debug, Error, PartialEq)]
pub enum BanditError {
    #[error("default cost must be positive, got {0}")]
    NonPositiveCost(f64),
    #[error("empty action set")]
    EmptyActions,
    #[error("record {0} has zero propensity")]
    ZeroPropensity(usize),
}

/// Reward of a recompilation: the clipped ratio of default over new
/// estimated cost. `None` stands for a compile failure.
pub fn reward_from_costs(cost_default: f64, cost_new: Option<f64>) -> Result<f64, BanditError> {
    if !(cost_default > 0.0) {
        return Err(BanditError::NonPositiveCost(cost_default));
    }
    Ok(match cost_new {
        None => 0.0,
        Some(c) if c <= 0.0 => REWARD_CLIP,
        Some(c) => (cost_default / c).min(REWARD_CLIP),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Uniform at random over the action set.
    Log,
    /// Argmax of the policy score.
    Exploit,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(Mode::Log),
            "exploit" => Ok(Mode::Exploit),
            _ => Err(format!("mode must be log|exploit, got {s:?}")),
        }
    }
}

/// Pick an action. Actions must start with the no-op and continue in
/// ascending rule id, so the first maximum is the tie-break winner.
/// Without a policy every action scores the same.
pub fn decide(
    policy: Option<&Policy>,
    context: &ContextVector,
    actions: &[ActionVector],
    mode: Mode,
    rng: &mut impl Rng,
) -> Result<(usize, f64), BanditError> {
    if actions.is_empty() {
        return Err(BanditError::EmptyActions);
    }
    Ok(match mode {
        Mode::Log => (rng.random_range(0..actions.len()), 1.0 / actions.len() as f64),
        Mode::Exploit => (policy.map_or(0, |p| p.argmax(context, actions)), 1.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub job_id: String,
    pub template_id: String,
    pub span: JobSpan,
    pub context: ContextVector,
    pub actions: Vec<ActionVector>,
    pub chosen: usize,
    pub propensity: f64,
    pub reward: f64,
    pub cost_default: f64,
    /// `None` when the chosen configuration failed to compile.
    pub cost_new: Option<f64>,
}

/// A policy that can be evaluated counterfactually.
pub trait TargetPolicy {
    /// Probability of choosing action `index` for the record's context.
    fn prob(&self, record: &DecisionRecord, index: usize) -> f64;
}

pub struct Uniform;

impl TargetPolicy for Uniform {
    fn prob(&self, record: &DecisionRecord, _index: usize) -> f64 {
        1.0 / record.actions.len() as f64
    }
}

impl TargetPolicy for Policy {
    fn prob(&self, record: &DecisionRecord, index: usize) -> f64 {
        if self.argmax(&record.context, &record.actions) == index {
            1.0
        } else {
            0.0
        }
    }
}

/// A deterministic policy given as a choice function.
pub struct Deterministic<F>(pub F);

impl<F: Fn(&DecisionRecord) -> usize> TargetPolicy for Deterministic<F> {
    fn prob(&self, record: &DecisionRecord, index: usize) -> f64 {
        if (self.0)(record) == index {
            1.0
        } else {
            0.0
        }
    }
}

/// Inverse-propensity estimate of the target's mean reward on `log`.
pub fn ips_evaluate(target: &impl TargetPolicy, log: &[DecisionRecord]) -> Result<f64, BanditError> {
    if log.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, r) in log.iter().enumerate() {
        if !(r.propensity > 0.0) {
            return Err(BanditError::ZeroPropensity(i));
        }
        let p = target.prob(r, r.chosen);
        if p > 0.0 {
            total += p * r.reward / r.propensity;
        }
    }
    Ok(total / log.len() as f64)
}
