//! Multi-day simulation: logging days, policy training, flight history for
//! the validation model, then an exploit day, plus the oracle comparison.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::day::{run_day, DayConfig, DayInputs, DayOutput};
use super::hints::HintEntry;
use super::PipelineError;
use crate::bandit::{DecisionRecord, LearnParams, Mode, Policy};
use crate::flightsim::{flight, survives, true_work, FlightConfig, FlightOutcome};
use crate::optkernel::{compile, compile_with_flip, Flip, Job, RuleCatalog, RuleCategory};
use crate::seed;
use crate::span::{SpanError, BRUTE_FORCE_GUARD};
use crate::validation::{train_validation_model, FlightObservation, HeldOut, ValidationModel};
use crate::workload::{generate_workload, observe_day, ViewRecord, Workload, WorkloadSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// `days` is overridden to fit the history plus one evaluation day.
    pub spec: WorkloadSpec,
    pub logging_days: usize,
    pub history_days: usize,
    pub history_flights_per_day: usize,
    pub day: DayConfig,
    pub learn: LearnParams,
}

impl HarnessConfig {
    pub fn standard(seed: u64) -> Self {
        Self {
            spec: WorkloadSpec::standard(15, seed),
            logging_days: 10,
            history_days: 14,
            history_flights_per_day: 40,
            day: DayConfig {
                seed,
                ..DayConfig::default()
            },
            learn: LearnParams {
                seed,
                ..LearnParams::default()
            },
        }
    }
}

pub struct Simulation {
    pub workload: Workload,
    pub views: Vec<Vec<ViewRecord>>,
    /// Uniform decisions of the logging days.
    pub training_log: Vec<DecisionRecord>,
    pub history: Vec<FlightObservation>,
    pub policy: Policy,
    pub vmodel: ValidationModel,
    pub held_out: HeldOut,
    pub eval_day: usize,
    pub config: HarnessConfig,
}

/// Flight a random subset of a day's uniformly logged improvements, one
/// per template, and keep the successful comparisons.
pub fn collect_flight_history(
    catalog: &RuleCatalog,
    jobs: &[Job],
    log: &[DecisionRecord],
    per_day: usize,
    flight_cfg: &FlightConfig,
    seed: u64,
) -> Vec<FlightObservation> {
    let by_id: BTreeMap<&str, &Job> = jobs.iter().map(|j| (j.job_id.as_str(), j)).collect();
    let mut per_template: BTreeMap<&str, Vec<&DecisionRecord>> = BTreeMap::new();
    for r in log {
        if r.chosen == 0 {
            continue;
        }
        if let Some(c) = r.cost_new {
            if survives(r.cost_default, c, 0.0) {
                per_template.entry(r.template_id.as_str()).or_default().push(r);
            }
        }
    }
    let mut rng = seed::rng(seed, &["history"]);
    let mut picks: Vec<&DecisionRecord> = per_template
        .into_values()
        .map(|g| *g.choose(&mut rng).expect("non-empty group"))
        .collect();
    picks.shuffle(&mut rng);
    picks.truncate(per_day);
    picks
        .par_iter()
        .filter_map(|r| {
            let job = by_id.get(r.job_id.as_str())?;
            let a = &r.actions[r.chosen];
            let flip = Flip::new(a.rule?, a.direction?);
            let res = flight(catalog, job, Some(flip), flight_cfg, seed::derive(seed, &["history", &job.job_id]));
            match res.outcome {
                FlightOutcome::Success { baseline, treatment } => Some(FlightObservation::from_runs(
                    job.date,
                    &job.template_id,
                    &job.job_id,
                    &baseline,
                    &treatment,
                )),
                _ => None,
            }
        })
        .collect()
}

pub fn day_seed(seed: u64, day: usize) -> u64 {
    seed::derive(seed, &["day", &day.to_string()])
}

/// Run the logging and history days and train both models.
pub fn simulate(catalog: &RuleCatalog, cfg: &HarnessConfig) -> Result<Simulation, PipelineError> {
    let history_days = cfg.history_days.max(cfg.logging_days);
    let spec = WorkloadSpec {
        days: history_days + 1,
        ..cfg.spec.clone()
    };
    let workload = generate_workload(&spec).map_err(|e| PipelineError::new(super::Stage::FeatureGeneration, e.to_string()))?;
    let views: Vec<Vec<ViewRecord>> = workload
        .days
        .iter()
        .enumerate()
        .map(|(d, day)| observe_day(catalog, &day.jobs, &cfg.day.flight.noise, day_seed(spec.seed, d)))
        .collect();

    let mut training_log = Vec::new();
    let mut history = Vec::new();
    for d in 0..history_days {
        let out = run_day(
            &DayInputs {
                catalog,
                view: &views[d],
                jobs: &workload.days[d].jobs,
                policy: None,
                vmodel: None,
            },
            &DayConfig {
                mode: Mode::Log,
                seed: day_seed(cfg.day.seed, d),
                ..cfg.day
            },
        )?;
        history.extend(collect_flight_history(
            catalog,
            &workload.days[d].jobs,
            &out.log,
            cfg.history_flights_per_day,
            &cfg.day.flight,
            day_seed(cfg.day.seed, d),
        ));
        if d < cfg.logging_days {
            training_log.extend(out.log);
        }
    }
    let policy = Policy::learn(&training_log, cfg.learn);
    let (vmodel, held_out) = train_validation_model(&history)
        .map_err(|e| PipelineError::new(super::Stage::Validation, e.to_string()))?;
    Ok(Simulation {
        workload,
        views,
        training_log,
        history,
        policy,
        vmodel,
        held_out,
        eval_day: history_days,
        config: cfg.clone(),
    })
}

impl Simulation {
    /// The exploit day with the trained models.
    pub fn evaluate(&self, catalog: &RuleCatalog, validate: bool) -> Result<DayOutput, PipelineError> {
        let d = self.eval_day;
        run_day(
            &DayInputs {
                catalog,
                view: &self.views[d],
                jobs: &self.workload.days[d].jobs,
                policy: Some(&self.policy),
                vmodel: Some(&self.vmodel),
            },
            &DayConfig {
                mode: Mode::Exploit,
                validate,
                seed: day_seed(self.config.day.seed, d),
                ..self.config.day
            },
        )
    }

    pub fn eval_jobs(&self) -> &[Job] {
        &self.workload.days[self.eval_day].jobs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleGap {
    /// Σ over templates of the best single-flip true PN-hours saving.
    pub available: f64,
    /// Σ over hinted templates of the saving the hint achieves.
    pub realized: f64,
    pub ratio: f64,
}

fn true_pn(catalog: &RuleCatalog, job: &Job, flip: Option<Flip>) -> Option<f64> {
    let plan = match flip {
        None => compile(catalog, job, &catalog.default_config()).ok()?,
        Some(_) => compile_with_flip(catalog, job, flip).ok()?,
    };
    Some(true_work(job, &plan).pn_hours())
}

/// Realized over available noise-free PN-hours savings, one representative
/// job (the first) per template.
pub fn end_to_end_oracle_gap(catalog: &RuleCatalog, jobs: &[Job], hints: &[HintEntry]) -> Result<OracleGap, SpanError> {
    if catalog.len() > BRUTE_FORCE_GUARD {
        return Err(SpanError::GuardExceeded(catalog.len()));
    }
    let mut reps: BTreeMap<&str, &Job> = BTreeMap::new();
    for j in jobs {
        reps.entry(j.template_id.as_str()).or_insert(j);
    }
    let flips: Vec<Flip> = catalog
        .rules()
        .iter()
        .filter(|r| r.category != RuleCategory::Required)
        .map(|r| Flip::inverting(catalog, r.id).expect("non-required"))
        .collect();
    let per: Vec<(f64, f64)> = reps
        .par_iter()
        .map(|(tid, job)| {
            let Some(base) = true_pn(catalog, job, None) else {
                return (0.0, 0.0);
            };
            let best = flips
                .iter()
                .filter_map(|f| true_pn(catalog, job, Some(*f)))
                .map(|pn| base - pn)
                .fold(0.0, f64::max);
            let realized = hints
                .iter()
                .find(|h| h.template_id == *tid)
                .and_then(|h| true_pn(catalog, job, Some(h.flip())))
                .map_or(0.0, |pn| base - pn);
            (best, realized)
        })
        .collect();
    let available: f64 = per.iter().map(|p| p.0).sum();
    let realized: f64 = per.iter().map(|p| p.1).sum();
    Ok(OracleGap {
        available,
        realized,
        ratio: if available > 0.0 { realized / available } else { 1.0 },
    })
}
