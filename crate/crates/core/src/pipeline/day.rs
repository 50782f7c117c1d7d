//! One pipeline day: features, recommendation, recompilation, flighting,
//! validation and hint generation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hints::HintEntry;
use super::report::{report_metrics, DayReport, StageCounts};
use super::{PipelineError, Stage};
use crate::bandit::{decide, reward_from_costs, DecisionRecord, Mode, Policy};
use crate::featuregen::{action_set, featurize_action, featurize_context, job_features, ActionVector, ContextVector};
use crate::flightsim::{
    classify, flight, run_queue, select_flights, survives, true_work, CostClass, FlightBudget, FlightConfig,
    FlightOutcome, SlotStatus, Survivor,
};
use crate::optkernel::{compile, compile_with_flip, Flip, Job, RuleCatalog};
use crate::seed;
use crate::span::{compute_span, JobSpan};
use crate::validation::{gate, predict_pn_delta, FlightObservation, Gate, ValidationModel};
use crate::workload::ViewRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayConfig {
    pub mode: Mode,
    pub budget: FlightBudget,
    pub threshold: f64,
    pub flight: FlightConfig,
    /// With the gate off every successful flight becomes a hint.
    pub validate: bool,
    pub seed: u64,
}

impl Default for DayConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Log,
            budget: FlightBudget::default(),
            threshold: crate::validation::DEFAULT_THRESHOLD,
            flight: FlightConfig::default(),
            validate: true,
            seed: 0,
        }
    }
}

pub struct DayInputs<'a> {
    pub catalog: &'a RuleCatalog,
    pub view: &'a [ViewRecord],
    /// Job definitions for every job in the view.
    pub jobs: &'a [Job],
    pub policy: Option<&'a Policy>,
    pub vmodel: Option<&'a ValidationModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightRecord {
    pub template_id: String,
    pub job_id: String,
    pub flip: Flip,
    pub cost_default: f64,
    pub cost_new: f64,
    pub projected_s: f64,
    pub slot: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub status: String,
    pub observation: Option<FlightObservation>,
    pub predicted_pn_delta: Option<f64>,
    pub gate: Option<Gate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayOutput {
    pub hints: Vec<HintEntry>,
    /// Uniformly logged decisions, for learning.
    pub log: Vec<DecisionRecord>,
    pub flights: Vec<FlightRecord>,
    pub report: DayReport,
}

struct Decided {
    job: usize,
    span: JobSpan,
    context: ContextVector,
    actions: Vec<ActionVector>,
    flips: Vec<Option<Flip>>,
    cost_default: f64,
    uniform: (usize, f64, Option<f64>),
    exploit: Option<(usize, Option<f64>)>,
}

fn recompiled_cost(catalog: &RuleCatalog, job: &Job, flip: Option<Flip>, cost_default: f64) -> Option<f64> {
    match flip {
        None => Some(cost_default),
        Some(_) => compile_with_flip(catalog, job, flip).ok().map(|p| p.est_cost),
    }
}

pub fn run_day(inputs: &DayInputs<'_>, cfg: &DayConfig) -> Result<DayOutput, PipelineError> {
    let catalog = inputs.catalog;
    let features = job_features(inputs.view);
    let by_id: HashMap<&str, usize> = inputs.jobs.iter().enumerate().map(|(i, j)| (j.job_id.as_str(), i)).collect();
    let mut job_of = Vec::with_capacity(features.len());
    for f in &features {
        let i = by_id.get(f.job_id.as_str()).ok_or_else(|| {
            PipelineError::new(Stage::FeatureGeneration, format!("job {} is missing from the jobs file", f.job_id))
        })?;
        job_of.push(*i);
    }
    let date = inputs.view.first().map(|r| r.date);

    // recommendation
    let decided: Vec<Option<Decided>> = features
        .par_iter()
        .enumerate()
        .map(|(k, f)| -> Result<Option<Decided>, PipelineError> {
            let job = &inputs.jobs[job_of[k]];
            let err = |stage, e: &dyn std::fmt::Display| PipelineError::new(stage, format!("{}: {e}", job.job_id));
            let span = compute_span(catalog, job).map_err(|e| err(Stage::FeatureGeneration, &e))?;
            if span.is_empty() {
                return Ok(None);
            }
            let cost_default = compile(catalog, job, &catalog.default_config())
                .map_err(|e| err(Stage::Recompilation, &e))?
                .est_cost;
            let context = featurize_context(f, &span);
            let flips = action_set(catalog, &span);
            let actions = flips
                .iter()
                .map(|a| featurize_action(catalog, *a))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| err(Stage::Recommendation, &e))?;
            let mut rng = seed::rng(cfg.seed, &["uniform", &job.job_id]);
            let (u, p) = decide(None, &context, &actions, Mode::Log, &mut rng).map_err(|e| err(Stage::Recommendation, &e))?;
            let u_cost = recompiled_cost(catalog, job, flips[u], cost_default);
            let exploit = match cfg.mode {
                Mode::Log => None,
                Mode::Exploit => {
                    let (x, _) = decide(inputs.policy, &context, &actions, Mode::Exploit, &mut rng)
                        .map_err(|e| err(Stage::Recommendation, &e))?;
                    Some((x, recompiled_cost(catalog, job, flips[x], cost_default)))
                }
            };
            Ok(Some(Decided {
                job: job_of[k],
                span,
                context,
                actions,
                flips,
                cost_default,
                uniform: (u, p, u_cost),
                exploit,
            }))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let decided: Vec<Decided> = decided.into_iter().flatten().collect();

    let mut report = DayReport {
        date,
        ..DayReport::default()
    };
    let mut counts = StageCounts {
        jobs: features.len(),
        nonempty_spans: decided.len(),
        ..StageCounts::default()
    };
    let mut log = Vec::with_capacity(decided.len());
    let mut survivors = Vec::new();
    for d in &decided {
        let job = &inputs.jobs[d.job];
        let (u, p, u_cost) = d.uniform;
        report.uniform.add(classify(d.cost_default, u_cost));
        let reward = reward_from_costs(d.cost_default, u_cost)
            .map_err(|e| PipelineError::new(Stage::Recommendation, format!("{}: {e}", job.job_id)))?;
        log.push(DecisionRecord {
            job_id: job.job_id.clone(),
            template_id: job.template_id.clone(),
            span: d.span.clone(),
            context: d.context.clone(),
            actions: d.actions.clone(),
            chosen: u,
            propensity: p,
            reward,
            cost_default: d.cost_default,
            cost_new: u_cost,
        });
        let Some((x, x_cost)) = d.exploit else { continue };
        let class = classify(d.cost_default, x_cost);
        report.exploit.add(class);
        let Some(flip) = d.flips[x] else { continue };
        counts.recompiled += 1;
        match x_cost {
            Some(c) if survives(d.cost_default, c, cfg.budget.est_cost_delta_threshold) => survivors.push(Survivor {
                index: d.job,
                job_id: job.job_id.clone(),
                template_id: job.template_id.clone(),
                flip,
                cost_default: d.cost_default,
                cost_new: c,
            }),
            _ => {
                counts.pruned += 1;
                if class == CostClass::Failed {
                    counts.compile_failed += 1;
                }
            }
        }
    }
    counts.survivors = survivors.len();
    counts.survivor_templates = survivors.iter().map(|s| s.template_id.as_str()).collect::<BTreeSet<_>>().len();

    // flighting
    let latency_of: HashMap<&str, f64> = features.iter().map(|f| (f.job_id.as_str(), f.latency_s)).collect();
    let projected = |s: &Survivor| latency_of[s.job_id.as_str()];
    let selected = select_flights(&survivors, projected, &cfg.budget, cfg.seed);
    counts.selected = selected.len();
    counts.over_budget = counts.survivor_templates - counts.selected;
    let fcfg = FlightConfig {
        per_job_timeout_s: cfg.budget.per_job_timeout_s,
        ..cfg.flight
    };
    let results: Vec<_> = selected
        .par_iter()
        .map(|s| {
            let job = &inputs.jobs[s.index];
            flight(catalog, job, Some(s.flip), &fcfg, seed::derive(cfg.seed, &["flight", &job.job_id]))
        })
        .collect();
    let proj: Vec<f64> = selected.iter().map(|s| projected(s)).collect();
    let schedule = run_queue(&results, &proj, &cfg.budget);

    // validation
    let mut flights = Vec::with_capacity(selected.len());
    let mut hints = Vec::new();
    for ((s, sched), p) in selected.iter().zip(&schedule).zip(&proj) {
        let job = &inputs.jobs[s.index];
        let mut rec = FlightRecord {
            template_id: s.template_id.clone(),
            job_id: s.job_id.clone(),
            flip: s.flip,
            cost_default: s.cost_default,
            cost_new: s.cost_new,
            projected_s: *p,
            slot: sched.slot,
            start_s: sched.start_s,
            end_s: sched.end_s,
            status: String::new(),
            observation: None,
            predicted_pn_delta: None,
            gate: None,
        };
        match &sched.status {
            SlotStatus::Dropped => {
                counts.dropped += 1;
                rec.status = "dropped".into();
            }
            SlotStatus::Cancelled => {
                counts.cancelled += 1;
                rec.status = "cancelled".into();
            }
            SlotStatus::Completed(r) => {
                rec.status = r.outcome.name().into();
                match &r.outcome {
                    FlightOutcome::Failure => counts.failure += 1,
                    FlightOutcome::Timeout => counts.timeout += 1,
                    FlightOutcome::Filtered => counts.filtered += 1,
                    FlightOutcome::Success { baseline, treatment } => {
                        counts.success += 1;
                        let obs = FlightObservation::from_runs(job.date, &job.template_id, &job.job_id, baseline, treatment);
                        let verdict = if !cfg.validate {
                            Gate::Accept
                        } else if let Some(m) = inputs.vmodel {
                            let pred = predict_pn_delta(m, obs.d_read, obs.d_write);
                            rec.predicted_pn_delta = Some(pred);
                            gate(pred, cfg.threshold)
                        } else {
                            Gate::Reject
                        };
                        rec.gate = Some(verdict);
                        rec.observation = Some(obs);
                        if verdict == Gate::Accept {
                            counts.accepted += 1;
                            hints.push(HintEntry {
                                template_id: s.template_id.clone(),
                                rule_id: s.flip.rule,
                                direction: s.flip.direction,
                            });
                        } else {
                            counts.rejected += 1;
                        }
                    }
                }
            }
        }
        flights.push(rec);
    }

    // hint generation
    hints.sort();
    counts.hinted_templates = hints.len();
    let hinted: BTreeMap<&str, Flip> = hints.iter().map(|h| (h.template_id.as_str(), h.flip())).collect();
    let exploded: Vec<usize> = job_of
        .iter()
        .copied()
        .filter(|&i| hinted.contains_key(inputs.jobs[i].template_id.as_str()))
        .collect();
    counts.hinted_jobs = exploded.len();
    let pairs = exploded
        .par_iter()
        .map(|&i| {
            let job = &inputs.jobs[i];
            let flip = hinted[job.template_id.as_str()];
            let s = seed::derive(cfg.seed, &["eval", &job.job_id]);
            let base = compile(catalog, job, &catalog.default_config())
                .map_err(|e| PipelineError::new(Stage::HintGeneration, format!("{}: {e}", job.job_id)))?;
            let treat = compile_with_flip(catalog, job, Some(flip))
                .map_err(|e| PipelineError::new(Stage::HintGeneration, format!("{}: {e}", job.job_id)))?;
            Ok((
                true_work(job, &base).sample(&cfg.flight.noise, s),
                true_work(job, &treat).sample(&cfg.flight.noise, s),
            ))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    report.hinted = report_metrics(&pairs);
    counts
        .check()
        .map_err(|e| PipelineError::new(Stage::HintGeneration, e))?;
    report.counts = counts;
    Ok(DayOutput {
        hints,
        log,
        flights,
        report,
    })
}

/// Tab-separated flight report.
pub fn write_flights(flights: &[FlightRecord]) -> String {
    let mut s = [
        "template_id",
        "job_id",
        "rule_id",
        "direction",
        "cost_default",
        "cost_new",
        "projected_s",
        "slot",
        "start_s",
        "end_s",
        "status",
        "d_read",
        "d_write",
        "d_pn",
        "predicted_pn_delta",
        "gate",
    ]
    .join("\t");
    s.push('\n');
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:e}"));
    for f in flights {
        let o = f.observation.as_ref();
        let row = [
            f.template_id.clone(),
            f.job_id.clone(),
            f.flip.rule.to_string(),
            f.flip.direction.to_string(),
            format!("{:e}", f.cost_default),
            format!("{:e}", f.cost_new),
            format!("{:e}", f.projected_s),
            f.slot.to_string(),
            format!("{:e}", f.start_s),
            format!("{:e}", f.end_s),
            f.status.clone(),
            opt(o.map(|o| o.d_read)),
            opt(o.map(|o| o.d_write)),
            opt(o.map(|o| o.d_pn)),
            opt(f.predicted_pn_delta),
            f.gate.map_or("-".into(), |g| match g {
                Gate::Accept => "accept".into(),
                Gate::Reject => "reject".into(),
            }),
        ];
        s.push_str(&row.join("\t"));
        s.push('\n');
    }
    s
}

impl DayOutput {
    pub fn hinted_flip(&self, template_id: &str) -> Option<Flip> {
        self.hints.iter().find(|h| h.template_id == template_id).map(HintEntry::flip)
    }
}
