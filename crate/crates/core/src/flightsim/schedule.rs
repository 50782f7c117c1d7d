//! Recompilation pruning, flight selection and the flight queue.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::flight::{FlightResult, DEFAULT_TIMEOUT_S};
use crate::optkernel::{compile, compile_with_flip, Flip, Job, RuleCatalog};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightBudget {
    pub queue_size: usize,
    pub per_job_timeout_s: f64,
    pub total_budget_s: f64,
    /// Minimum relative estimated-cost improvement a candidate needs.
    pub est_cost_delta_threshold: f64,
}

impl Default for FlightBudget {
    fn default() -> Self {
        Self {
            queue_size: 8,
            per_job_timeout_s: DEFAULT_TIMEOUT_S,
            total_budget_s: 4.0 * 3600.0,
            est_cost_delta_threshold: 0.0,
        }
    }
}

/// How recompiled costs compare with the default, in the four buckets of a
/// random-versus-learned comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostCounts {
    pub lower: usize,
    pub equal: usize,
    pub higher: usize,
    pub failed: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostClass {
    Lower,
    Equal,
    Higher,
    Failed,
}

/// Relative tolerance under which two estimated costs count as equal.
pub const COST_EQ_TOL: f64 = 1e-9;

pub fn classify(cost_default: f64, cost_new: Option<f64>) -> CostClass {
    match cost_new {
        None => CostClass::Failed,
        Some(c) if (c - cost_default).abs() <= COST_EQ_TOL * cost_default => CostClass::Equal,
        Some(c) if c < cost_default => CostClass::Lower,
        Some(_) => CostClass::Higher,
    }
}

impl CostCounts {
    pub fn add(&mut self, class: CostClass) {
        match class {
            CostClass::Lower => self.lower += 1,
            CostClass::Equal => self.equal += 1,
            CostClass::Higher => self.higher += 1,
            CostClass::Failed => self.failed += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.lower + self.equal + self.higher + self.failed
    }

    fn frac(&self, n: usize) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            n as f64 / self.total() as f64
        }
    }

    pub fn lower_frac(&self) -> f64 {
        self.frac(self.lower)
    }

    pub fn equal_frac(&self) -> f64 {
        self.frac(self.equal)
    }

    pub fn higher_frac(&self) -> f64 {
        self.frac(self.higher)
    }

    pub fn failed_frac(&self) -> f64 {
        self.frac(self.failed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Survivor {
    /// Position in the candidate list.
    pub index: usize,
    pub job_id: String,
    pub template_id: String,
    pub flip: Flip,
    pub cost_default: f64,
    pub cost_new: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pruned {
    pub survivors: Vec<Survivor>,
    pub counts: CostCounts,
}

/// Whether a recompiled cost improves enough to be worth flighting.
pub fn survives(cost_default: f64, cost_new: f64, threshold: f64) -> bool {
    classify(cost_default, Some(cost_new)) == CostClass::Lower && (cost_default - cost_new) / cost_default > threshold
}

/// Recompile every candidate and keep those whose estimated cost improves
/// on the default by more than `threshold` (relative).
pub fn recompile_and_prune(catalog: &RuleCatalog, candidates: &[(&Job, Flip)], threshold: f64) -> Pruned {
    let default = catalog.default_config();
    let mut out = Pruned::default();
    for (index, (job, flip)) in candidates.iter().enumerate() {
        let Ok(base) = compile(catalog, job, &default) else {
            out.counts.add(CostClass::Failed);
            continue;
        };
        let new = compile_with_flip(catalog, job, Some(*flip)).ok().map(|p| p.est_cost);
        out.counts.add(classify(base.est_cost, new));
        if let Some(c) = new {
            if survives(base.est_cost, c, threshold) {
                out.survivors.push(Survivor {
                    index,
                    job_id: job.job_id.clone(),
                    template_id: job.template_id.clone(),
                    flip: *flip,
                    cost_default: base.est_cost,
                    cost_new: c,
                });
            }
        }
    }
    out
}

/// Earliest-free-slot list scheduling of `durations` on `slots`; returns
/// the makespan.
fn makespan(durations: &[f64], slots: usize) -> f64 {
    let mut free = vec![0.0f64; slots.max(1)];
    let mut end = 0.0f64;
    for &d in durations {
        let (i, t) = free
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one slot");
        free[i] = t + d;
        end = end.max(free[i]);
    }
    end
}

/// One representative per template, cheapest recompiled cost first, cut
/// where the projected makespan would pass the budget.
pub fn select_flights<'a>(
    survivors: &'a [Survivor],
    projected_s: impl Fn(&Survivor) -> f64,
    budget: &FlightBudget,
    seed: u64,
) -> Vec<&'a Survivor> {
    let mut by_template: BTreeMap<&str, Vec<&Survivor>> = BTreeMap::new();
    for s in survivors {
        by_template.entry(s.template_id.as_str()).or_default().push(s);
    }
    let mut reps: Vec<&Survivor> = by_template
        .into_iter()
        .map(|(tid, group)| {
            let mut rng = seed::rng(seed, &["representative", tid]);
            group[rng.random_range(0..group.len())]
        })
        .collect();
    reps.sort_by(|a, b| a.cost_new.total_cmp(&b.cost_new).then_with(|| a.template_id.cmp(&b.template_id)));

    let mut durations = Vec::new();
    let mut keep = 0;
    for s in &reps {
        durations.push(projected_s(s).min(budget.per_job_timeout_s));
        if makespan(&durations, budget.queue_size) > budget.total_budget_s {
            break;
        }
        keep += 1;
    }
    reps.truncate(keep);
    reps
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SlotStatus {
    Completed(FlightResult),
    /// Still running when the budget ran out.
    Cancelled,
    /// Never started: no slot freed up early enough.
    Dropped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledFlight {
    pub slot: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub status: SlotStatus,
}

#[derive(PartialEq)]
struct Free(f64, usize);

impl Eq for Free {}

impl PartialOrd for Free {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Free {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on time, then slot
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Discrete-event run of the flight queue. Flights start in list order on
/// the earliest free slot; a flight whose projection no longer fits is
/// dropped with everything after it, and one that would overrun the budget
/// is cancelled at the budget.
pub fn run_queue(
    results: &[FlightResult],
    projected_s: &[f64],
    budget: &FlightBudget,
) -> Vec<ScheduledFlight> {
    let mut heap: BinaryHeap<Free> = (0..budget.queue_size.max(1)).map(|i| Free(0.0, i)).collect();
    let mut out = Vec::with_capacity(results.len());
    let mut exhausted = false;
    for (r, &proj) in results.iter().zip(projected_s) {
        let Free(now, slot) = heap.pop().expect("queue has slots");
        if exhausted || now + proj.min(budget.per_job_timeout_s) > budget.total_budget_s {
            exhausted = true;
            heap.push(Free(now, slot));
            out.push(ScheduledFlight {
                slot,
                start_s: now,
                end_s: now,
                status: SlotStatus::Dropped,
            });
            continue;
        }
        let end = now + r.duration_s;
        let (end, status) = if end > budget.total_budget_s {
            (budget.total_budget_s, SlotStatus::Cancelled)
        } else {
            (end, SlotStatus::Completed(r.clone()))
        };
        heap.push(Free(end, slot));
        out.push(ScheduledFlight {
            slot,
            start_s: now,
            end_s: end,
            status,
        });
    }
    out
}
