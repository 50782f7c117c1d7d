//! Job spans: the non-required rules whose single flip can change a job's
//! final plan.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optkernel::{apply_flip, compile, CompileError, Flip, Job, RuleCatalog, RuleCategory, RuleId};

/// Largest catalog the exhaustive oracle accepts.
pub const BRUTE_FORCE_GUARD: usize = 64;

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JobSpan {
    pub rules: BTreeSet<RuleId>,
}

impl JobSpan {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, id: RuleId) -> bool {
        self.rules.contains(&id)
    }

    /// Ascending rule ids.
    pub fn to_vec(&self) -> Vec<RuleId> {
        self.rules.iter().copied().collect()
    }

    pub fn from_rules(rules: impl IntoIterator<Item = RuleId>) -> Self {
        Self {
            rules: rules.into_iter().collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpanStop {
    FixPoint,
    CompileFailed,
    IterationCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanTrace {
    pub span: JobSpan,
    /// Recompilations after the default compile.
    pub recompilations: usize,
    pub stop: SpanStop,
    /// Size of the disabled set after each successful iteration.
    pub disabled_sizes: Vec<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpanError {
    #[error("catalog has {0} rules; the exhaustive oracle allows at most {BRUTE_FORCE_GUARD}")]
    GuardExceeded(usize),
    #[error("default plan does not compile: {0}")]
    Default(#[from] CompileError),
}

pub fn compute_span(catalog: &RuleCatalog, job: &Job) -> Result<JobSpan, CompileError> {
    compute_span_traced(catalog, job).map(|t| t.span)
}

/// The fix-point search. Starting from the default configuration, every
/// OffByDefault rule is enabled and every other rule that fired by default
/// is disabled; each successful recompilation adds its newly fired rules to
/// the span and disables them, until nothing new fires or compilation
/// fails.
pub fn compute_span_traced(catalog: &RuleCatalog, job: &Job) -> Result<SpanTrace, CompileError> {
    let default = catalog.default_config();
    let base = compile(catalog, job, &default)?;
    let required = |id: RuleId| catalog.category(id) == Some(RuleCategory::Required);

    let mut span = BTreeSet::new();
    let mut config = default.clone();
    for id in catalog.ids_in(RuleCategory::OffByDefault) {
        config.set(id, true);
    }
    let mut disabled = 0;
    for id in base.signature.rules().filter(|&id| !required(id)) {
        span.insert(id);
        if config.is_enabled(id) {
            config.set(id, false);
            disabled += 1;
        }
    }

    let cap = catalog.len();
    let mut recompilations = 0;
    let mut disabled_sizes = vec![disabled];
    let stop = loop {
        if recompilations >= cap {
            break SpanStop::IterationCap;
        }
        recompilations += 1;
        let plan = match compile(catalog, job, &config) {
            Ok(p) => p,
            Err(_) => break SpanStop::CompileFailed,
        };
        let fresh: Vec<RuleId> = plan
            .signature
            .rules()
            .filter(|&id| !required(id) && !span.contains(&id))
            .collect();
        if fresh.is_empty() {
            break SpanStop::FixPoint;
        }
        for id in fresh {
            span.insert(id);
            config.set(id, false);
            disabled += 1;
        }
        disabled_sizes.push(disabled);
    };
    Ok(SpanTrace {
        span: JobSpan { rules: span },
        recompilations,
        stop,
        disabled_sizes,
    })
}

/// Every non-required rule whose single flip from the default changes the
/// final plan or makes compilation fail.
pub fn brute_force_affecting_rules(catalog: &RuleCatalog, job: &Job) -> Result<BTreeSet<RuleId>, SpanError> {
    if catalog.len() > BRUTE_FORCE_GUARD {
        return Err(SpanError::GuardExceeded(catalog.len()));
    }
    let default = catalog.default_config();
    let base = compile(catalog, job, &default)?;
    let mut out = BTreeSet::new();
    for rule in catalog.rules() {
        if rule.category == RuleCategory::Required {
            continue;
        }
        let flip = Flip::inverting(catalog, rule.id).expect("non-required rule");
        let cfg = apply_flip(catalog, &default, flip).expect("inverting flip applies");
        match compile(catalog, job, &cfg) {
            Ok(plan) if plan.same_dag(&base) => {}
            _ => {
                out.insert(rule.id);
            }
        }
    }
    Ok(out)
}

/// `|span ∩ oracle| / |oracle|`, or 1 when the oracle set is empty.
pub fn recall(span: &JobSpan, oracle: &BTreeSet<RuleId>) -> f64 {
    if oracle.is_empty() {
        return 1.0;
    }
    oracle.iter().filter(|r| span.contains(**r)).count() as f64 / oracle.len() as f64
}
