//! Per-job features from the workload view, and the context and action
//! encodings consumed by the bandit.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optkernel::{Direction, Flip, RuleCatalog, RuleCategory, RuleId};
use crate::seed::StableHasher;
use crate::span::JobSpan;
use crate::workload::ViewRecord;

/// Bits of the hashed sparse space.
pub const HASH_BITS: u32 = 18;
pub const HASH_DIM: usize = 1 << HASH_BITS;

/// Names of the dense context features, in vector order.
pub const DENSE_NAMES: [&str; 10] = [
    "latency_s",
    "estimated_cost",
    "total_vertices",
    "estimated_cardinality",
    "bytes_read",
    "max_memory_mb",
    "avg_memory_mb",
    "avg_row_length",
    "row_count",
    "pn_hours",
];
pub const DENSE_DIM: usize = DENSE_NAMES.len();

/// One row per job: the super-root over the job's query records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobFeatures {
    pub job_id: String,
    pub normalized_job_name: String,
    pub rule_signature: String,
    pub latency_s: f64,
    pub estimated_cost: f64,
    pub query_template: String,
    pub total_vertices: u64,
    pub estimated_cardinality: f64,
    pub bytes_read: f64,
    pub max_memory_mb: f64,
    pub avg_memory_mb: f64,
    pub avg_row_length: f64,
    pub row_count: f64,
    pub pn_hours: f64,
}

impl JobFeatures {
    pub fn dense_raw(&self) -> [f64; DENSE_DIM] {
        [
            self.latency_s,
            self.estimated_cost,
            self.total_vertices as f64,
            self.estimated_cardinality,
            self.bytes_read,
            self.max_memory_mb,
            self.avg_memory_mb,
            self.avg_row_length,
            self.row_count,
            self.pn_hours,
        ]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("no records for the super root")]
    Empty,
    #[error("records mix jobs {0:?} and {1:?}")]
    MixedJobs(String, String),
    #[error("rule {0} is required and cannot be an action")]
    RequiredAction(RuleId),
    #[error("rule {0} is not in the catalog")]
    UnknownRule(RuleId),
}

fn min_str<'a>(it: impl Iterator<Item = &'a str>) -> String {
    it.min().unwrap_or_default().to_string()
}

fn min_f(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(f64::INFINITY, f64::min)
}

pub fn build_super_root(records: &[&ViewRecord]) -> Result<JobFeatures, FeatureError> {
    let first = records.first().ok_or(FeatureError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.job_id != first.job_id) {
        return Err(FeatureError::MixedJobs(first.job_id.clone(), other.job_id.clone()));
    }
    let n = records.len() as f64;
    Ok(JobFeatures {
        job_id: first.job_id.clone(),
        normalized_job_name: min_str(records.iter().map(|r| r.normalized_job_name.as_str())),
        rule_signature: min_str(records.iter().map(|r| r.rule_signature.as_str())),
        latency_s: min_f(records.iter().map(|r| r.latency_s)),
        estimated_cost: min_f(records.iter().map(|r| r.estimated_cost)),
        query_template: min_str(records.iter().map(|r| r.template_id.as_str())),
        total_vertices: records.iter().map(|r| r.total_vertices).min().unwrap_or(0),
        estimated_cardinality: records.iter().map(|r| r.estimated_cardinality).sum(),
        bytes_read: records.iter().map(|r| r.bytes_read).sum(),
        max_memory_mb: min_f(records.iter().map(|r| r.max_memory_mb)),
        avg_memory_mb: min_f(records.iter().map(|r| r.avg_memory_mb)),
        avg_row_length: records.iter().map(|r| r.avg_row_length).sum::<f64>() / n,
        row_count: records.iter().map(|r| r.row_count).sum(),
        pn_hours: min_f(records.iter().map(|r| r.pn_hours)),
    })
}

/// Group view records by job, preserving first-appearance order, and build
/// one super root per job.
pub fn job_features(records: &[ViewRecord]) -> Vec<JobFeatures> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: std::collections::HashMap<&str, Vec<&ViewRecord>> = Default::default();
    for r in records {
        groups
            .entry(r.job_id.as_str())
            .or_insert_with(|| {
                order.push(r.job_id.as_str());
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|id| build_super_root(&groups[id]).expect("grouped by job"))
        .collect()
}

/// Span indicators before hashing: every subset of size 1, 2 and 3, in
/// lexicographic order.
pub fn span_indicators(span: &JobSpan) -> Vec<Vec<RuleId>> {
    let s = span.to_vec();
    let mut out = Vec::new();
    for i in 0..s.len() {
        out.push(vec![s[i]]);
    }
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            out.push(vec![s[i], s[j]]);
        }
    }
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            for k in j + 1..s.len() {
                out.push(vec![s[i], s[j], s[k]]);
            }
        }
    }
    out
}

pub fn hash_indicator(rules: &[RuleId]) -> u32 {
    let mut h = StableHasher::new().str("span");
    for &r in rules {
        h = h.u64(r as u64);
    }
    (h.finish() & (HASH_DIM as u64 - 1)) as u32
}

/// Fraction of indicators lost to collisions: `1 - distinct / total`.
pub fn collision_rate(span: &JobSpan) -> f64 {
    let ind = span_indicators(span);
    if ind.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<u32> = ind.iter().map(|i| hash_indicator(i)).collect();
    1.0 - distinct.len() as f64 / ind.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextVector {
    /// `log1p` of the raw dense features; standardization happens in the
    /// policy with its persisted constants.
    pub dense: Vec<f64>,
    /// Sorted, distinct hashed indicators: span subsets plus the job's
    /// name and default rule signature.
    pub sparse: Vec<u32>,
}

pub fn dense_context(f: &JobFeatures) -> Vec<f64> {
    f.dense_raw().iter().map(|x| x.max(0.0).ln_1p()).collect()
}

fn hash_categorical(field: &str, value: &str) -> u32 {
    (StableHasher::new().str(field).str(value).finish() & (HASH_DIM as u64 - 1)) as u32
}

pub fn sparse_context(f: &JobFeatures, span: &JobSpan) -> Vec<u32> {
    let mut v: Vec<u32> = span_indicators(span).iter().map(|i| hash_indicator(i)).collect();
    v.push(hash_categorical("normalized_job_name", &f.normalized_job_name));
    v.push(hash_categorical("rule_signature", &f.rule_signature));
    v.sort_unstable();
    v.dedup();
    v
}

pub fn featurize_context(f: &JobFeatures, span: &JobSpan) -> ContextVector {
    ContextVector {
        dense: dense_context(f),
        sparse: sparse_context(f, span),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionVector {
    pub noop: bool,
    pub rule: Option<RuleId>,
    pub category: Option<RuleCategory>,
    pub direction: Option<Direction>,
}

impl ActionVector {
    pub fn noop() -> Self {
        Self {
            noop: true,
            rule: None,
            category: None,
            direction: None,
        }
    }

    /// The active one-hot tokens.
    pub fn tokens(&self) -> Vec<String> {
        match (self.rule, self.category, self.direction) {
            (Some(r), Some(c), Some(d)) => vec![format!("rule:{r}"), format!("cat:{}", c.as_str()), format!("dir:{d}")],
            _ => vec!["noop".to_string()],
        }
    }
}

pub fn featurize_action(catalog: &RuleCatalog, action: Option<Flip>) -> Result<ActionVector, FeatureError> {
    let Some(flip) = action else {
        return Ok(ActionVector::noop());
    };
    let category = catalog.category(flip.rule).ok_or(FeatureError::UnknownRule(flip.rule))?;
    if category == RuleCategory::Required {
        return Err(FeatureError::RequiredAction(flip.rule));
    }
    Ok(ActionVector {
        noop: false,
        rule: Some(flip.rule),
        category: Some(category),
        direction: Some(flip.direction),
    })
}

/// No-op first, then the inverting flip of every span rule in ascending id.
pub fn action_set(catalog: &RuleCatalog, span: &JobSpan) -> Vec<Option<Flip>> {
    std::iter::once(None)
        .chain(span.rules.iter().map(|&r| Some(Flip::inverting(catalog, r).expect("span excludes required rules"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_counts() {
        let span = JobSpan::from_rules([3, 7]);
        assert_eq!(span_indicators(&span), vec![vec![3], vec![7], vec![3, 7]]);
        assert!(span_indicators(&JobSpan::default()).is_empty());
        let ten = JobSpan::from_rules(4..14);
        assert_eq!(span_indicators(&ten).len(), 10 + 45 + 120);
    }
}
