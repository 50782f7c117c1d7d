//! The per-template hints file consumed at compile time.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optkernel::{apply_flip, compile, CompileError, Direction, Flip, FlipError, Job, OptimizedPlan, RuleCatalog, RuleConfig, RuleId};
use crate::tsv::{self, parse_int, ParseError};

pub const HINTS_HEADER: &str = "# qo-advisor-hints v1";

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HintEntry {
    pub template_id: String,
    pub rule_id: RuleId,
    pub direction: Direction,
}

impl HintEntry {
    pub fn flip(&self) -> Flip {
        Flip::new(self.rule_id, self.direction)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum HintError {
    #[error("hints {0}")]
    Parse(#[from] ParseError),
    #[error("hints line {line}: duplicate template {template_id}")]
    Duplicate { line: usize, template_id: String },
    #[error("hint for {template_id}: {source}")]
    Invalid { template_id: String, source: FlipError },
}

pub fn write_hints(entries: &[HintEntry]) -> String {
    let mut s = format!("{HINTS_HEADER}\n");
    for e in entries {
        s.push_str(&format!("{}\t{}\t{}\n", e.template_id, e.rule_id, e.direction));
    }
    s
}

pub fn parse_hints(text: &str) -> Result<Vec<HintEntry>, HintError> {
    let mut lines = text.lines();
    if lines.next().map(|l| l.trim_end_matches('\r')) != Some(HINTS_HEADER) {
        return Err(ParseError::new(1, format!("expected header {HINTS_HEADER:?}")).into());
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let no = i + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = tsv::fields(line, 3, no)?;
        if f[0].is_empty() {
            return Err(ParseError::new(no, "template_id is empty").into());
        }
        let direction = f[2].parse().map_err(|e: String| ParseError::new(no, e))?;
        if !seen.insert(f[0].to_string()) {
            return Err(HintError::Duplicate {
                line: no,
                template_id: f[0].to_string(),
            });
        }
        out.push(HintEntry {
            template_id: f[0].to_string(),
            rule_id: parse_int(f[1], "rule_id", no)?,
            direction,
        });
    }
    Ok(out)
}

/// Check every entry is a genuine single flip of the catalog default.
pub fn validate_hints(catalog: &RuleCatalog, entries: &[HintEntry]) -> Result<(), HintError> {
    let default = catalog.default_config();
    for e in entries {
        apply_flip(catalog, &default, e.flip()).map_err(|source| HintError::Invalid {
            template_id: e.template_id.clone(),
            source,
        })?;
    }
    Ok(())
}

/// The configuration a job compiles with under `hints`.
pub fn hinted_config(catalog: &RuleCatalog, job: &Job, hints: &[HintEntry]) -> Result<RuleConfig, FlipError> {
    let default = catalog.default_config();
    match hints.iter().find(|h| h.template_id == job.template_id) {
        Some(h) => apply_flip(catalog, &default, h.flip()),
        None => Ok(default),
    }
}

pub fn compile_with_hints(catalog: &RuleCatalog, job: &Job, hints: &[HintEntry]) -> Result<OptimizedPlan, CompileError> {
    let config = hinted_config(catalog, job, hints)?;
    compile(catalog, job, &config)
}
