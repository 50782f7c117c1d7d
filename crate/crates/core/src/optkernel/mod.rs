//! A small deterministic rule-based optimizer. `compile` rewrites each query
//! tree with the enabled transformation rules, picks physical operators by
//! estimated cost, and reports which rules contributed to the final plan.

pub mod catalog;
pub mod config;
pub mod cost;
mod implement;
pub mod logical;
pub mod physical;
mod rewrite;

use thiserror::Error;

pub use catalog::{CatalogError, Rule, RuleCatalog, RuleCategory, RuleId, RuleKind};
pub use config::{apply_flip, Direction, Flip, FlipError, RuleConfig, RuleSignature};
pub use cost::CostModel;
pub use logical::{Job, Logical};
pub use physical::{OptimizedPlan, PhysNode, PhysOp, QueryEstimates};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("config has {got} bits but the catalog has {expected} rules")]
    ConfigLength { expected: usize, got: usize },
    #[error("required rule {0} is disabled")]
    RequiredDisabled(RuleId),
    #[error("no enabled rule implements {0}")]
    NoImplementation(&'static str),
    #[error("rule {rule} produced an invalid plan: {reason}")]
    InvalidRewrite { rule: &'static str, reason: &'static str },
    #[error("job has no queries")]
    EmptyJob,
    #[error(transparent)]
    Flip(#[from] FlipError),
}

/// The active default catalog.
pub fn rule_catalog() -> RuleCatalog {
    RuleCatalog::default_catalog()
}

/// Mutable state of one compilation.
pub(crate) struct Ctx<'a> {
    pub catalog: &'a RuleCatalog,
    pub config: &'a RuleConfig,
    pub job: &'a Job,
    pub model: CostModel,
    pub signature: RuleSignature,
}

impl Ctx<'_> {
    pub fn enabled(&self, kind: RuleKind) -> bool {
        self.catalog
            .id_of(kind)
            .is_some_and(|id| self.config.is_enabled(id))
    }

    pub fn fire(&mut self, kind: RuleKind) {
        if let Some(id) = self.catalog.id_of(kind) {
            debug_assert!(self.config.is_enabled(id), "{kind:?} fired while disabled");
            self.signature.insert(id);
        }
    }
}

pub fn compile(
    catalog: &RuleCatalog,
    job: &Job,
    config: &RuleConfig,
) -> Result<OptimizedPlan, CompileError> {
    if config.len() != catalog.len() {
        return Err(CompileError::ConfigLength {
            expected: catalog.len(),
            got: config.len(),
        });
    }
    if let Some(id) = catalog
        .ids_in(RuleCategory::Required)
        .find(|&id| !config.is_enabled(id))
    {
        return Err(CompileError::RequiredDisabled(id));
    }
    if job.queries.is_empty() {
        return Err(CompileError::EmptyJob);
    }
    let mut ctx = Ctx {
        catalog,
        config,
        job,
        model: CostModel::estimator(),
        signature: RuleSignature::empty(catalog.len()),
    };
    ctx.fire(RuleKind::ExpressionNormalization);

    let mut roots = Vec::with_capacity(job.queries.len());
    let mut per_query = Vec::with_capacity(job.queries.len());
    let mut est_cost = 0.0;
    for q in &job.queries {
        let rewritten = rewrite::rewrite(&mut ctx, q.clone())?;
        let mut root = implement::implement(&mut ctx, &rewritten)?;
        physical::assign_dops(&mut root);
        est_cost += ctx.model.tree_cost(&root, &job.schema);
        let mut row_count = 0.0;
        root.visit(&mut |n| {
            if matches!(n.op, PhysOp::TableScan { .. }) {
                row_count += n.rows;
            }
        });
        per_query.push(QueryEstimates {
            est_cardinality: root.rows,
            avg_row_length: root.width,
            row_count,
        });
        roots.push(root);
    }
    Ok(OptimizedPlan {
        roots,
        est_cost,
        signature: ctx.signature,
        per_query,
    })
}

/// Compile with a single flip applied to the catalog default.
pub fn compile_with_flip(
    catalog: &RuleCatalog,
    job: &Job,
    flip: Option<Flip>,
) -> Result<OptimizedPlan, CompileError> {
    let default = catalog.default_config();
    match flip {
        None => compile(catalog, job, &default),
        Some(f) => compile(catalog, job, &apply_flip(catalog, &default, f)?),
    }
}
