//! Jobs, their logical query trees, and cardinality derivation.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub type TableId = usize;
pub type PredId = usize;
pub type GroupId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    /// Bytes per row.
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredKind {
    /// Single-table filter.
    Filter { table: TableId },
    /// Equality join between two tables.
    Equi { left: TableId, right: TableId },
    /// Non-equality (or cross, at selectivity 1) join between two tables.
    Theta { left: TableId, right: TableId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub kind: PredKind,
    /// Implied by another conjunct on the same table; its true selectivity
    /// is 1 while the estimator still multiplies it in.
    pub redundant: bool,
    /// Contains a foldable constant sub-expression.
    pub constant_expr: bool,
}

impl Predicate {
    pub fn filter(table: TableId) -> Self {
        Self {
            kind: PredKind::Filter { table },
            redundant: false,
            constant_expr: false,
        }
    }

    pub fn equi(left: TableId, right: TableId) -> Self {
        Self {
            kind: PredKind::Equi { left, right },
            redundant: false,
            constant_expr: false,
        }
    }

    pub fn theta(left: TableId, right: TableId) -> Self {
        Self {
            kind: PredKind::Theta { left, right },
            redundant: false,
            constant_expr: false,
        }
    }

    pub fn is_equi(&self) -> bool {
        matches!(self.kind, PredKind::Equi { .. })
    }

    pub fn join_tables(&self) -> Option<(TableId, TableId)> {
        match self.kind {
            PredKind::Equi { left, right } | PredKind::Theta { left, right } => Some((left, right)),
            PredKind::Filter { .. } => None,
        }
    }

    pub fn filter_table(&self) -> Option<TableId> {
        match self.kind {
            PredKind::Filter { table } => Some(table),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupDef {
    /// Table whose rows carry both the grouping keys and the aggregated
    /// measures, making pre-aggregation below a join possible.
    pub eager_table: Option<TableId>,
    /// Aggregates that can be split into partial and final phases.
    pub decomposable: bool,
    /// Output bytes per group.
    pub width: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub tables: Vec<TableDef>,
    pub predicates: Vec<Predicate>,
    pub groups: Vec<GroupDef>,
}

/// Per-run statistics. The same structure holds optimizer estimates and,
/// after applying [`CardinalityErrors`], ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub table_rows: Vec<f64>,
    pub selectivity: Vec<f64>,
    pub group_ndv: Vec<f64>,
    /// Distinct (group key, join key) combinations on the eager table.
    pub eager_ndv: Vec<f64>,
}

/// Multiplicative estimation errors, fixed per template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CardinalityErrors {
    pub selectivity: Vec<f64>,
    pub group_ndv: Vec<f64>,
    pub eager_ndv: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Logical {
    Scan {
        table: TableId,
        /// Fraction of the row width read after column pruning.
        keep: f64,
    },
    Filter {
        input: Box<Logical>,
        preds: Vec<PredId>,
        folded: bool,
    },
    Project {
        input: Box<Logical>,
        keep: f64,
    },
    Join {
        left: Box<Logical>,
        right: Box<Logical>,
        pred: PredId,
    },
    Aggregate {
        input: Box<Logical>,
        group: GroupId,
    },
    /// Local pre-aggregation introduced below a join.
    PreAggregate {
        input: Box<Logical>,
        group: GroupId,
    },
    Union {
        inputs: Vec<Logical>,
    },
    Limit {
        input: Box<Logical>,
        count: f64,
    },
    Output {
        input: Box<Logical>,
        ordered: bool,
    },
}

impl Logical {
    pub fn scan(table: TableId) -> Self {
        Logical::Scan { table, keep: 1.0 }
    }

    pub fn filter(self, preds: Vec<PredId>) -> Self {
        Logical::Filter {
            input: Box::new(self),
            preds,
            folded: false,
        }
    }

    pub fn project(self, keep: f64) -> Self {
        Logical::Project {
            input: Box::new(self),
            keep,
        }
    }

    pub fn join(self, right: Logical, pred: PredId) -> Self {
        Logical::Join {
            left: Box::new(self),
            right: Box::new(right),
            pred,
        }
    }

    pub fn aggregate(self, group: GroupId) -> Self {
        Logical::Aggregate {
            input: Box::new(self),
            group,
        }
    }

    pub fn union(inputs: Vec<Logical>) -> Self {
        Logical::Union { inputs }
    }

    pub fn limit(self, count: f64) -> Self {
        Logical::Limit {
            input: Box::new(self),
            count,
        }
    }

    pub fn output(self, ordered: bool) -> Self {
        Logical::Output {
            input: Box::new(self),
            ordered,
        }
    }

    pub fn children(&self) -> Vec<&Logical> {
        match self {
            Logical::Scan { .. } => vec![],
            Logical::Filter { input, .. }
            | Logical::Project { input, .. }
            | Logical::Aggregate { input, .. }
            | Logical::PreAggregate { input, .. }
            | Logical::Limit { input, .. }
            | Logical::Output { input, .. } => vec![input],
            Logical::Join { left, right, .. } => vec![left, right],
            Logical::Union { inputs } => inputs.iter().collect(),
        }
    }

    /// Tables read anywhere below this node, ascending.
    pub fn tables(&self) -> Vec<TableId> {
        let mut out = Vec::new();
        self.collect_tables(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_tables(&self, out: &mut Vec<TableId>) {
        if let Logical::Scan { table, .. } = self {
            out.push(*table);
        }
        for c in self.children() {
            c.collect_tables(out);
        }
    }

    pub fn contains_table(&self, t: TableId) -> bool {
        self.tables().binary_search(&t).is_ok()
    }

    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }
}

/// Cardinality of a logical subtree under independence assumptions.
pub fn rows(node: &Logical, stats: &InputStats) -> f64 {
    match node {
        Logical::Scan { table, .. } => stats.table_rows[*table],
        Logical::Filter { input, preds, .. } => {
            rows(input, stats) * preds.iter().map(|&p| stats.selectivity[p]).product::<f64>()
        }
        Logical::Project { input, .. }
        | Logical::Output { input, .. } => rows(input, stats),
        Logical::Join { left, right, pred } => {
            rows(left, stats) * rows(right, stats) * stats.selectivity[*pred]
        }
        Logical::Aggregate { input, group } => agg_rows(rows(input, stats), stats.group_ndv[*group]),
        Logical::PreAggregate { input, group } => {
            agg_rows(rows(input, stats), stats.eager_ndv[*group])
        }
        Logical::Union { inputs } => inputs.iter().map(|i| rows(i, stats)).sum(),
        Logical::Limit { input, count } => rows(input, stats).min(*count),
    }
}

pub fn agg_rows(input: f64, ndv: f64) -> f64 {
    input.min(ndv).max(input.min(1.0))
}

/// Bytes per row produced by a logical subtree.
pub fn width(node: &Logical, schema: &Schema) -> f64 {
    match node {
        Logical::Scan { table, keep } => schema.tables[*table].width * keep,
        Logical::Filter { input, .. }
        | Logical::Limit { input, .. }
        | Logical::Output { input, .. } => width(input, schema),
        Logical::Project { input, keep } => width(input, schema) * keep,
        Logical::Join { left, right, .. } => width(left, schema) + width(right, schema),
        Logical::Aggregate { group, .. } => schema.groups[*group].width,
        Logical::PreAggregate { input, group } => {
            width(input, schema).min(schema.groups[*group].width * 2.0)
        }
        Logical::Union { inputs } => inputs
            .iter()
            .map(|i| width(i, schema))
            .fold(0.0, f64::max),
    }
}

/// A recurring job instance: a script of query trees plus the statistics of
/// this particular run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub template_id: String,
    pub normalized_name: String,
    pub date: NaiveDate,
    pub schema: Schema,
    /// One tree per output dataset; each root is an `Output`.
    pub queries: Vec<Logical>,
    pub input_stats: InputStats,
    pub errors: CardinalityErrors,
}

impl Job {
    /// Ground-truth statistics: estimates corrected by the template's
    /// per-operator errors. Redundant conjuncts truly filter nothing.
    pub fn true_stats(&self) -> InputStats {
        let est = &self.input_stats;
        let selectivity = est
            .selectivity
            .iter()
            .zip(&self.errors.selectivity)
            .zip(&self.schema.predicates)
            .map(|((s, e), p)| if p.redundant { 1.0 } else { (s * e).min(1.0) })
            .collect();
        let scale = |v: &[f64], e: &[f64]| v.iter().zip(e).map(|(a, b)| (a * b).max(1.0)).collect();
        InputStats {
            table_rows: est.table_rows.clone(),
            selectivity,
            group_ndv: scale(&est.group_ndv, &self.errors.group_ndv),
            eager_ndv: scale(&est.eager_ndv, &self.errors.eager_ndv),
        }
    }
}
