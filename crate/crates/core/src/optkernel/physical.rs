//! Physical operator trees produced by the kernel.

use serde::{Deserialize, Serialize};

use super::catalog::RuleId;
use super::config::RuleSignature;
use super::logical::{agg_rows, GroupId, InputStats, PredId, Schema, TableId};

/// Bytes one vertex is planned to consume.
pub const BYTES_PER_VERTEX: f64 = 256.0 * 1024.0 * 1024.0;
pub const MAX_DOP: u32 = 500;
/// Per-partition output bound of a partial aggregation is `ndv * fanout`.
pub const PARTIAL_AGG_FANOUT: f64 = 32.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExchangeKind {
    Hash,
    Range,
    Broadcast,
    Gather,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PhysOp {
    TableScan { table: TableId, keep: f64 },
    Filter { preds: Vec<PredId>, folded: bool },
    Project { keep: f64 },
    Exchange { kind: ExchangeKind },
    Sort { range: bool },
    /// Children: `[probe, build]`. `reduced_by` lists filters already
    /// applied to the probe side through a semi-join reduction; they are
    /// factored back out of the output estimate.
    HashJoin { pred: PredId, reduced_by: Vec<PredId> },
    MergeJoin { pred: PredId, reduced_by: Vec<PredId> },
    /// Children: `[outer, inner]`, inner broadcast.
    NestedLoopJoin { pred: PredId },
    /// Children: `[probe, build]`, build broadcast.
    BroadcastJoin { pred: PredId },
    SemiJoinReduce { filters: Vec<PredId> },
    HashAgg { group: GroupId },
    SortAgg { group: GroupId },
    PartialAgg { group: GroupId, eager: bool },
    Union,
    Limit { count: f64 },
    Output { ordered: bool },
}

impl PhysOp {
    pub fn name(&self) -> &'static str {
        match self {
            PhysOp::TableScan { .. } => "TableScan",
            PhysOp::Filter { .. } => "Filter",
            PhysOp::Project { .. } => "Project",
            PhysOp::Exchange { .. } => "Exchange",
            PhysOp::Sort { .. } => "Sort",
            PhysOp::HashJoin { .. } => "HashJoin",
            PhysOp::MergeJoin { .. } => "MergeJoin",
            PhysOp::NestedLoopJoin { .. } => "NestedLoopJoin",
            PhysOp::BroadcastJoin { .. } => "BroadcastJoin",
            PhysOp::SemiJoinReduce { .. } => "SemiJoinReduce",
            PhysOp::HashAgg { .. } => "HashAgg",
            PhysOp::SortAgg { .. } => "SortAgg",
            PhysOp::PartialAgg { .. } => "PartialAgg",
            PhysOp::Union => "Union",
            PhysOp::Limit { .. } => "Limit",
            PhysOp::Output { .. } => "Output",
        }
    }

    pub fn is_exchange(&self) -> bool {
        matches!(self, PhysOp::Exchange { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysNode {
    pub op: PhysOp,
    pub children: Vec<PhysNode>,
    /// Estimated output rows.
    pub rows: f64,
    /// Bytes per output row.
    pub width: f64,
    /// Planned parallelism of the stage this node runs in.
    pub dop: u32,
}

impl PhysNode {
    pub fn bytes(&self) -> f64 {
        self.rows * self.width
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a PhysNode)) {
        f(self);
        for c in &self.children {
            c.visit(f);
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(PhysNode::node_count).sum::<usize>()
    }

    /// Indented one-line-per-operator rendering, for debugging and reports.
    pub fn explain(&self) -> String {
        let mut out = String::new();
        self.explain_into(0, &mut out);
        out
    }

    fn explain_into(&self, depth: usize, out: &mut String) {
        out.push_str(&format!(
            "{:indent$}{:?} rows={:.3e} width={:.1} dop={}\n",
            "",
            self.op,
            self.rows,
            self.width,
            self.dop,
            indent = depth * 2
        ));
        for c in &self.children {
            c.explain_into(depth + 1, out);
        }
    }
}

/// Output rows and width of `op` given its children's `(rows, width)`.
pub fn derive(op: &PhysOp, children: &[(f64, f64)], stats: &InputStats, schema: &Schema) -> (f64, f64) {
    let sel = |p: &PredId| stats.selectivity[*p];
    let first = || children[0];
    match op {
        PhysOp::TableScan { table, keep } => {
            (stats.table_rows[*table], schema.tables[*table].width * keep)
        }
        PhysOp::Filter { preds, .. } => {
            let (r, w) = first();
            (r * preds.iter().map(sel).product::<f64>(), w)
        }
        PhysOp::Project { keep } => {
            let (r, w) = first();
            (r, w * keep)
        }
        PhysOp::Exchange { .. } | PhysOp::Sort { .. } | PhysOp::Output { .. } => first(),
        PhysOp::HashJoin { pred, reduced_by } | PhysOp::MergeJoin { pred, reduced_by } => {
            let (l, lw) = children[0];
            let (r, rw) = children[1];
            let undo: f64 = reduced_by.iter().map(sel).product();
            let factor = if undo > 0.0 { 1.0 / undo } else { 1.0 };
            (l * r * sel(pred) * factor, lw + rw)
        }
        PhysOp::NestedLoopJoin { pred } | PhysOp::BroadcastJoin { pred } => {
            let (l, lw) = children[0];
            let (r, rw) = children[1];
            (l * r * sel(pred), lw + rw)
        }
        PhysOp::SemiJoinReduce { filters } => {
            let (r, w) = first();
            (r * filters.iter().map(sel).product::<f64>(), w)
        }
        PhysOp::HashAgg { group } | PhysOp::SortAgg { group } => {
            (agg_rows(first().0, stats.group_ndv[*group]), schema.groups[*group].width)
        }
        PhysOp::PartialAgg { group, eager } => {
            let (r, w) = first();
            if *eager {
                (
                    agg_rows(r, stats.eager_ndv[*group]),
                    w.min(schema.groups[*group].width * 2.0),
                )
            } else {
                (
                    agg_rows(r, stats.group_ndv[*group] * PARTIAL_AGG_FANOUT),
                    w.min(schema.groups[*group].width),
                )
            }
        }
        PhysOp::Union => (
            children.iter().map(|c| c.0).sum(),
            children.iter().map(|c| c.1).fold(0.0, f64::max),
        ),
        PhysOp::Limit { count } => {
            let (r, w) = first();
            (r.min(*count), w)
        }
    }
}

pub fn dop_for_bytes(bytes: f64) -> u32 {
    let v = (bytes / BYTES_PER_VERTEX).ceil();
    if v.is_nan() || v < 1.0 {
        1
    } else if v > MAX_DOP as f64 {
        MAX_DOP
    } else {
        v as u32
    }
}

/// Largest planned input of the stage rooted at `node`; `None` when the
/// stage reads a gathered (single-partition) exchange.
fn stage_input(node: &PhysNode) -> Option<f64> {
    match &node.op {
        PhysOp::TableScan { .. } => Some(node.bytes()),
        PhysOp::Exchange { kind: ExchangeKind::Gather } => None,
        PhysOp::Exchange { kind: ExchangeKind::Broadcast } => Some(0.0),
        PhysOp::Exchange { .. } => Some(node.bytes()),
        _ => {
            let mut best = Some(0.0f64);
            for c in &node.children {
                best = match (best, stage_input(c)) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    _ => None,
                };
            }
            best
        }
    }
}

pub fn stage_dop(stage_root: &PhysNode) -> u32 {
    stage_input(stage_root).map_or(1, dop_for_bytes)
}

/// Assign each node the parallelism of its stage. Stages are split at
/// exchanges; the exchange itself runs in the consuming stage.
pub fn assign_dops(root: &mut PhysNode) {
    let dop = stage_dop(root);
    assign(root, dop);
}

fn assign(node: &mut PhysNode, dop: u32) {
    node.dop = dop;
    let is_exchange = node.op.is_exchange();
    for c in &mut node.children {
        let child_dop = if is_exchange { stage_dop(c) } else { dop };
        assign(c, child_dop);
    }
}

/// Estimates the optimizer reports per query tree.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryEstimates {
    pub est_cardinality: f64,
    pub avg_row_length: f64,
    /// Rows read from base tables.
    pub row_count: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPlan {
    /// One physical tree per output dataset.
    pub roots: Vec<PhysNode>,
    pub est_cost: f64,
    pub signature: RuleSignature,
    pub per_query: Vec<QueryEstimates>,
}

impl OptimizedPlan {
    pub fn fired(&self, id: RuleId) -> bool {
        self.signature.contains(id)
    }

    /// Plan equality ignoring the signature: same operators, same estimates.
    pub fn same_dag(&self, other: &OptimizedPlan) -> bool {
        self.roots == other.roots
    }

    pub fn explain(&self) -> String {
        self.roots.iter().map(PhysNode::explain).collect::<Vec<_>>().join("--\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(bytes: f64) -> PhysNode {
        PhysNode {
            op: PhysOp::TableScan { table: 0, keep: 1.0 },
            children: vec![],
            rows: bytes,
            width: 1.0,
            dop: 0,
        }
    }

    fn over(op: PhysOp, children: Vec<PhysNode>) -> PhysNode {
        let rows = children[0].rows;
        PhysNode { op, children, rows, width: 1.0, dop: 0 }
    }

    #[test]
    fn dop_bounds() {
        assert_eq!(dop_for_bytes(0.0), 1);
        assert_eq!(dop_for_bytes(BYTES_PER_VERTEX * 2.5), 3);
        assert_eq!(dop_for_bytes(1e30), MAX_DOP);
    }

    #[test]
    fn gather_stage_is_serial() {
        let scan = leaf(BYTES_PER_VERTEX * 10.0);
        let gather = over(PhysOp::Exchange { kind: ExchangeKind::Gather }, vec![scan]);
        let mut out = over(PhysOp::Output { ordered: true }, vec![gather]);
        assign_dops(&mut out);
        assert_eq!(out.dop, 1);
        assert_eq!(out.children[0].dop, 1);
        assert_eq!(out.children[0].children[0].dop, 10);
    }
}
