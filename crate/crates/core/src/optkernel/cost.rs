//! Per-operator work model shared by the optimizer's estimator and the
//! ground-truth executor. Every operator's work is linear in its input
//! cardinality; the nested-loop join is linear in the pair count.

use super::logical::Schema;
use super::physical::{ExchangeKind, PhysNode, PhysOp};

/// Coefficients in seconds per row (or per byte, per pair).
#[derive(Clone, Debug, PartialEq)]
pub struct CostModel {
    pub scan_row: f64,
    pub read_byte: f64,
    pub write_byte: f64,
    pub filter_pred_row: f64,
    pub unfolded_const_row: f64,
    pub project_row: f64,
    pub exchange_row: f64,
    pub sort_row: f64,
    pub range_sort_row: f64,
    pub hash_build_row: f64,
    pub hash_probe_row: f64,
    pub emit_row: f64,
    pub merge_row: f64,
    pub nl_pair: f64,
    pub bloom_probe_row: f64,
    pub hash_agg_row: f64,
    pub sort_agg_row: f64,
    pub partial_agg_row: f64,
    pub union_row: f64,
    pub limit_row: f64,
    pub output_row: f64,
    /// Per-vertex hash-table budget; beyond it the build side spills once
    /// to disk. `None` disables spilling (the estimator ignores memory).
    pub hash_memory_bytes: Option<f64>,
}

impl CostModel {
    /// The optimizer's view of operator costs.
    pub fn estimator() -> Self {
        Self {
            scan_row: 1.0e-7,
            read_byte: 1.0e-8,
            write_byte: 1.0e-8,
            filter_pred_row: 5.0e-8,
            unfolded_const_row: 1.0e-7,
            project_row: 2.5e-8,
            exchange_row: 1.0e-7,
            sort_row: 7.5e-7,
            range_sort_row: 4.0e-7,
            hash_build_row: 4.0e-7,
            hash_probe_row: 1.5e-7,
            emit_row: 5.0e-8,
            merge_row: 1.5e-7,
            nl_pair: 1.0e-8,
            bloom_probe_row: 6.0e-7,
            hash_agg_row: 3.0e-7,
            sort_agg_row: 1.5e-7,
            partial_agg_row: 2.5e-7,
            union_row: 2.5e-8,
            limit_row: 5.0e-9,
            output_row: 5.0e-8,
            hash_memory_bytes: None,
        }
    }

    /// What operators actually cost on the simulated cluster. Deliberately
    /// not proportional to the estimator.
    pub fn ground_truth() -> Self {
        Self {
            scan_row: 1.2e-7,
            read_byte: 1.2e-8,
            write_byte: 1.6e-8,
            filter_pred_row: 4.0e-8,
            unfolded_const_row: 1.4e-7,
            project_row: 2.0e-8,
            exchange_row: 1.2e-7,
            sort_row: 6.0e-7,
            range_sort_row: 4.5e-7,
            hash_build_row: 6.0e-7,
            hash_probe_row: 1.8e-7,
            emit_row: 6.0e-8,
            merge_row: 1.3e-7,
            nl_pair: 1.3e-8,
            bloom_probe_row: 4.0e-7,
            hash_agg_row: 3.5e-7,
            sort_agg_row: 1.4e-7,
            partial_agg_row: 3.0e-7,
            union_row: 2.0e-8,
            limit_row: 5.0e-9,
            output_row: 6.0e-8,
            hash_memory_bytes: Some(2.0 * 1024.0 * 1024.0 * 1024.0),
        }
    }
}

/// Work performed by one operator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Work {
    pub cpu_s: f64,
    pub read_bytes: f64,
    pub written_bytes: f64,
}

impl Work {
    pub fn add(&mut self, other: Work) {
        self.cpu_s += other.cpu_s;
        self.read_bytes += other.read_bytes;
        self.written_bytes += other.written_bytes;
    }

    pub fn io_bytes(&self) -> f64 {
        self.read_bytes + self.written_bytes
    }
}

/// Sizes an operator sees: its children's and its own `(rows, width)`.
pub struct OpSizes<'a> {
    pub children: &'a [(f64, f64)],
    pub output: (f64, f64),
    pub dop: u32,
}

impl CostModel {
    pub fn work(&self, op: &PhysOp, sizes: &OpSizes<'_>, schema: &Schema) -> Work {
        let inp = |i: usize| sizes.children[i].0;
        let bytes = |i: usize| sizes.children[i].0 * sizes.children[i].1;
        let (out_rows, out_w) = sizes.output;
        let dop = f64::from(sizes.dop.max(1));
        let cpu = |cpu_s: f64| Work { cpu_s, ..Work::default() };
        match op {
            PhysOp::TableScan { .. } => Work {
                cpu_s: self.scan_row * out_rows,
                read_bytes: out_rows * out_w,
                written_bytes: 0.0,
            },
            PhysOp::Filter { preds, folded } => {
                let unfolded = preds
                    .iter()
                    .filter(|&&p| schema.predicates[p].constant_expr)
                    .count() as f64;
                let per_row = self.filter_pred_row * preds.len() as f64
                    + if *folded { 0.0 } else { self.unfolded_const_row * unfolded };
                cpu(per_row * inp(0))
            }
            PhysOp::Project { .. } => cpu(self.project_row * inp(0)),
            PhysOp::Exchange { kind } => {
                let fanout = if *kind == ExchangeKind::Broadcast { dop } else { 1.0 };
                Work {
                    cpu_s: self.exchange_row * inp(0) * fanout,
                    read_bytes: bytes(0) * fanout,
                    written_bytes: bytes(0),
                }
            }
            PhysOp::Sort { range } => {
                cpu(inp(0) * if *range { self.range_sort_row } else { self.sort_row })
            }
            PhysOp::BroadcastJoin { pred } if !schema.predicates[*pred].is_equi() => {
                cpu(self.nl_pair * inp(0) * inp(1) + self.emit_row * out_rows)
            }
            PhysOp::HashJoin { .. } | PhysOp::BroadcastJoin { .. } => {
                let broadcast = matches!(op, PhysOp::BroadcastJoin { .. });
                let mut w = cpu(self.hash_build_row * inp(1) * if broadcast { dop } else { 1.0 }
                    + self.hash_probe_row * inp(0)
                    + self.emit_row * out_rows);
                if let Some(limit) = self.hash_memory_bytes {
                    let per_vertex = if broadcast { bytes(1) } else { bytes(1) / dop };
                    if per_vertex > limit {
                        let spilled = per_vertex * dop;
                        w.written_bytes += spilled;
                        w.read_bytes += spilled;
                    }
                }
                w
            }
            PhysOp::MergeJoin { .. } => {
                cpu(self.merge_row * (inp(0) + inp(1)) + self.emit_row * out_rows)
            }
            PhysOp::NestedLoopJoin { .. } => {
                cpu(self.nl_pair * inp(0) * inp(1) + self.emit_row * out_rows)
            }
            PhysOp::SemiJoinReduce { .. } => cpu(self.bloom_probe_row * inp(0)),
            PhysOp::HashAgg { .. } => cpu(self.hash_agg_row * inp(0)),
            PhysOp::SortAgg { .. } => cpu(self.sort_agg_row * inp(0)),
            PhysOp::PartialAgg { .. } => cpu(self.partial_agg_row * inp(0)),
            PhysOp::Union => cpu(self.union_row * sizes.children.iter().map(|c| c.0).sum::<f64>()),
            PhysOp::Limit { .. } => cpu(self.limit_row * inp(0)),
            PhysOp::Output { .. } => Work {
                cpu_s: self.output_row * inp(0),
                read_bytes: 0.0,
                written_bytes: out_rows * out_w,
            },
        }
    }

    /// Seconds of work for a whole estimated tree, CPU plus IO.
    pub fn tree_cost(&self, node: &PhysNode, schema: &Schema) -> f64 {
        let children: Vec<(f64, f64)> = node.children.iter().map(|c| (c.rows, c.width)).collect();
        let w = self.work(
            &node.op,
            &OpSizes {
                children: &children,
                output: (node.rows, node.width),
                dop: node.dop,
            },
            schema,
        );
        let own = w.cpu_s + w.read_bytes * self.read_byte + w.written_bytes * self.write_byte;
        own + node
            .children
            .iter()
            .map(|c| self.tree_cost(c, schema))
            .sum::<f64>()
    }
}
