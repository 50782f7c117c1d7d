//! Physical implementation of rewritten logical trees.

use super::catalog::RuleKind;
use super::logical::{GroupId, Logical, PredId};
use super::physical::{assign_dops, derive, ExchangeKind, PhysNode, PhysOp};
use super::{CompileError, Ctx};

/// Smaller join input, in estimated rows, below which broadcast applies.
pub const BROADCAST_ROWS: f64 = 1.0e6;

fn mk(ctx: &Ctx<'_>, op: PhysOp, children: Vec<PhysNode>) -> PhysNode {
    let sizes: Vec<(f64, f64)> = children.iter().map(|c| (c.rows, c.width)).collect();
    let (rows, width) = derive(&op, &sizes, &ctx.job.input_stats, &ctx.job.schema);
    PhysNode { op, children, rows, width, dop: 1 }
}

fn exchange(ctx: &Ctx<'_>, kind: ExchangeKind, child: PhysNode) -> PhysNode {
    mk(ctx, PhysOp::Exchange { kind }, vec![child])
}

fn cost(ctx: &Ctx<'_>, node: &PhysNode) -> f64 {
    let mut n = node.clone();
    assign_dops(&mut n);
    ctx.model.tree_cost(&n, &ctx.job.schema)
}

/// Filters on the build side that a semi-join reduction can apply to the
/// probe side: those not hidden below an aggregation.
fn build_filters(node: &Logical, out: &mut Vec<PredId>) {
    match node {
        Logical::Filter { input, preds, .. } => {
            out.extend(preds.iter().copied());
            build_filters(input, out);
        }
        Logical::Join { .. } | Logical::Project { .. } | Logical::Limit { .. } => {
            for c in node.children() {
                build_filters(c, out);
            }
        }
        _ => {}
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum JoinImpl {
    Hash { swapped: bool },
    Merge { range: bool },
    NestedLoop,
}

impl JoinImpl {
    fn rules(self) -> Vec<RuleKind> {
        match self {
            JoinImpl::Hash { swapped: false } => vec![RuleKind::HashJoin],
            JoinImpl::Hash { swapped: true } => vec![RuleKind::HashJoin, RuleKind::JoinCommute],
            JoinImpl::Merge { range: false } => vec![RuleKind::MergeJoin],
            JoinImpl::Merge { range: true } => vec![RuleKind::MergeJoin, RuleKind::RangePartition],
            JoinImpl::NestedLoop => vec![RuleKind::NestedLoopJoin],
        }
    }
}

pub(crate) fn implement(ctx: &mut Ctx<'_>, node: &Logical) -> Result<PhysNode, CompileError> {
    Ok(match node {
        Logical::Scan { table, keep } => mk(ctx, PhysOp::TableScan { table: *table, keep: *keep }, vec![]),
        Logical::Filter { input, preds, folded } => {
            let c = implement(ctx, input)?;
            mk(ctx, PhysOp::Filter { preds: preds.clone(), folded: *folded }, vec![c])
        }
        Logical::Project { input, keep } => {
            let c = implement(ctx, input)?;
            mk(ctx, PhysOp::Project { keep: *keep }, vec![c])
        }
        Logical::Limit { input, count } => {
            let c = implement(ctx, input)?;
            mk(ctx, PhysOp::Limit { count: *count }, vec![c])
        }
        Logical::Union { inputs } => {
            let cs = inputs
                .iter()
                .map(|i| implement(ctx, i))
                .collect::<Result<Vec<_>, _>>()?;
            mk(ctx, PhysOp::Union, cs)
        }
        Logical::PreAggregate { input, group } => {
            let c = implement(ctx, input)?;
            mk(ctx, PhysOp::PartialAgg { group: *group, eager: true }, vec![c])
        }
        Logical::Aggregate { input, group } => {
            let c = implement(ctx, input)?;
            aggregate(ctx, c, *group)?
        }
        Logical::Join { left, right, pred } => {
            let l = implement(ctx, left)?;
            let r = implement(ctx, right)?;
            join(ctx, l, r, left, right, *pred)?
        }
        Logical::Output { input, ordered } => {
            let c = implement(ctx, input)?;
            ctx.fire(RuleKind::OutputEnforcement);
            ctx.fire(RuleKind::PartitionEnforcement);
            ctx.fire(RuleKind::PropertyEnforcement);
            let c = if *ordered { ordered_output(ctx, c) } else { c };
            mk(ctx, PhysOp::Output { ordered: *ordered }, vec![c])
        }
    })
}

fn ordered_output(ctx: &mut Ctx<'_>, child: PhysNode) -> PhysNode {
    let gather = {
        let e = exchange(ctx, ExchangeKind::Gather, child.clone());
        mk(ctx, PhysOp::Sort { range: false }, vec![e])
    };
    if !ctx.enabled(RuleKind::RangePartition) {
        return gather;
    }
    let range = {
        let e = exchange(ctx, ExchangeKind::Range, child);
        mk(ctx, PhysOp::Sort { range: true }, vec![e])
    };
    if cost(ctx, &range) < cost(ctx, &gather) {
        ctx.fire(RuleKind::RangePartition);
        range
    } else {
        gather
    }
}

#[derive(Clone, Copy, PartialEq)]
enum AggImpl {
    Hash,
    Sort { range: bool },
}

fn agg_plan(ctx: &Ctx<'_>, kind: AggImpl, child: PhysNode, group: GroupId, partial: bool) -> PhysNode {
    let child = if partial {
        mk(ctx, PhysOp::PartialAgg { group, eager: false }, vec![child])
    } else {
        child
    };
    match kind {
        AggImpl::Hash => {
            let e = exchange(ctx, ExchangeKind::Hash, child);
            mk(ctx, PhysOp::HashAgg { group }, vec![e])
        }
        AggImpl::Sort { range } => {
            let kind = if range { ExchangeKind::Range } else { ExchangeKind::Hash };
            let e = exchange(ctx, kind, child);
            let s = mk(ctx, PhysOp::Sort { range }, vec![e]);
            mk(ctx, PhysOp::SortAgg { group }, vec![s])
        }
    }
}

fn aggregate(ctx: &mut Ctx<'_>, child: PhysNode, group: GroupId) -> Result<PhysNode, CompileError> {
    let mut options = Vec::new();
    if ctx.enabled(RuleKind::HashAgg) {
        options.push(AggImpl::Hash);
    }
    if ctx.enabled(RuleKind::SortAgg) {
        options.push(AggImpl::Sort { range: false });
        if ctx.enabled(RuleKind::RangePartition) {
            options.push(AggImpl::Sort { range: true });
        }
    }
    let mut best: Option<(f64, AggImpl)> = None;
    for kind in options {
        let c = cost(ctx, &agg_plan(ctx, kind, child.clone(), group, false));
        if best.is_none_or(|(bc, _)| c < bc) {
            best = Some((c, kind));
        }
    }
    let (_, kind) = best.ok_or(CompileError::NoImplementation("aggregate"))?;
    match kind {
        AggImpl::Hash => ctx.fire(RuleKind::HashAgg),
        AggImpl::Sort { range } => {
            ctx.fire(RuleKind::SortAgg);
            if range {
                ctx.fire(RuleKind::RangePartition);
            }
        }
    }
    let partial = ctx.enabled(RuleKind::PartialAggPushdown) && ctx.job.schema.groups[group].decomposable;
    if partial {
        ctx.fire(RuleKind::PartialAggPushdown);
    }
    Ok(agg_plan(ctx, kind, child, group, partial))
}

fn equi_plan(
    ctx: &Ctx<'_>,
    kind: JoinImpl,
    left: &PhysNode,
    right: &PhysNode,
    pred: PredId,
    reduced_by: &[PredId],
) -> PhysNode {
    let (probe, build) = match kind {
        JoinImpl::Hash { swapped: true } => (right.clone(), left.clone()),
        _ => (left.clone(), right.clone()),
    };
    if kind == JoinImpl::NestedLoop {
        return nested_loop(ctx, probe, build, pred);
    }
    let probe = if reduced_by.is_empty() {
        probe
    } else {
        mk(ctx, PhysOp::SemiJoinReduce { filters: reduced_by.to_vec() }, vec![probe])
    };
    match kind {
        JoinImpl::Hash { .. } => {
            let p = exchange(ctx, ExchangeKind::Hash, probe);
            let b = exchange(ctx, ExchangeKind::Hash, build);
            mk(ctx, PhysOp::HashJoin { pred, reduced_by: reduced_by.to_vec() }, vec![p, b])
        }
        JoinImpl::Merge { range } => {
            let (ek, sorted) = if range {
                (ExchangeKind::Range, true)
            } else {
                (ExchangeKind::Hash, false)
            };
            let p = mk(ctx, PhysOp::Sort { range: sorted }, vec![exchange(ctx, ek, probe)]);
            let b = mk(ctx, PhysOp::Sort { range: sorted }, vec![exchange(ctx, ek, build)]);
            mk(ctx, PhysOp::MergeJoin { pred, reduced_by: reduced_by.to_vec() }, vec![p, b])
        }
        JoinImpl::NestedLoop => unreachable!(),
    }
}

fn nested_loop(ctx: &Ctx<'_>, a: PhysNode, b: PhysNode, pred: PredId) -> PhysNode {
    let (outer, inner) = if b.rows <= a.rows { (a, b) } else { (b, a) };
    let inner = exchange(ctx, ExchangeKind::Broadcast, inner);
    mk(ctx, PhysOp::NestedLoopJoin { pred }, vec![outer, inner])
}

fn join(
    ctx: &mut Ctx<'_>,
    l: PhysNode,
    r: PhysNode,
    left: &Logical,
    right: &Logical,
    pred: PredId,
) -> Result<PhysNode, CompileError> {
    if ctx.enabled(RuleKind::BroadcastJoin) && l.rows.min(r.rows) < BROADCAST_ROWS {
        ctx.fire(RuleKind::BroadcastJoin);
        let (probe, build) = if r.rows <= l.rows { (l, r) } else { (r, l) };
        let build = exchange(ctx, ExchangeKind::Broadcast, build);
        return Ok(mk(ctx, PhysOp::BroadcastJoin { pred }, vec![probe, build]));
    }
    if !ctx.job.schema.predicates[pred].is_equi() {
        if !ctx.enabled(RuleKind::NestedLoopJoin) {
            return Err(CompileError::NoImplementation("theta join"));
        }
        ctx.fire(RuleKind::NestedLoopJoin);
        return Ok(nested_loop(ctx, l, r, pred));
    }

    let mut options = Vec::new();
    if ctx.enabled(RuleKind::HashJoin) {
        options.push(JoinImpl::Hash { swapped: false });
        if ctx.enabled(RuleKind::JoinCommute) {
            options.push(JoinImpl::Hash { swapped: true });
        }
    }
    if ctx.enabled(RuleKind::MergeJoin) {
        options.push(JoinImpl::Merge { range: false });
        if ctx.enabled(RuleKind::RangePartition) {
            options.push(JoinImpl::Merge { range: true });
        }
    }
    if ctx.enabled(RuleKind::NestedLoopJoin) {
        options.push(JoinImpl::NestedLoop);
    }
    let mut best: Option<(f64, JoinImpl)> = None;
    for kind in options {
        let c = cost(ctx, &equi_plan(ctx, kind, &l, &r, pred, &[]));
        if best.is_none_or(|(bc, _)| c < bc) {
            best = Some((c, kind));
        }
    }
    let (_, kind) = best.ok_or(CompileError::NoImplementation("join"))?;
    for rule in kind.rules() {
        ctx.fire(rule);
    }
    let mut reduced = Vec::new();
    if kind != JoinImpl::NestedLoop && ctx.enabled(RuleKind::SemiJoinReduce) {
        let build_side = if kind == (JoinImpl::Hash { swapped: true }) { left } else { right };
        build_filters(build_side, &mut reduced);
        if !reduced.is_empty() {
            ctx.fire(RuleKind::SemiJoinReduce);
        }
    }
    Ok(equi_plan(ctx, kind, &l, &r, pred, &reduced))
}
