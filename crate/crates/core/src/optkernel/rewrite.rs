//! Logical rewrite phases, applied in a fixed order. Each phase runs only
//! when its rule is enabled and records the rule when it changes the tree.

use super::catalog::RuleKind;
use super::logical::{rows, Logical, PredId};
use super::{CompileError, Ctx};

/// Region size above which join reordering is skipped.
const MAX_REGION_LEAVES: usize = 12;
const STRICT: f64 = 1.0 - 1e-9;

pub(crate) fn rewrite(ctx: &mut Ctx<'_>, q: Logical) -> Result<Logical, CompileError> {
    let mut q = q;
    if ctx.enabled(RuleKind::PredicateSimplify) {
        q = bottom_up(ctx, q, simplify);
    }
    if ctx.enabled(RuleKind::ConstantFold) {
        q = bottom_up(ctx, q, fold);
    }
    if ctx.enabled(RuleKind::FilterPushdown) {
        q = pushdown(ctx, q);
    }
    if ctx.enabled(RuleKind::ProjectionPruning) {
        q = prune(ctx, q);
    }
    if ctx.enabled(RuleKind::UnionMerge) {
        q = bottom_up(ctx, q, merge_unions);
    }
    if ctx.enabled(RuleKind::LimitPushdown) {
        q = push_limits(ctx, q);
    }
    if ctx.enabled(RuleKind::CrossJoinReorder) {
        q = bottom_up(ctx, q, reorder_cross);
    }
    if ctx.enabled(RuleKind::GreedyJoinOrder) || ctx.enabled(RuleKind::BushyJoinExploration) {
        q = order_joins(ctx, q);
    }
    if ctx.enabled(RuleKind::EagerAggBeforeJoin) {
        q = eager_agg(ctx, q)?;
    }
    Ok(q)
}

fn try_map_children<E>(
    node: Logical,
    f: &mut impl FnMut(Logical) -> Result<Logical, E>,
) -> Result<Logical, E> {
    Ok(match node {
        Logical::Scan { .. } => node,
        Logical::Filter { input, preds, folded } => Logical::Filter {
            input: Box::new(f(*input)?),
            preds,
            folded,
        },
        Logical::Project { input, keep } => Logical::Project {
            input: Box::new(f(*input)?),
            keep,
        },
        Logical::Join { left, right, pred } => Logical::Join {
            left: Box::new(f(*left)?),
            right: Box::new(f(*right)?),
            pred,
        },
        Logical::Aggregate { input, group } => Logical::Aggregate {
            input: Box::new(f(*input)?),
            group,
        },
        Logical::PreAggregate { input, group } => Logical::PreAggregate {
            input: Box::new(f(*input)?),
            group,
        },
        Logical::Union { inputs } => Logical::Union {
            inputs: inputs.into_iter().map(&mut *f).collect::<Result<_, _>>()?,
        },
        Logical::Limit { input, count } => Logical::Limit {
            input: Box::new(f(*input)?),
            count,
        },
        Logical::Output { input, ordered } => Logical::Output {
            input: Box::new(f(*input)?),
            ordered,
        },
    })
}

fn map_children(node: Logical, f: &mut impl FnMut(Logical) -> Logical) -> Logical {
    match try_map_children::<std::convert::Infallible>(node, &mut |c| Ok(f(c))) {
        Ok(n) => n,
        Err(never) => match never {},
    }
}

fn bottom_up(ctx: &mut Ctx<'_>, node: Logical, step: fn(&mut Ctx<'_>, Logical) -> Logical) -> Logical {
    let node = map_children(node, &mut |c| bottom_up(ctx, c, step));
    step(ctx, node)
}

fn simplify(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    match node {
        Logical::Filter { input, preds, folded } => {
            let preds_def = &ctx.job.schema.predicates;
            let kept: Vec<PredId> = preds.iter().copied().filter(|&p| !preds_def[p].redundant).collect();
            if kept.len() == preds.len() {
                return Logical::Filter { input, preds, folded };
            }
            ctx.fire(RuleKind::PredicateSimplify);
            if kept.is_empty() {
                *input
            } else {
                Logical::Filter { input, preds: kept, folded }
            }
        }
        other => other,
    }
}

fn fold(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    match node {
        Logical::Filter { input, preds, folded: false }
            if preds.iter().any(|&p| ctx.job.schema.predicates[p].constant_expr) =>
        {
            ctx.fire(RuleKind::ConstantFold);
            Logical::Filter { input, preds, folded: true }
        }
        other => other,
    }
}

fn pushdown(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    match node {
        Logical::Filter { input, preds, folded }
            if matches!(*input, Logical::Join { .. } | Logical::Project { .. }) =>
        {
            ctx.fire(RuleKind::FilterPushdown);
            let sunk = sink(ctx, *input, preds, folded);
            map_children(sunk, &mut |c| pushdown(ctx, c))
        }
        other => map_children(other, &mut |c| pushdown(ctx, c)),
    }
}

/// Push single-table predicates as deep as joins and projections allow.
fn sink(ctx: &Ctx<'_>, node: Logical, preds: Vec<PredId>, folded: bool) -> Logical {
    if preds.is_empty() {
        return node;
    }
    match node {
        Logical::Join { left, right, pred } => {
            let defs = &ctx.job.schema.predicates;
            let (mut lp, mut rp, mut stay) = (Vec::new(), Vec::new(), Vec::new());
            for p in preds {
                match defs[p].filter_table() {
                    Some(t) if left.contains_table(t) => lp.push(p),
                    Some(t) if right.contains_table(t) => rp.push(p),
                    _ => stay.push(p),
                }
            }
            let join = Logical::Join {
                left: Box::new(sink(ctx, *left, lp, folded)),
                right: Box::new(sink(ctx, *right, rp, folded)),
                pred,
            };
            if stay.is_empty() {
                join
            } else {
                Logical::Filter { input: Box::new(join), preds: stay, folded }
            }
        }
        Logical::Project { input, keep } => Logical::Project {
            input: Box::new(sink(ctx, *input, preds, folded)),
            keep,
        },
        Logical::Filter { input, preds: inner, folded: f } => Logical::Filter {
            input: Box::new(sink(ctx, *input, preds, folded)),
            preds: inner,
            folded: f,
        },
        other => Logical::Filter { input: Box::new(other), preds, folded },
    }
}

fn prunable(node: &Logical) -> bool {
    match node {
        Logical::Scan { .. } => true,
        Logical::Filter { .. }
        | Logical::Project { .. }
        | Logical::Limit { .. }
        | Logical::Join { .. }
        | Logical::Union { .. } => node.children().into_iter().all(prunable),
        Logical::Aggregate { .. } | Logical::PreAggregate { .. } | Logical::Output { .. } => false,
    }
}

fn scale_scans(node: Logical, keep: f64) -> Logical {
    match node {
        Logical::Scan { table, keep: k } => Logical::Scan { table, keep: k * keep },
        other => map_children(other, &mut |c| scale_scans(c, keep)),
    }
}

/// Fold projections into the scans below them so fewer columns are read.
fn prune(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    match node {
        Logical::Project { input, keep } if prunable(&input) => {
            ctx.fire(RuleKind::ProjectionPruning);
            prune(ctx, scale_scans(*input, keep))
        }
        other => map_children(other, &mut |c| prune(ctx, c)),
    }
}

fn merge_unions(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    match node {
        Logical::Union { inputs } if inputs.iter().any(|i| matches!(i, Logical::Union { .. })) => {
            ctx.fire(RuleKind::UnionMerge);
            let mut flat = Vec::new();
            for i in inputs {
                match i {
                    Logical::Union { inputs } => flat.extend(inputs),
                    other => flat.push(other),
                }
            }
            Logical::Union { inputs: flat }
        }
        other => other,
    }
}

fn push_limits(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    let node = match node {
        Logical::Limit { input, count } => match *input {
            Logical::Union { inputs }
                if inputs
                    .iter()
                    .any(|i| !matches!(i, Logical::Limit { count: c, .. } if *c <= count)) =>
            {
                ctx.fire(RuleKind::LimitPushdown);
                let inputs = inputs
                    .into_iter()
                    .map(|i| match i {
                        Logical::Limit { count: c, .. } if c <= count => i,
                        other => other.limit(count),
                    })
                    .collect();
                Logical::Union { inputs }.limit(count)
            }
            Logical::Project { input: inner, keep } => {
                ctx.fire(RuleKind::LimitPushdown);
                inner.limit(count).project(keep)
            }
            other => other.limit(count),
        },
        other => other,
    };
    map_children(node, &mut |c| push_limits(ctx, c))
}

fn is_equi(ctx: &Ctx<'_>, pred: PredId) -> bool {
    ctx.job.schema.predicates[pred].is_equi()
}

/// `(a ⋈θ b) ⋈= c` with the equality linking `c` to one side becomes an
/// equality join below the theta join.
fn reorder_cross(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    let Logical::Join { left, right, pred } = node else {
        return node;
    };
    if !is_equi(ctx, pred) {
        return Logical::Join { left, right, pred };
    }
    let (theta_side, other, theta_left) = match (&*left, &*right) {
        (Logical::Join { pred: t, .. }, _) if !is_equi(ctx, *t) => (left, right, true),
        (_, Logical::Join { pred: t, .. }) if !is_equi(ctx, *t) => (right, left, false),
        _ => return Logical::Join { left, right, pred },
    };
    let Logical::Join { left: a, right: b, pred: theta } = *theta_side else {
        unreachable!()
    };
    let Some((x, y)) = ctx.job.schema.predicates[pred].join_tables() else {
        unreachable!()
    };
    let linked = |side: &Logical| side.contains_table(x) || side.contains_table(y);
    if linked(&a) && !linked(&b) {
        ctx.fire(RuleKind::CrossJoinReorder);
        a.join(*other, pred).join(*b, theta)
    } else if linked(&b) && !linked(&a) {
        ctx.fire(RuleKind::CrossJoinReorder);
        a.join(b.join(*other, pred), theta)
    } else {
        let theta_side = Box::new(a.join(*b, theta));
        if theta_left {
            Logical::Join { left: theta_side, right: other, pred }
        } else {
            Logical::Join { left: other, right: theta_side, pred }
        }
    }
}

fn collect_region(node: Logical, ctx: &Ctx<'_>, leaves: &mut Vec<Logical>, preds: &mut Vec<PredId>) {
    match node {
        Logical::Join { left, right, pred } if is_equi(ctx, pred) => {
            preds.push(pred);
            collect_region(*left, ctx, leaves, preds);
            collect_region(*right, ctx, leaves, preds);
        }
        other => leaves.push(other),
    }
}

/// Sum of intermediate join cardinalities of a region tree.
fn c_out(node: &Logical, ctx: &Ctx<'_>) -> f64 {
    match node {
        Logical::Join { left, right, pred } if is_equi(ctx, *pred) => {
            rows(node, &ctx.job.input_stats) + c_out(left, ctx) + c_out(right, ctx)
        }
        _ => 0.0,
    }
}

struct Region {
    leaf_rows: Vec<f64>,
    /// `(leaf_a, leaf_b, pred)`, one per join predicate.
    edges: Vec<(usize, usize, PredId)>,
}

impl Region {
    fn rows(&self, set: u32, sel: &[f64]) -> f64 {
        let mut r: f64 = (0..self.leaf_rows.len())
            .filter(|i| set & (1 << i) != 0)
            .map(|i| self.leaf_rows[i])
            .product();
        for &(a, b, p) in &self.edges {
            if set & (1 << a) != 0 && set & (1 << b) != 0 {
                r *= sel[p];
            }
        }
        r
    }

    fn crossing(&self, s1: u32, s2: u32) -> Vec<PredId> {
        self.edges
            .iter()
            .filter(|&&(a, b, _)| {
                (s1 & (1 << a) != 0 && s2 & (1 << b) != 0) || (s2 & (1 << a) != 0 && s1 & (1 << b) != 0)
            })
            .map(|e| e.2)
            .collect()
    }
}

fn order_joins(ctx: &mut Ctx<'_>, node: Logical) -> Logical {
    let is_region = matches!(&node, Logical::Join { pred, .. } if is_equi(ctx, *pred));
    if !is_region {
        return map_children(node, &mut |c| order_joins(ctx, c));
    }
    let mut leaves = Vec::new();
    let mut preds = Vec::new();
    collect_region(node.clone(), ctx, &mut leaves, &mut preds);
    let leaves: Vec<Logical> = leaves.into_iter().map(|l| order_joins(ctx, l)).collect();
    // Rebuild the written shape over the processed leaves.
    let mut it = leaves.clone().into_iter();
    let written = rebuild(node, ctx, &mut it);
    let n = leaves.len();
    if n < 3 || n > MAX_REGION_LEAVES {
        return written;
    }
    let tables: Vec<Vec<usize>> = leaves.iter().map(Logical::tables).collect();
    let leaf_of = |t: usize| tables.iter().position(|ts| ts.binary_search(&t).is_ok());
    let mut edges = Vec::new();
    for &p in &preds {
        let Some((x, y)) = ctx.job.schema.predicates[p].join_tables() else {
            return written;
        };
        match (leaf_of(x), leaf_of(y)) {
            (Some(a), Some(b)) if a != b => edges.push((a, b, p)),
            _ => return written,
        }
    }
    // Reordering below assumes the join graph is a tree.
    if edges.len() != n - 1 {
        return written;
    }
    let stats = &ctx.job.input_stats;
    let region = Region {
        leaf_rows: leaves.iter().map(|l| rows(l, stats)).collect(),
        edges,
    };
    let sel = &stats.selectivity;
    let mut current = written;
    let mut current_cost = c_out(&current, ctx);

    if ctx.enabled(RuleKind::GreedyJoinOrder) {
        let (tree, cost) = greedy(&region, &leaves, sel);
        if cost < current_cost * STRICT {
            ctx.fire(RuleKind::GreedyJoinOrder);
            current = tree;
            current_cost = cost;
        }
    }
    if n >= 4 && ctx.enabled(RuleKind::BushyJoinExploration) {
        let (tree, cost) = bushy(&region, &leaves, sel);
        if cost < current_cost * STRICT {
            ctx.fire(RuleKind::BushyJoinExploration);
            current = tree;
        }
    }
    current
}

fn rebuild(node: Logical, ctx: &Ctx<'_>, leaves: &mut impl Iterator<Item = Logical>) -> Logical {
    match node {
        Logical::Join { left, right, pred } if is_equi(ctx, pred) => {
            let l = rebuild(*left, ctx, leaves);
            let r = rebuild(*right, ctx, leaves);
            l.join(r, pred)
        }
        _ => leaves.next().expect("leaf count matches"),
    }
}

fn greedy(region: &Region, leaves: &[Logical], sel: &[f64]) -> (Logical, f64) {
    let mut best: Option<(f64, usize, usize, PredId)> = None;
    for &(a, b, p) in &region.edges {
        let (i, j) = (a.min(b), a.max(b));
        let r = region.rows((1 << i) | (1 << j), sel);
        let better = match best {
            None => true,
            Some((br, bi, bj, _)) => r < br || (r == br && (i, j) < (bi, bj)),
        };
        if better {
            best = Some((r, i, j, p));
        }
    }
    let (r0, i, j, p) = best.expect("region has edges");
    let mut set: u32 = (1 << i) | (1 << j);
    let mut tree = leaves[i].clone().join(leaves[j].clone(), p);
    let mut cost = r0;
    while set.count_ones() as usize != leaves.len() {
        let mut pick: Option<(f64, usize, PredId)> = None;
        for k in 0..leaves.len() {
            if set & (1 << k) != 0 {
                continue;
            }
            let cross = region.crossing(set, 1 << k);
            if cross.len() != 1 {
                continue;
            }
            let r = region.rows(set | (1 << k), sel);
            if pick.is_none_or(|(br, _, _)| r < br) {
                pick = Some((r, k, cross[0]));
            }
        }
        let (r, k, p) = pick.expect("tree-shaped join graph stays connected");
        tree = tree.join(leaves[k].clone(), p);
        set |= 1 << k;
        cost += r;
    }
    (tree, cost)
}

fn bushy(region: &Region, leaves: &[Logical], sel: &[f64]) -> (Logical, f64) {
    let n = leaves.len();
    let full: u32 = (1 << n) - 1;
    // best[s] = (cost, left subset, joining pred); singletons cost nothing.
    let mut best: Vec<Option<(f64, u32, PredId)>> = vec![None; 1 << n];
    let mut subsets: Vec<u32> = (1..=full).filter(|s| s.count_ones() >= 2).collect();
    subsets.sort_by_key(|s| (s.count_ones(), *s));
    let cost_of = |best: &[Option<(f64, u32, PredId)>], s: u32| -> Option<f64> {
        if s.count_ones() == 1 {
            Some(0.0)
        } else {
            best[s as usize].map(|b| b.0)
        }
    };
    for s in subsets {
        let low = s & s.wrapping_neg();
        let mut s1 = (s - 1) & s;
        let mut found: Option<(f64, u32, PredId)> = None;
        while s1 > 0 {
            if s1 & low != 0 {
                let s2 = s & !s1;
                let cross = region.crossing(s1, s2);
                if cross.len() == 1 {
                    if let (Some(c1), Some(c2)) = (cost_of(&best, s1), cost_of(&best, s2)) {
                        let c = c1 + c2 + region.rows(s, sel);
                        if found.is_none_or(|f| c < f.0 || (c == f.0 && s1 < f.1)) {
                            found = Some((c, s1, cross[0]));
                        }
                    }
                }
            }
            s1 = (s1 - 1) & s;
        }
        best[s as usize] = found;
    }
    fn build(s: u32, best: &[Option<(f64, u32, PredId)>], leaves: &[Logical]) -> Logical {
        if s.count_ones() == 1 {
            return leaves[s.trailing_zeros() as usize].clone();
        }
        let (_, s1, p) = best[s as usize].expect("connected subset");
        build(s1, best, leaves).join(build(s & !s1, best, leaves), p)
    }
    let cost = best[full as usize].expect("connected region").0;
    (build(full, &best, leaves), cost)
}

/// Look through filters and projections for the join feeding an aggregate.
fn wrap_eager(ctx: &mut Ctx<'_>, node: Logical, group: usize, table: usize) -> Result<Logical, CompileError> {
    match node {
        Logical::Filter { input, preds, folded } => Ok(Logical::Filter {
            input: Box::new(wrap_eager(ctx, *input, group, table)?),
            preds,
            folded,
        }),
        Logical::Project { input, keep } => Ok(Logical::Project {
            input: Box::new(wrap_eager(ctx, *input, group, table)?),
            keep,
        }),
        Logical::Join { left, right, pred } => {
            let pre = |side: Box<Logical>| -> Box<Logical> {
                Box::new(Logical::PreAggregate { input: side, group })
            };
            let target_left = left.contains_table(table);
            let target = if target_left { &left } else { &right };
            if matches!(**target, Logical::PreAggregate { .. }) || !target.contains_table(table) {
                return Ok(Logical::Join { left, right, pred });
            }
            if !ctx.job.schema.groups[group].decomposable {
                return Err(CompileError::InvalidRewrite {
                    rule: RuleKind::EagerAggBeforeJoin.name(),
                    reason: "aggregate cannot be split around a join",
                });
            }
            ctx.fire(RuleKind::EagerAggBeforeJoin);
            Ok(if target_left {
                Logical::Join { left: pre(left), right, pred }
            } else {
                Logical::Join { left, right: pre(right), pred }
            })
        }
        other => Ok(other),
    }
}

fn eager_agg(ctx: &mut Ctx<'_>, node: Logical) -> Result<Logical, CompileError> {
    let node = match node {
        Logical::Aggregate { input, group } => match ctx.job.schema.groups[group].eager_table {
            Some(t) => Logical::Aggregate {
                input: Box::new(wrap_eager(ctx, *input, group, t)?),
                group,
            },
            None => Logical::Aggregate { input, group },
        },
        other => other,
    };
    try_map_children(node, &mut |c| eager_agg(ctx, c))
}
