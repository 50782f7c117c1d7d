use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::RuleConfig;

pub type RuleId = usize;

const DEFAULT_CATALOG: &str = include_str!("../../data/default_catalog.tsv");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("catalog rule ids must be dense 0..{len}; rule id {id} is out of place")]
    NotDense { id: RuleId, len: usize },
    #[error("rule name {0:?} appears twice")]
    DuplicateName(String),
    #[error("reading catalog: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleCategory {
    Required,
    OnByDefault,
    OffByDefault,
    Implementation,
}

impl RuleCategory {
    pub const ALL: [RuleCategory; 4] = [
        RuleCategory::Required,
        RuleCategory::OnByDefault,
        RuleCategory::OffByDefault,
        RuleCategory::Implementation,
    ];

    pub fn enabled_by_default(self) -> bool {
        !matches!(self, RuleCategory::OffByDefault)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RuleCategory::Required => "Required",
            RuleCategory::OnByDefault => "OnByDefault",
            RuleCategory::OffByDefault => "OffByDefault",
            RuleCategory::Implementation => "Implementation",
        }
    }
}

impl fmt::Display for RuleCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown rule category {s:?}"))
    }
}

/// Transformations the kernel knows how to perform. Catalog rules bind to a
/// kind by name; rules with unknown names are inert and never fire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RuleKind {
    OutputEnforcement,
    ExpressionNormalization,
    PartitionEnforcement,
    PropertyEnforcement,
    FilterPushdown,
    ProjectionPruning,
    JoinCommute,
    GreedyJoinOrder,
    PredicateSimplify,
    ConstantFold,
    UnionMerge,
    LimitPushdown,
    SemiJoinReduce,
    PartialAggPushdown,
    HashJoin,
    MergeJoin,
    NestedLoopJoin,
    HashAgg,
    SortAgg,
    RangePartition,
    BushyJoinExploration,
    EagerAggBeforeJoin,
    CrossJoinReorder,
    BroadcastJoin,
}

impl RuleKind {
    pub const ALL: [RuleKind; 24] = [
        RuleKind::OutputEnforcement,
        RuleKind::ExpressionNormalization,
        RuleKind::PartitionEnforcement,
        RuleKind::PropertyEnforcement,
        RuleKind::FilterPushdown,
        RuleKind::ProjectionPruning,
        RuleKind::JoinCommute,
        RuleKind::GreedyJoinOrder,
        RuleKind::PredicateSimplify,
        RuleKind::ConstantFold,
        RuleKind::UnionMerge,
        RuleKind::LimitPushdown,
        RuleKind::SemiJoinReduce,
        RuleKind::PartialAggPushdown,
        RuleKind::HashJoin,
        RuleKind::MergeJoin,
        RuleKind::NestedLoopJoin,
        RuleKind::HashAgg,
        RuleKind::SortAgg,
        RuleKind::RangePartition,
        RuleKind::BushyJoinExploration,
        RuleKind::EagerAggBeforeJoin,
        RuleKind::CrossJoinReorder,
        RuleKind::BroadcastJoin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::OutputEnforcement => "output_enforcement",
            RuleKind::ExpressionNormalization => "expression_normalization",
            RuleKind::PartitionEnforcement => "partition_enforcement",
            RuleKind::PropertyEnforcement => "property_enforcement",
            RuleKind::FilterPushdown => "filter_pushdown",
            RuleKind::ProjectionPruning => "projection_pruning",
            RuleKind::JoinCommute => "join_commute",
            RuleKind::GreedyJoinOrder => "greedy_join_order",
            RuleKind::PredicateSimplify => "predicate_simplify",
            RuleKind::ConstantFold => "constant_fold",
            RuleKind::UnionMerge => "union_merge",
            RuleKind::LimitPushdown => "limit_pushdown",
            RuleKind::SemiJoinReduce => "semi_join_reduce",
            RuleKind::PartialAggPushdown => "partial_agg_pushdown",
            RuleKind::HashJoin => "hash_join",
            RuleKind::MergeJoin => "merge_join",
            RuleKind::NestedLoopJoin => "nested_loop_join",
            RuleKind::HashAgg => "hash_agg",
            RuleKind::SortAgg => "sort_agg",
            RuleKind::RangePartition => "range_partition",
            RuleKind::BushyJoinExploration => "bushy_join_exploration",
            RuleKind::EagerAggBeforeJoin => "eager_agg_before_join",
            RuleKind::CrossJoinReorder => "cross_join_reorder",
            RuleKind::BroadcastJoin => "broadcast_join",
        }
    }

    pub fn from_name(name: &str) -> Option<RuleKind> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub id: RuleId,
    pub name: String,
    pub category: RuleCategory,
}

/// The ordered rule catalog. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RuleCatalog {
    rules: Vec<Rule>,
    bindings: [Option<RuleId>; RuleKind::ALL.len()],
}

impl RuleCatalog {
    pub fn new(rules: Vec<Rule>) -> Result<Self, CatalogError> {
        let len = rules.len();
        for (pos, r) in rules.iter().enumerate() {
            if r.id != pos {
                return Err(CatalogError::NotDense { id: r.id, len });
            }
        }
        let mut bindings = [None; RuleKind::ALL.len()];
        let mut seen = std::collections::BTreeSet::new();
        for r in &rules {
            if !seen.insert(r.name.as_str()) {
                return Err(CatalogError::DuplicateName(r.name.clone()));
            }
            if let Some(kind) = RuleKind::from_name(&r.name) {
                bindings[kind.slot()] = Some(r.id);
            }
        }
        Ok(Self { rules, bindings })
    }

    /// The built-in 24-rule catalog.
    pub fn default_catalog() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("built-in catalog is valid")
    }

    /// Parse `rule_id<TAB>name<TAB>category` lines. Blank lines and lines
    /// starting with `#` are skipped. Rules may appear in any order but ids
    /// must be dense.
    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut rules = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim_end_matches('\r');
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = trimmed.split('\t').collect();
            if parts.len() != 3 {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("expected 3 tab-separated fields, found {}", parts.len()),
                });
            }
            let id = parts[0].parse().map_err(|_| CatalogError::Parse {
                line,
                message: format!("bad rule id {:?}", parts[0]),
            })?;
            let category = parts[2]
                .parse()
                .map_err(|message| CatalogError::Parse { line, message })?;
            rules.push(Rule {
                id,
                name: parts[1].to_string(),
                category,
            });
        }
        rules.sort_by_key(|r| r.id);
        Self::new(rules)
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# rule_id\tname\tcategory\n");
        for r in &self.rules {
            out.push_str(&format!("{}\t{}\t{}\n", r.id, r.name, r.category));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn rule(&self, id: RuleId) -> Option<&Rule> {
        self.rules.get(id)
    }

    pub fn category(&self, id: RuleId) -> Option<RuleCategory> {
        self.rule(id).map(|r| r.category)
    }

    pub fn id_of(&self, kind: RuleKind) -> Option<RuleId> {
        self.bindings[kind.slot()]
    }

    pub fn id_by_name(&self, name: &str) -> Option<RuleId> {
        self.rules.iter().find(|r| r.name == name).map(|r| r.id)
    }

    pub fn ids_in(&self, category: RuleCategory) -> impl Iterator<Item = RuleId> + '_ {
        self.rules
            .iter()
            .filter(move |r| r.category == category)
            .map(|r| r.id)
    }

    /// Every rule enabled except the OffByDefault ones.
    pub fn default_config(&self) -> RuleConfig {
        let mut c = RuleConfig::all_off(self.len());
        for r in &self.rules {
            c.set(r.id, r.category.enabled_by_default());
        }
        c
    }
}

impl Default for RuleCatalog {
    fn default() -> Self {
        Self::default_catalog()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let cat = RuleCatalog::default_catalog();
        assert_eq!(cat.len(), 24);
        let count = |c| cat.ids_in(c).count();
        assert_eq!(count(RuleCategory::Required), 4);
        assert_eq!(count(RuleCategory::OnByDefault), 10);
        assert_eq!(count(RuleCategory::Implementation), 6);
        assert_eq!(count(RuleCategory::OffByDefault), 4);
        for kind in RuleKind::ALL {
            assert!(cat.id_of(kind).is_some(), "{kind:?} unbound");
        }
        assert_eq!(cat.category(5), Some(RuleCategory::OnByDefault));
        assert_eq!(cat.category(20), Some(RuleCategory::OffByDefault));
    }

    #[test]
    fn tsv_round_trip() {
        let cat = RuleCatalog::default_catalog();
        assert_eq!(RuleCatalog::parse(&cat.to_tsv()).unwrap(), cat);
    }

    #[test]
    fn rejects_gaps_and_bad_lines() {
        assert!(matches!(
            RuleCatalog::parse("0\ta\tRequired\n2\tb\tRequired\n"),
            Err(CatalogError::NotDense { .. })
        ));
        assert!(matches!(
            RuleCatalog::parse("0\ta\tSometimes\n"),
            Err(CatalogError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RuleCatalog::parse("0\ta\n"),
            Err(CatalogError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            RuleCatalog::parse("0\ta\tRequired\n1\ta\tRequired\n"),
            Err(CatalogError::DuplicateName(_))
        ));
    }
}
