use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::{RuleCatalog, RuleCategory, RuleId};
use crate::bits::RuleBits;

/// Enabled rules for one compilation.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct RuleConfig(pub RuleBits);

/// Rules that fired while producing the final plan.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct RuleSignature(pub RuleBits);

impl RuleConfig {
    pub fn all_off(len: usize) -> Self {
        Self(RuleBits::zeros(len))
    }

    pub fn is_enabled(&self, id: RuleId) -> bool {
        self.0.get(id)
    }

    pub fn set(&mut self, id: RuleId, enabled: bool) {
        self.0.set(id, enabled);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl RuleSignature {
    pub fn empty(len: usize) -> Self {
        Self(RuleBits::zeros(len))
    }

    pub fn contains(&self, id: RuleId) -> bool {
        self.0.get(id)
    }

    pub fn insert(&mut self, id: RuleId) {
        self.0.set(id, true);
    }

    pub fn rules(&self) -> impl Iterator<Item = RuleId> + '_ {
        self.0.iter_ones()
    }

    pub fn is_subset_of(&self, config: &RuleConfig) -> bool {
        self.0.is_subset_of(&config.0)
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    On,
    Off,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::On => "on",
            Direction::Off => "off",
        }
    }

    /// The direction that inverts a rule's default state.
    pub fn flipping(category: RuleCategory) -> Direction {
        if category.enabled_by_default() {
            Direction::Off
        } else {
            Direction::On
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "on" => Ok(Direction::On),
            "off" => Ok(Direction::Off),
            _ => Err(format!("direction must be on|off, got {s:?}")),
        }
    }
}

/// A single-rule amendment of the default configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flip {
    pub rule: RuleId,
    pub direction: Direction,
}

impl Flip {
    pub fn new(rule: RuleId, direction: Direction) -> Self {
        Self { rule, direction }
    }

    /// The flip that inverts `rule`'s default state in `catalog`.
    pub fn inverting(catalog: &RuleCatalog, rule: RuleId) -> Result<Self, FlipError> {
        let category = catalog.category(rule).ok_or(FlipError::UnknownRule(rule))?;
        if category == RuleCategory::Required {
            return Err(FlipError::Required(rule));
        }
        Ok(Self::new(rule, Direction::flipping(category)))
    }
}

impl fmt::Display for Flip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.rule, self.direction)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlipError {
    #[error("rule {0} is not in the catalog")]
    UnknownRule(RuleId),
    #[error("rule {0} is required and must always be enabled")]
    Required(RuleId),
    #[error("rule {rule} is already {direction} in the default configuration")]
    NoOp { rule: RuleId, direction: Direction },
}

/// Amend `default` with one flip. The result differs from `default` in
/// exactly one bit.
pub fn apply_flip(
    catalog: &RuleCatalog,
    default: &RuleConfig,
    flip: Flip,
) -> Result<RuleConfig, FlipError> {
    let category = catalog
        .category(flip.rule)
        .ok_or(FlipError::UnknownRule(flip.rule))?;
    if category == RuleCategory::Required {
        return Err(FlipError::Required(flip.rule));
    }
    let target = flip.direction == Direction::On;
    if default.is_enabled(flip.rule) == target {
        return Err(FlipError::NoOp {
            rule: flip.rule,
            direction: flip.direction,
        });
    }
    let mut out = default.clone();
    out.set(flip.rule, target);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flips_differ_in_one_bit() {
        let cat = RuleCatalog::default_catalog();
        let d = cat.default_config();
        let off5 = apply_flip(&cat, &d, Flip::new(5, Direction::Off)).unwrap();
        assert!(!off5.is_enabled(5));
        assert_eq!(off5.0.diff(&d.0), vec![5]);
        let on20 = apply_flip(&cat, &d, Flip::new(20, Direction::On)).unwrap();
        assert!(on20.is_enabled(20));
        assert_eq!(on20.0.diff(&d.0), vec![20]);
    }

    #[test]
    fn rejects_required_and_noop() {
        let cat = RuleCatalog::default_catalog();
        let d = cat.default_config();
        assert_eq!(
            apply_flip(&cat, &d, Flip::new(0, Direction::Off)),
            Err(FlipError::Required(0))
        );
        assert!(matches!(
            apply_flip(&cat, &d, Flip::new(5, Direction::On)),
            Err(FlipError::NoOp { .. })
        ));
        assert!(matches!(
            apply_flip(&cat, &d, Flip::new(99, Direction::On)),
            Err(FlipError::UnknownRule(99))
        ));
        assert_eq!(Flip::inverting(&cat, 1), Err(FlipError::Required(1)));
        assert_eq!(
            Flip::inverting(&cat, 21).unwrap(),
            Flip::new(21, Direction::On)
        );
    }
}
