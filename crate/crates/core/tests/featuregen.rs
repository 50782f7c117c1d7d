mod common;

use proptest::prelude::*;
use rulesteer::featuregen::{
    action_set, build_super_root, collision_rate, featurize_action, featurize_context, job_features, span_indicators,
    FeatureError, DENSE_DIM,
};
use rulesteer::optkernel::{Direction, Flip, RuleCatalog, RuleCategory};
use rulesteer::span::JobSpan;
use rulesteer::workload::ViewRecord;

fn rec(job: &str, q: usize) -> ViewRecord {
    ViewRecord {
        job_id: job.into(),
        template_id: "T1".into(),
        normalized_job_name: "n".into(),
        query_index: q,
        rule_signature: "ff".into(),
        estimated_cost: 10.0,
        estimated_cardinality: 0.0,
        avg_row_length: 0.0,
        row_count: 0.0,
        bytes_read: 0.0,
        latency_s: 5.0,
        pn_hours: 1.0,
        total_vertices: 3,
        max_memory_mb: 64.0,
        avg_memory_mb: 32.0,
        date: common::date(1),
    }
}

#[test]
fn super_root_examples() {
    let mut a = rec("J", 0);
    let mut b = rec("J", 1);
    a.estimated_cardinality = 100.0;
    b.estimated_cardinality = 200.0;
    a.avg_row_length = 10.0;
    b.avg_row_length = 30.0;
    let f = build_super_root(&[&a, &b]).unwrap();
    assert_eq!(f.estimated_cardinality, 300.0);
    assert_eq!(f.avg_row_length, 20.0);
    assert_eq!(f.latency_s, 5.0);
    assert_eq!(f.row_count, 0.0);

    let single = build_super_root(&[&a]).unwrap();
    assert_eq!(single.estimated_cardinality, a.estimated_cardinality);
    assert_eq!(single.avg_row_length, a.avg_row_length);
    assert_eq!(single.pn_hours, a.pn_hours);
    assert_eq!(single.rule_signature, a.rule_signature);

    let other = rec("K", 0);
    assert!(matches!(build_super_root(&[&a, &other]), Err(FeatureError::MixedJobs(..))));
    assert_eq!(build_super_root(&[]), Err(FeatureError::Empty));
}

#[test]
fn context_examples() {
    let cat = RuleCatalog::default_catalog();
    let f = build_super_root(&[&rec("J", 0)]).unwrap();
    assert_eq!(span_indicators(&JobSpan::from_rules([3, 7])), vec![vec![3], vec![7], vec![3, 7]]);
    assert!(span_indicators(&JobSpan::default()).is_empty());
    assert_eq!(span_indicators(&JobSpan::from_rules(4..14)).len(), 175);
    let three = span_indicators(&JobSpan::from_rules([4, 8, 21]));
    assert_eq!(three.len(), 7);
    assert!(three.contains(&vec![4, 8, 21]));

    let span = JobSpan::from_rules([4, 8, 21]);
    let c = featurize_context(&f, &span);
    assert_eq!(c, featurize_context(&f, &span));
    assert_eq!(c.dense.len(), DENSE_DIM);
    assert!(c.sparse.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(c.dense[0], 5.0f64.ln_1p());

    let acts = action_set(&cat, &span);
    assert_eq!(acts.len(), 1 + span.len());
    assert_eq!(acts[0], None);
}

#[test]
fn action_examples() {
    let cat = RuleCatalog::default_catalog();
    let noop = featurize_action(&cat, None).unwrap();
    assert!(noop.noop && noop.rule.is_none() && noop.category.is_none() && noop.direction.is_none());
    let on20 = featurize_action(&cat, Some(Flip::new(20, Direction::On))).unwrap();
    assert!(!on20.noop);
    assert_eq!(on20.rule, Some(20));
    assert_eq!(on20.category, Some(RuleCategory::OffByDefault));
    assert_eq!(on20.direction, Some(Direction::On));
    assert_eq!(
        featurize_action(&cat, Some(Flip::new(0, Direction::Off))),
        Err(FeatureError::RequiredAction(0))
    );
}

#[test]
fn collision_rate_below_one_percent() {
    let mut worst: f64 = 0.0;
    let mut total = 0.0;
    for start in 0..20 {
        let span = JobSpan::from_rules(start..start + 30);
        let r = collision_rate(&span);
        worst = worst.max(r);
        total += r;
    }
    assert!(total / 20.0 < 0.01, "mean collision rate {}", total / 20.0);
    assert!(worst < 0.01, "worst collision rate {worst}");
}

#[test]
fn job_features_preserve_first_appearance() {
    let recs = vec![rec("B", 0), rec("A", 0), rec("B", 1)];
    let fs = job_features(&recs);
    assert_eq!(fs.iter().map(|f| f.job_id.as_str()).collect::<Vec<_>>(), vec!["B", "A"]);
}

fn record_set() -> impl Strategy<Value = Vec<ViewRecord>> {
    proptest::collection::vec(
        (0.0f64..1e9, 0.0f64..500.0, 0.0f64..1e9, 0.0f64..1e12, "[a-c]{1,3}", "[0-9a-f]{2}"),
        1..8,
    )
    .prop_map(|qs| {
        qs.into_iter()
            .enumerate()
            .map(|(i, (card, len, rows, bytes, name, sig))| ViewRecord {
                estimated_cardinality: card,
                avg_row_length: len,
                row_count: rows,
                bytes_read: bytes,
                normalized_job_name: name,
                rule_signature: sig,
                ..rec("J", i)
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn aggregation_matches_fold_oracle(recs in record_set()) {
        let refs: Vec<&ViewRecord> = recs.iter().collect();
        let f = build_super_root(&refs).unwrap();
        let sum = |g: fn(&ViewRecord) -> f64| recs.iter().fold(0.0, |acc, r| acc + g(r));
        let min = |g: fn(&ViewRecord) -> f64| recs.iter().fold(f64::MAX, |acc, r| if g(r) < acc { g(r) } else { acc });
        prop_assert_eq!(f.estimated_cardinality, sum(|r| r.estimated_cardinality));
        prop_assert_eq!(f.bytes_read, sum(|r| r.bytes_read));
        prop_assert_eq!(f.row_count, sum(|r| r.row_count));
        prop_assert_eq!(f.avg_row_length, sum(|r| r.avg_row_length) / recs.len() as f64);
        prop_assert_eq!(f.latency_s, min(|r| r.latency_s));
        prop_assert_eq!(f.pn_hours, min(|r| r.pn_hours));
        prop_assert_eq!(f.max_memory_mb, min(|r| r.max_memory_mb));
        let mut names: Vec<&str> = recs.iter().map(|r| r.normalized_job_name.as_str()).collect();
        names.sort();
        prop_assert_eq!(f.normalized_job_name.as_str(), names[0]);
        let mut sigs: Vec<&str> = recs.iter().map(|r| r.rule_signature.as_str()).collect();
        sigs.sort();
        prop_assert_eq!(f.rule_signature.as_str(), sigs[0]);
        prop_assert_eq!(f.total_vertices, recs.iter().map(|r| r.total_vertices).min().unwrap());
    }

    #[test]
    fn indicator_count_is_binomial(n in 0usize..20) {
        let span = JobSpan::from_rules(0..n);
        let expected = n + n * n.saturating_sub(1) / 2 + n * n.saturating_sub(1) * n.saturating_sub(2) / 6;
        prop_assert_eq!(span_indicators(&span).len(), expected);
    }
}
