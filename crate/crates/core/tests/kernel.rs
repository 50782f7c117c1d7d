mod common;

use std::path::Path;

use proptest::prelude::*;
use rulesteer::optkernel::{
    apply_flip, compile, compile_with_flip, CompileError, Direction, Flip, FlipError, RuleCatalog, RuleCategory,
    RuleKind,
};

#[test]
fn default_catalog_examples() {
    let cat = rulesteer::optkernel::rule_catalog();
    assert_eq!(cat.len(), 24);
    assert!(cat.ids_in(RuleCategory::OffByDefault).count() >= 1);
    for c in RuleCategory::ALL {
        assert!(cat.ids_in(c).count() >= 1, "{c:?}");
    }
}

#[test]
fn loads_256_rule_catalog() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/catalog_256.tsv");
    let cat = RuleCatalog::load(&path).unwrap();
    assert_eq!(cat.len(), 256);
    assert_eq!(cat.default_config().len(), 256);
    // extra rules are inert; the known ones still drive compilation
    let w = common::small_workload(5, 1, 1, 3);
    for job in &w.days[0].jobs {
        let big = compile(&cat, job, &cat.default_config()).unwrap();
        let small = compile(&RuleCatalog::default_catalog(), job, &RuleCatalog::default_catalog().default_config()).unwrap();
        assert_eq!(big.est_cost, small.est_cost);
        assert!(big.signature.rules().all(|r| r < 24));
    }
}

#[test]
fn default_compile_fires_required_and_is_deterministic() {
    let cat = RuleCatalog::default_catalog();
    let w = common::small_workload(12, 1, 1, 11);
    for job in &w.days[0].jobs {
        let a = compile(&cat, job, &cat.default_config()).unwrap();
        let b = compile(&cat, job, &cat.default_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.est_cost.to_bits(), b.est_cost.to_bits());
        for id in cat.ids_in(RuleCategory::Required) {
            assert!(a.fired(id), "required rule {id} did not fire on {}", job.job_id);
        }
        assert!(a.est_cost >= 0.0);
    }
}

#[test]
fn flip_examples() {
    let cat = RuleCatalog::default_catalog();
    let d = cat.default_config();
    let off5 = apply_flip(&cat, &d, Flip::new(5, Direction::Off)).unwrap();
    assert!(!off5.is_enabled(5));
    assert_eq!(off5.0.diff(&d.0), vec![5]);
    let on20 = apply_flip(&cat, &d, Flip::new(20, Direction::On)).unwrap();
    assert!(on20.is_enabled(20));
    assert_eq!(on20.0.diff(&d.0), vec![20]);
    assert_eq!(apply_flip(&cat, &d, Flip::new(0, Direction::Off)), Err(FlipError::Required(0)));
    assert!(matches!(apply_flip(&cat, &d, Flip::new(5, Direction::On)), Err(FlipError::NoOp { .. })));
}

#[test]
fn single_join_implementation_fails_when_disabled() {
    let cat = common::catalog_without(&["merge_join", "nested_loop_join", "broadcast_join"]);
    let job = common::hand_job("J", vec![common::filter_over_join()]);
    assert!(compile(&cat, &job, &cat.default_config()).is_ok());
    let hash = cat.id_of(RuleKind::HashJoin).unwrap();
    let res = compile_with_flip(&cat, &job, Some(Flip::new(hash, Direction::Off)));
    assert_eq!(res.unwrap_err(), CompileError::NoImplementation("join"));
}

#[test]
fn compile_rejects_disabled_required_rule() {
    let cat = RuleCatalog::default_catalog();
    let job = common::hand_job("J", vec![common::bare_scan()]);
    let mut cfg = cat.default_config();
    cfg.set(2, false);
    assert_eq!(compile(&cat, &job, &cfg).unwrap_err(), CompileError::RequiredDisabled(2));
}

#[test]
fn flips_both_improve_and_worsen_somewhere() {
    let cat = RuleCatalog::default_catalog();
    let w = common::small_workload(30, 1, 1, 5);
    let (mut better, mut worse) = (false, false);
    for job in &w.days[0].jobs {
        let base = compile(&cat, job, &cat.default_config()).unwrap().est_cost;
        for r in cat.rules().iter().filter(|r| r.category != RuleCategory::Required) {
            if let Ok(p) = compile_with_flip(&cat, job, Some(Flip::inverting(&cat, r.id).unwrap())) {
                better |= p.est_cost < base;
                worse |= p.est_cost > base;
            }
        }
    }
    assert!(better && worse);
}

fn jobs() -> Vec<rulesteer::optkernel::Job> {
    common::small_workload(16, 1, 1, 21).days.remove(0).jobs
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn signature_within_config_and_monotone(job_idx in 0usize..16, bits in any::<u32>()) {
        let cat = RuleCatalog::default_catalog();
        let jobs = jobs();
        let job = &jobs[job_idx];
        let mut cfg = cat.default_config();
        for r in cat.rules() {
            if r.category != RuleCategory::Required {
                cfg.set(r.id, bits >> r.id & 1 == 1);
            }
        }
        match compile(&cat, job, &cfg) {
            Ok(plan) => {
                prop_assert!(plan.signature.is_subset_of(&cfg));
                prop_assert_eq!(&plan, &compile(&cat, job, &cfg).unwrap());
                for r in cat.rules() {
                    if r.category == RuleCategory::Required || !cfg.is_enabled(r.id) || plan.fired(r.id) {
                        continue;
                    }
                    let mut less = cfg.clone();
                    less.set(r.id, false);
                    let again = compile(&cat, job, &less).unwrap();
                    prop_assert!(again.same_dag(&plan), "disabling unfired rule {} changed the plan", r.id);
                    prop_assert_eq!(again.est_cost, plan.est_cost);
                }
            }
            Err(e) => {
                let expected = matches!(e, CompileError::NoImplementation(_) | CompileError::InvalidRewrite { .. });
                prop_assert!(expected, "unexpected error {:?}", e);
            }
        }
    }
}
