mod common;

use std::path::Path;

use rulesteer::bandit::{write_log, Mode};
use rulesteer::flightsim::RunMetrics;
use rulesteer::optkernel::{apply_flip, compile, Direction, RuleCatalog};
use rulesteer::pipeline::{
    compile_with_hints, end_to_end_oracle_gap, hinted_config, parse_hints, report_metrics, run_day, simulate,
    validate_hints, write_hints, DayConfig, DayInputs, DayReport, HarnessConfig, HintEntry, HintError, Stage,
    HINTS_HEADER,
};
use rulesteer::span::SpanError;
use rulesteer::workload::WorkloadSpec;

fn small_harness(seed: u64) -> HarnessConfig {
    HarnessConfig {
        spec: WorkloadSpec::new(40, 5, 15, 0.5, seed),
        ..HarnessConfig::standard(seed)
    }
}

fn metrics(pn: f64, lat: f64, v: u64) -> RunMetrics {
    RunMetrics {
        latency_s: lat,
        pn_hours: pn,
        data_read: 1.0,
        data_written: 1.0,
        total_vertices: v,
    }
}

fn entry(t: &str, rule: usize, d: Direction) -> HintEntry {
    HintEntry {
        template_id: t.into(),
        rule_id: rule,
        direction: d,
    }
}

#[test]
fn hints_format() {
    assert_eq!(write_hints(&[]), format!("{HINTS_HEADER}\n"));
    assert_eq!(write_hints(&[]), "# qo-advisor-hints v1\n");
    let ten: Vec<_> = (0..10)
        .map(|i| entry(&format!("T{i:04}"), 4 + i, if 4 + i >= 20 { Direction::On } else { Direction::Off }))
        .collect();
    assert_eq!(parse_hints(&write_hints(&ten)).unwrap(), ten);
    validate_hints(&RuleCatalog::default_catalog(), &ten).unwrap();

    let dup = format!("{HINTS_HEADER}\nT1\t4\toff\nT1\t5\toff\n");
    assert_eq!(
        parse_hints(&dup),
        Err(HintError::Duplicate { line: 3, template_id: "T1".into() })
    );
    assert!(parse_hints("T1\t4\toff\n").is_err());
    assert!(parse_hints(&format!("{HINTS_HEADER}\nT1\t4\n")).is_err());
    assert!(parse_hints(&format!("{HINTS_HEADER}\nT1\tx\toff\n")).is_err());
    assert!(validate_hints(&RuleCatalog::default_catalog(), &[entry("T", 0, Direction::Off)]).is_err());
}

#[test]
fn hints_amend_only_their_template() {
    let cat = RuleCatalog::default_catalog();
    let a = common::hand_job("A", vec![common::filter_over_join()]);
    let b = common::hand_job("B", vec![common::filter_over_join()]);
    let hints = vec![entry("A", 4, Direction::Off)];
    let cfg = hinted_config(&cat, &a, &hints).unwrap();
    assert_eq!(cfg.0.diff(&cat.default_config().0), vec![4]);
    assert_eq!(hinted_config(&cat, &b, &hints).unwrap(), cat.default_config());
    assert_eq!(compile_with_hints(&cat, &b, &hints).unwrap(), compile(&cat, &b, &cat.default_config()).unwrap());
    assert!(!compile_with_hints(&cat, &a, &hints).unwrap().fired(4));
}

#[test]
fn report_metric_examples() {
    let same: Vec<_> = (1..=5).map(|i| (metrics(i as f64, 10.0, 3), metrics(i as f64, 10.0, 3))).collect();
    let r = report_metrics(&same);
    assert_eq!((r.aggregate.pn_hours, r.aggregate.latency, r.aggregate.vertices), (0.0, 0.0, 0.0));
    assert_eq!(r.latency_regressions, 0);

    let cut: Vec<_> = (1..=70).map(|i| (metrics(i as f64, 10.0, 4), metrics(0.857 * i as f64, 10.0, 4))).collect();
    let r = report_metrics(&cut);
    assert!((r.aggregate.pn_hours * 100.0 - -14.3).abs() < 1e-9);
    assert_eq!(r.jobs, 70);
    assert_eq!(r.deltas.pn_hours.len(), 70);
    assert!(r.deltas.pn_hours.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn empty_span_day() {
    let cat = RuleCatalog::default_catalog();
    let jobs: Vec<_> = (0..5)
        .map(|i| {
            let mut j = common::hand_job(&format!("S{i}"), vec![common::bare_scan()]);
            j.job_id = format!("S{i}-job");
            j
        })
        .collect();
    let view = common::view_of(&cat, &jobs, 1);
    let out = run_day(
        &DayInputs { catalog: &cat, view: &view, jobs: &jobs, policy: None, vmodel: None },
        &DayConfig { mode: Mode::Exploit, ..DayConfig::default() },
    )
    .unwrap();
    assert!(out.hints.is_empty());
    assert_eq!(write_hints(&out.hints), format!("{HINTS_HEADER}\n"));
    assert_eq!(out.report.counts.jobs, 5);
    assert_eq!(out.report.counts.nonempty_spans, 0);
    assert_eq!(out.report.counts.hinted_jobs, 0);
    assert!(out.log.is_empty());
}

#[test]
fn missing_job_is_a_feature_generation_error() {
    let cat = RuleCatalog::default_catalog();
    let jobs = vec![common::hand_job("A", vec![common::filter_over_join()])];
    let view = common::view_of(&cat, &jobs, 1);
    let err = run_day(
        &DayInputs { catalog: &cat, view: &view, jobs: &[], policy: None, vmodel: None },
        &DayConfig::default(),
    )
    .unwrap_err();
    assert_eq!(err.stage, Stage::FeatureGeneration);
    assert!(err.to_string().starts_with("feature generation: "));
}

#[test]
fn log_mode_emits_no_hints_and_conserves_counts() {
    let cat = RuleCatalog::default_catalog();
    let w = common::small_workload(30, 4, 1, 6);
    let view = common::view_of(&cat, &w.days[0].jobs, 2);
    let out = run_day(
        &DayInputs { catalog: &cat, view: &view, jobs: &w.days[0].jobs, policy: None, vmodel: None },
        &DayConfig::default(),
    )
    .unwrap();
    assert!(out.hints.is_empty());
    assert_eq!(out.log.len(), out.report.counts.nonempty_spans);
    assert_eq!(out.report.uniform.total(), out.log.len());
    assert_eq!(out.report.exploit.total(), 0);
    out.report.counts.check().unwrap();
    for r in &out.log {
        assert_eq!(r.propensity, 1.0 / r.actions.len() as f64);
        assert!((0.0..=2.0).contains(&r.reward));
    }
}

#[test]
fn exploit_days_are_deterministic_and_consistent() {
    let cat = RuleCatalog::default_catalog();
    let sim = simulate(&cat, &small_harness(4)).unwrap();
    let a = sim.evaluate(&cat, true).unwrap();
    let b = sim.evaluate(&cat, true).unwrap();
    assert_eq!(write_hints(&a.hints), write_hints(&b.hints));
    assert_eq!(a.report.to_text(), b.report.to_text());
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    write_log(&mut la, &a.log).unwrap();
    write_log(&mut lb, &b.log).unwrap();
    assert_eq!(la, lb);

    a.report.counts.check().unwrap();
    assert_eq!(DayReport::parse(&a.report.to_text()).unwrap(), a.report);
    assert_eq!(parse_hints(&write_hints(&a.hints)).unwrap(), a.hints);

    // single flip per hint, and every job of a hinted template gets it
    let default = cat.default_config();
    validate_hints(&cat, &a.hints).unwrap();
    let mut hinted_jobs = 0;
    for job in sim.eval_jobs() {
        let cfg = hinted_config(&cat, job, &a.hints).unwrap();
        match a.hints.iter().find(|h| h.template_id == job.template_id) {
            Some(h) => {
                hinted_jobs += 1;
                assert_eq!(cfg, apply_flip(&cat, &default, h.flip()).unwrap());
                assert_eq!(cfg.0.diff(&default.0).len(), 1);
            }
            None => assert_eq!(cfg, default),
        }
    }
    assert_eq!(hinted_jobs, a.report.counts.hinted_jobs);
    let planned: Vec<_> = a.flights.iter().map(|f| f.template_id.clone()).collect();
    let unique: std::collections::BTreeSet<_> = planned.iter().collect();
    assert_eq!(unique.len(), planned.len());
}

#[test]
fn gate_reduces_regressions() {
    let cat = RuleCatalog::default_catalog();
    let sim = simulate(&cat, &small_harness(7)).unwrap();
    let gated = sim.evaluate(&cat, true).unwrap();
    let open = sim.evaluate(&cat, false).unwrap();
    assert!(open.hints.len() >= gated.hints.len());
    assert!(
        gated.report.hinted.pn_regressions < open.report.hinted.pn_regressions,
        "gated {} vs ungated {}",
        gated.report.hinted.pn_regressions,
        open.report.hinted.pn_regressions
    );
    for h in &gated.hints {
        assert!(open.hints.contains(h));
    }
}

#[test]
fn planted_template_gets_one_hint_for_all_its_jobs() {
    let cat = RuleCatalog::default_catalog();
    let cfg = HarnessConfig {
        spec: WorkloadSpec::new(1, 10, 15, 1.0, 3),
        ..HarnessConfig::standard(3)
    };
    let sim = simulate(&cat, &cfg).unwrap();
    let out = sim.evaluate(&cat, true).unwrap();
    assert_eq!(out.hints.len(), 1, "{}", out.report.summary());
    assert_eq!(out.hints[0].template_id, "T0000");
    assert_eq!(out.report.counts.hinted_jobs, 10);
    assert_eq!(out.report.hinted.jobs, 10);
    assert!(out.report.hinted.aggregate.pn_hours < 0.0);
}

#[test]
fn oracle_gap_edge_cases() {
    let cat = RuleCatalog::default_catalog();
    let bare = vec![common::hand_job("S", vec![common::bare_scan()])];
    let gap = end_to_end_oracle_gap(&cat, &bare, &[]).unwrap();
    assert_eq!((gap.available, gap.ratio), (0.0, 1.0));

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/catalog_256.tsv");
    let big = RuleCatalog::load(&path).unwrap();
    assert_eq!(end_to_end_oracle_gap(&big, &bare, &[]).unwrap_err(), SpanError::GuardExceeded(256));
}
