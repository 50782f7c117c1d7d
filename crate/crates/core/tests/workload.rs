mod common;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rulesteer::optkernel::RuleCatalog;
use rulesteer::workload::generate::best_flip_gain;
use rulesteer::workload::{
    generate_workload, jobs_path_for_view, parse_spec, parse_view, read_jobs, view_file_name, write_jobs, ViewRecord,
    WorkloadSpec,
};
use rulesteer::workload::view::view_to_string;

#[test]
fn counts_and_templates() {
    let w = generate_workload(&WorkloadSpec::new(10, 3, 2, 0.5, 7)).unwrap();
    let jobs: Vec<_> = w.all_jobs().collect();
    assert_eq!(jobs.len(), 60);
    let tids: BTreeSet<_> = jobs.iter().map(|j| j.template_id.as_str()).collect();
    assert_eq!(tids.len(), 10);
    let ids: BTreeSet<_> = jobs.iter().map(|j| j.job_id.as_str()).collect();
    assert_eq!(ids.len(), 60);
}

#[test]
fn deterministic_in_seed() {
    let spec = WorkloadSpec::new(10, 3, 2, 0.5, 7);
    assert_eq!(generate_workload(&spec).unwrap(), generate_workload(&spec).unwrap());
    let other = WorkloadSpec { seed: 8, ..spec.clone() };
    assert_ne!(generate_workload(&spec).unwrap(), generate_workload(&other).unwrap());
}

#[test]
fn recurrence_keeps_structure_and_varies_stats() {
    let w = generate_workload(&WorkloadSpec::new(8, 2, 3, 0.5, 4)).unwrap();
    let mut by_t: BTreeMap<&str, Vec<&rulesteer::optkernel::Job>> = BTreeMap::new();
    for j in w.all_jobs() {
        by_t.entry(&j.template_id).or_default().push(j);
    }
    for jobs in by_t.values() {
        assert_eq!(jobs.len(), 6);
        for j in &jobs[1..] {
            assert_eq!(j.queries, jobs[0].queries);
            assert_eq!(j.schema, jobs[0].schema);
        }
        assert!(jobs.iter().any(|j| j.input_stats != jobs[0].input_stats));
    }
}

#[test]
fn invalid_spec_rejected() {
    assert!(generate_workload(&WorkloadSpec::new(0, 1, 1, 0.5, 1)).is_err());
    assert!(generate_workload(&WorkloadSpec::new(3, 1, 1, 1.5, 1)).is_err());
    assert!(parse_spec("n_templates = 3").is_err());
    let spec = parse_spec("n_templates = 3\nruns_per_template_per_day = 2\ndays = 1\nplanted_improvable_fraction = 0.5\nseed = 9\n").unwrap();
    assert_eq!(spec.n_templates, 3);
    assert_eq!(spec.seed, 9);
}

#[test]
fn planted_fraction_matches_oracle() {
    let cat = RuleCatalog::default_catalog();
    let w = generate_workload(&WorkloadSpec::new(60, 1, 1, 0.5, 13)).unwrap();
    let improvable = w.days[0]
        .jobs
        .iter()
        .filter(|j| best_flip_gain(&cat, j).unwrap() > 0.0)
        .count();
    let frac = improvable as f64 / 60.0;
    assert!((frac - 0.5).abs() <= 0.15, "improvable fraction {frac}");
}

#[test]
fn view_examples() {
    let cat = RuleCatalog::default_catalog();
    let text = view_to_string(&[]);
    assert_eq!(text.lines().count(), 1);
    assert!(parse_view(&text).unwrap().is_empty());

    let two = common::hand_job("A", vec![common::bare_scan(), common::filter_over_join()]);
    let mut other = common::hand_job("B", vec![common::bare_scan(), common::bare_scan()]);
    other.job_id = "B-1".into();
    let view = common::view_of(&cat, &[two, other], 1);
    assert_eq!(view.len(), 4);
}

#[test]
fn generated_day_round_trips_and_job_fields_agree() {
    let cat = RuleCatalog::default_catalog();
    let w = common::small_workload(20, 2, 1, 2);
    let view = common::view_of(&cat, &w.days[0].jobs, 5);
    assert_eq!(parse_view(&view_to_string(&view)).unwrap(), view);
    let mut by_job: BTreeMap<&str, Vec<&ViewRecord>> = BTreeMap::new();
    for r in &view {
        by_job.entry(&r.job_id).or_default().push(r);
    }
    for recs in by_job.values() {
        let f = recs[0];
        for r in recs {
            assert_eq!(
                (r.latency_s, r.pn_hours, r.total_vertices, r.estimated_cost, &r.rule_signature, r.max_memory_mb, r.avg_memory_mb),
                (f.latency_s, f.pn_hours, f.total_vertices, f.estimated_cost, &f.rule_signature, f.max_memory_mb, f.avg_memory_mb)
            );
        }
    }
}

#[test]
fn malformed_view_names_line() {
    let cat = RuleCatalog::default_catalog();
    let w = common::small_workload(2, 1, 1, 2);
    let text = view_to_string(&common::view_of(&cat, &w.days[0].jobs, 5));
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[2] = lines[2].replacen('\t', "\tx\t", 1);
    let err = parse_view(&lines.join("\n")).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn jobs_file_sits_next_to_view() {
    let dir = tempfile::tempdir().unwrap();
    let w = common::small_workload(3, 1, 1, 2);
    let date = w.days[0].date;
    let view = dir.path().join(view_file_name(date));
    let jobs_path = jobs_path_for_view(&view).unwrap();
    write_jobs(&jobs_path, &w.days[0].jobs).unwrap();
    assert_eq!(read_jobs(&jobs_path).unwrap(), w.days[0].jobs);
}

fn record() -> impl Strategy<Value = ViewRecord> {
    let real = || prop_oneof![Just(0.0), 0.0f64..1e12, 1e-6f64..1.0];
    (
        ("[A-Z][0-9]{3}", "[a-z_]{1,12}", 0usize..9, "[0-9a-f]{6}"),
        (real(), real(), real(), real(), real(), real(), real()),
        (0u64..100_000, real(), real(), 1u32..28),
    )
        .prop_map(|((t, name, qi, sig), (c, card, len, rows, bytes, lat, pn), (v, mx, av, day))| {
            ViewRecord {
                job_id: format!("{t}-x"),
                template_id: t,
                normalized_job_name: name,
                query_index: qi,
                rule_signature: sig,
                estimated_cost: c,
                estimated_cardinality: card,
                avg_row_length: len,
                row_count: rows,
                bytes_read: bytes,
                latency_s: lat,
                pn_hours: pn,
                total_vertices: v,
                max_memory_mb: mx,
                avg_memory_mb: av,
                date: common::date(day),
            }
            .quantized()
        })
}

proptest! {
    #[test]
    fn view_round_trip(records in proptest::collection::vec(record(), 0..20)) {
        let text = view_to_string(&records);
        let back = parse_view(&text).unwrap();
        prop_assert_eq!(&back, &records);
        prop_assert_eq!(view_to_string(&back), text);
    }
}
