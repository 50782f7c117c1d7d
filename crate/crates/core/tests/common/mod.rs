#![allow(dead_code)]

use chrono::NaiveDate;
use rulesteer::optkernel::logical::{CardinalityErrors, GroupDef, InputStats, Predicate, Schema, TableDef};
use rulesteer::optkernel::{Job, Logical, Rule, RuleCatalog};
use rulesteer::workload::{generate_workload, observe_day, ViewRecord, WorkloadSpec};
use rulesteer::flightsim::NoiseModel;

pub fn date(d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, d).unwrap()
}

/// Hand-built job over a fact table (0) and a small dimension (1).
/// Predicates: 0 = filter on the dimension, 1 = equi join fact-dim.
pub fn hand_job(template: &str, queries: Vec<Logical>) -> Job {
    let schema = Schema {
        tables: vec![
            TableDef { name: "fact".into(), width: 120.0 },
            TableDef { name: "dim".into(), width: 60.0 },
        ],
        predicates: vec![Predicate::filter(1), Predicate::equi(0, 1)],
        groups: vec![GroupDef { eager_table: Some(0), decomposable: true, width: 32.0 }],
    };
    Job {
        job_id: format!("{template}-1"),
        template_id: template.into(),
        normalized_name: format!("name_{template}"),
        date: date(1),
        schema,
        queries,
        input_stats: InputStats {
            table_rows: vec![5.0e8, 1.0e5],
            selectivity: vec![0.01, 1.0e-5],
            group_ndv: vec![1000.0],
            eager_ndv: vec![50000.0],
        },
        errors: CardinalityErrors {
            selectivity: vec![1.0, 1.0],
            group_ndv: vec![1.0],
            eager_ndv: vec![1.0],
        },
    }
}

/// Filter above a join: filter pushdown has something to do.
pub fn filter_over_join() -> Logical {
    Logical::scan(0).join(Logical::scan(1), 1).filter(vec![0]).output(false)
}

/// Plain scan-output: nothing but required rules apply.
pub fn bare_scan() -> Logical {
    Logical::scan(1).output(false)
}

pub fn small_workload(n_templates: usize, runs: usize, days: usize, seed: u64) -> rulesteer::workload::Workload {
    generate_workload(&WorkloadSpec::new(n_templates, runs, days, 0.5, seed)).unwrap()
}

pub fn view_of(catalog: &RuleCatalog, jobs: &[Job], seed: u64) -> Vec<ViewRecord> {
    observe_day(catalog, jobs, &NoiseModel::default(), seed)
}

/// The default catalog without the named rules, renumbered densely.
pub fn catalog_without(names: &[&str]) -> RuleCatalog {
    let rules: Vec<Rule> = RuleCatalog::default_catalog()
        .rules()
        .iter()
        .filter(|r| !names.contains(&r.name.as_str()))
        .enumerate()
        .map(|(i, r)| Rule { id: i, name: r.name.clone(), category: r.category })
        .collect();
    RuleCatalog::new(rules).unwrap()
}
