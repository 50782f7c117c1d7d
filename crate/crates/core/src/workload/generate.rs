//! Synthetic recurring workloads built from a handful of query motifs.
//!
//! Templates are either *planted* (at least one single flip strictly lowers
//! the estimated cost) or *neutral* (the default plan is already the
//! cheapest single-flip neighbour). Each candidate template is checked
//! against an exhaustive single-flip recompilation and redrawn until it
//! matches its intended class.

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::WorkloadError;
use crate::optkernel::logical::{
    CardinalityErrors, GroupDef, GroupId, InputStats, Predicate, PredId, Schema, TableDef, TableId,
};
use crate::optkernel::{compile, Flip, Job, Logical, RuleCatalog, RuleCategory};
use crate::seed;

/// Relative est-cost gain a planted template must show on its baseline
/// statistics.
const PLANTED_MARGIN: f64 = 0.05;
const MAX_ATTEMPTS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableUniverse {
    /// Row-count ranges `[lo, hi]`, sampled log-uniformly.
    pub fact_rows: [f64; 2],
    pub dim_rows: [f64; 2],
    pub small_rows: [f64; 2],
    /// Bytes per row.
    pub width: [f64; 2],
    /// Log-space standard deviation of per-run row counts.
    pub run_sigma: f64,
    /// Log-space standard deviation of per-template estimation errors.
    pub error_sigma: f64,
}

impl Default for TableUniverse {
    fn default() -> Self {
        Self {
            fact_rows: [1.0e8, 2.0e9],
            dim_rows: [3.0e7, 1.5e8],
            small_rows: [2.0e4, 2.0e5],
            width: [40.0, 200.0],
            run_sigma: 0.2,
            error_sigma: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub n_templates: usize,
    pub runs_per_template_per_day: usize,
    pub days: usize,
    #[serde(default)]
    pub table_universe: TableUniverse,
    pub planted_improvable_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_start")]
    pub start_date: NaiveDate,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date")
}

impl WorkloadSpec {
    pub fn new(n_templates: usize, runs: usize, days: usize, planted: f64, seed: u64) -> Self {
        Self {
            n_templates,
            runs_per_template_per_day: runs,
            days,
            table_universe: TableUniverse::default(),
            planted_improvable_fraction: planted,
            seed,
            start_date: default_start(),
        }
    }

    /// The standard planted workload: 200 templates, 10 runs each per day.
    pub fn standard(days: usize, seed: u64) -> Self {
        Self::new(200, 10, days, 0.5, seed)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::InvalidSpec(m.to_string()));
        if self.n_templates == 0 || self.runs_per_template_per_day == 0 || self.days == 0 {
            return bad("n_templates, runs_per_template_per_day and days must be positive");
        }
        if !(0.0..=1.0).contains(&self.planted_improvable_fraction) {
            return bad("planted_improvable_fraction must lie in [0, 1]");
        }
        let u = &self.table_universe;
        for (name, r) in [
            ("fact_rows", u.fact_rows),
            ("dim_rows", u.dim_rows),
            ("small_rows", u.small_rows),
            ("width", u.width),
        ] {
            if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
                return Err(WorkloadError::InvalidSpec(format!(
                    "{name} must satisfy 0 < lo <= hi"
                )));
            }
        }
        if !(u.run_sigma >= 0.0 && u.error_sigma >= 0.0) {
            return bad("sigmas must be nonnegative");
        }
        Ok(())
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start_date
            .checked_add_days(Days::new(day as u64))
            .expect("date in range")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Motif {
    ScanAggregate,
    FactDimension,
    Star,
    UnionLimit,
    ThetaOverAggregates,
    EagerAggregate,
    SmallDimension,
    EarlyCrossJoin,
    BushyJoin,
    WeakSemiJoin,
    WidePartialAggregate,
    RedundantPredicate,
}

impl Motif {
    pub const NEUTRAL: [Motif; 5] = [
        Motif::ScanAggregate,
        Motif::FactDimension,
        Motif::Star,
        Motif::UnionLimit,
        Motif::ThetaOverAggregates,
    ];
    pub const PLANTED: [Motif; 7] = [
        Motif::EagerAggregate,
        Motif::SmallDimension,
        Motif::EarlyCrossJoin,
        Motif::BushyJoin,
        Motif::WeakSemiJoin,
        Motif::WidePartialAggregate,
        Motif::RedundantPredicate,
    ];

    pub fn is_planted(self) -> bool {
        Self::PLANTED.contains(&self)
    }
}

/// The fixed part of a recurring job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobTemplate {
    pub template_id: String,
    pub normalized_name: String,
    pub motif: Motif,
    pub planted: bool,
    /// Whether the exhaustive check confirmed the intended class.
    pub verified: bool,
    pub schema: Schema,
    pub queries: Vec<Logical>,
    pub base_stats: InputStats,
    pub errors: CardinalityErrors,
}

impl JobTemplate {
    /// A job instance with the given statistics.
    pub fn instantiate(&self, job_id: String, date: NaiveDate, stats: InputStats) -> Job {
        Job {
            job_id,
            template_id: self.template_id.clone(),
            normalized_name: self.normalized_name.clone(),
            date,
            schema: self.schema.clone(),
            queries: self.queries.clone(),
            input_stats: stats,
            errors: self.errors.clone(),
        }
    }

    /// Per-run statistics: every table's rows scaled by an independent
    /// lognormal factor.
    pub fn draw_stats(&self, rng: &mut ChaCha8Rng, sigma: f64) -> InputStats {
        let mut s = self.base_stats.clone();
        if sigma > 0.0 {
            let ln = LogNormal::new(0.0, sigma).expect("valid sigma");
            for r in &mut s.table_rows {
                *r = (*r * ln.sample(rng)).round().max(1.0);
            }
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayJobs {
    pub date: NaiveDate,
    pub jobs: Vec<Job>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub templates: Vec<JobTemplate>,
    pub days: Vec<DayJobs>,
}

impl Workload {
    pub fn all_jobs(&self) -> impl Iterator<Item = &Job> {
        self.days.iter().flat_map(|d| d.jobs.iter())
    }
}

pub fn generate_workload(spec: &WorkloadSpec) -> Result<Workload, WorkloadError> {
    spec.validate()?;
    let catalog = RuleCatalog::default_catalog();
    let n = spec.n_templates;
    let planted_count = (spec.planted_improvable_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(spec.seed, &["plant"]));
    let mut planted = vec![false; n];
    for &i in &order[..planted_count] {
        planted[i] = true;
    }

    let templates: Vec<JobTemplate> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| build_template(spec, &catalog, i, planted[i]))
            .collect()
    };

    let mut days = Vec::with_capacity(spec.days);
    for d in 0..spec.days {
        let date = spec.date(d);
        let mut jobs = Vec::with_capacity(n * spec.runs_per_template_per_day);
        for t in &templates {
            for run in 0..spec.runs_per_template_per_day {
                let mut rng = seed::rng(
                    spec.seed,
                    &["run", &t.template_id, &d.to_string(), &run.to_string()],
                );
                let stats = t.draw_stats(&mut rng, spec.table_universe.run_sigma);
                let job_id = format!("{}-{}-{:02}", t.template_id, date.format("%Y%m%d"), run);
                jobs.push(t.instantiate(job_id, date, stats));
            }
        }
        days.push(DayJobs { date, jobs });
    }
    Ok(Workload { templates, days })
}

/// Best relative est-cost gain of any single flip, or `None` when the
/// default plan does not compile.
pub fn best_flip_gain(catalog: &RuleCatalog, job: &Job) -> Option<f64> {
    let default = catalog.default_config();
    let base = compile(catalog, job, &default).ok()?.est_cost;
    let mut best = 0.0f64;
    for rule in catalog.rules() {
        if rule.category == RuleCategory::Required {
            continue;
        }
        let flip = Flip::inverting(catalog, rule.id).expect("non-required rule");
        let cfg = crate::optkernel::apply_flip(catalog, &default, flip).expect("inverting flip");
        if let Ok(plan) = compile(catalog, job, &cfg) {
            best = best.max(1.0 - plan.est_cost / base);
        }
    }
    Some(best)
}

fn build_template(spec: &WorkloadSpec, catalog: &RuleCatalog, index: usize, planted: bool) -> JobTemplate {
    let template_id = format!("T{index:04}");
    let motifs: &[Motif] = if planted { &Motif::PLANTED } else { &Motif::NEUTRAL };
    let mut last = None;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = seed::rng(spec.seed, &["template", &template_id, &attempt.to_string()]);
        let motif = motifs[rng.random_range(0..motifs.len())];
        let mut b = Builder::new(&mut rng, &spec.table_universe);
        let queries = b.motif(motif);
        let (schema, base_stats, errors) = b.finish();
        let mut t = JobTemplate {
            normalized_name: format!("job_{index:04}"),
            template_id: template_id.clone(),
            motif,
            planted,
            verified: false,
            schema,
            queries,
            base_stats,
            errors,
        };
        t.verified = class_holds(catalog, &t, spec, planted);
        if t.verified {
            return t;
        }
        last = Some(t);
    }
    last.expect("at least one attempt")
}

/// Check the template's class on its baseline statistics and on scaled
/// variants bracketing the per-run spread.
fn class_holds(catalog: &RuleCatalog, t: &JobTemplate, spec: &WorkloadSpec, planted: bool) -> bool {
    let spread = (2.0 * spec.table_universe.run_sigma).exp();
    let date = spec.start_date;
    let mut probes = vec![t.base_stats.clone()];
    for scale in [spread, 1.0 / spread] {
        let mut s = t.base_stats.clone();
        for (i, r) in s.table_rows.iter_mut().enumerate() {
            // Alternate directions so joins see both relative shifts.
            let f = if i % 2 == 0 { scale } else { 1.0 / scale };
            *r = (*r * f).round().max(1.0);
        }
        probes.push(s);
    }
    probes.into_iter().enumerate().all(|(i, stats)| {
        let job = t.instantiate(format!("probe-{i}"), date, stats);
        match best_flip_gain(catalog, &job) {
            None => false,
            Some(g) if planted => g >= if i == 0 { PLANTED_MARGIN } else { PLANTED_MARGIN / 2.0 },
            Some(g) => g <= 0.0,
        }
    })
}

struct Builder<'r> {
    rng: &'r mut ChaCha8Rng,
    u: &'r TableUniverse,
    schema: Schema,
    stats: InputStats,
    errors: CardinalityErrors,
    err: LogNormal<f64>,
}

impl<'r> Builder<'r> {
    fn new(rng: &'r mut ChaCha8Rng, u: &'r TableUniverse) -> Self {
        Self {
            rng,
            u,
            schema: Schema::default(),
            stats: InputStats {
                table_rows: vec![],
                selectivity: vec![],
                group_ndv: vec![],
                eager_ndv: vec![],
            },
            errors: CardinalityErrors {
                selectivity: vec![],
                group_ndv: vec![],
                eager_ndv: vec![],
            },
            err: LogNormal::new(0.0, u.error_sigma).expect("valid sigma"),
        }
    }

    fn finish(self) -> (Schema, InputStats, CardinalityErrors) {
        (self.schema, self.stats, self.errors)
    }

    fn log_uniform(&mut self, r: [f64; 2]) -> f64 {
        let (lo, hi) = (r[0].ln(), r[1].ln());
        if hi > lo {
            self.rng.random_range(lo..hi).exp()
        } else {
            r[0]
        }
    }

    fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..hi)
        } else {
            lo
        }
    }

    fn table(&mut self, name: &str, rows: [f64; 2]) -> TableId {
        let width = self.log_uniform(self.u.width).round();
        let rows = self.log_uniform(rows).round();
        self.schema.tables.push(TableDef { name: name.to_string(), width });
        self.stats.table_rows.push(rows);
        self.schema.tables.len() - 1
    }

    fn fact(&mut self) -> TableId {
        let n = format!("fact{}", self.schema.tables.len());
        self.table(&n, self.u.fact_rows)
    }

    fn dim(&mut self) -> TableId {
        let n = format!("dim{}", self.schema.tables.len());
        self.table(&n, self.u.dim_rows)
    }

    fn small(&mut self) -> TableId {
        let n = format!("small{}", self.schema.tables.len());
        self.table(&n, self.u.small_rows)
    }

    fn pred(&mut self, p: Predicate, sel: f64) -> PredId {
        let e = self.err.sample(self.rng);
        self.schema.predicates.push(p);
        self.stats.selectivity.push(sel.clamp(0.0, 1.0));
        self.errors.selectivity.push(e);
        self.schema.predicates.len() - 1
    }

    fn filter(&mut self, t: TableId, sel: f64) -> PredId {
        let constant = self.rng.random_bool(0.3);
        let mut p = Predicate::filter(t);
        p.constant_expr = constant;
        self.pred(p, sel)
    }

    fn redundant_filter(&mut self, t: TableId, sel: f64) -> PredId {
        let mut p = Predicate::filter(t);
        p.redundant = true;
        self.pred(p, sel)
    }

    /// Foreign-key equality join: each `many` row matches `fanout` rows of
    /// `one` on average.
    fn fk(&mut self, many: TableId, one: TableId, fanout: f64) -> PredId {
        let sel = fanout / self.stats.table_rows[one];
        self.pred(Predicate::equi(many, one), sel)
    }

    fn theta(&mut self, a: TableId, b: TableId, sel: f64) -> PredId {
        self.pred(Predicate::theta(a, b), sel)
    }

    fn group(&mut self, eager: Option<TableId>, decomposable: bool, ndv: f64, eager_ndv: f64) -> GroupId {
        let width = self.uniform(16.0, 48.0).round();
        self.schema.groups.push(GroupDef { eager_table: eager, decomposable, width });
        self.stats.group_ndv.push(ndv.max(1.0).round());
        self.stats.eager_ndv.push(eager_ndv.max(1.0).round());
        let (e1, e2) = (self.err.sample(self.rng), self.err.sample(self.rng));
        self.errors.group_ndv.push(e1);
        self.errors.eager_ndv.push(e2);
        self.schema.groups.len() - 1
    }

    fn rows(&self, t: TableId) -> f64 {
        self.stats.table_rows[t]
    }

    fn ordered(&mut self) -> bool {
        self.rng.random_bool(0.4)
    }

    fn motif(&mut self, m: Motif) -> Vec<Logical> {
        match m {
            Motif::ScanAggregate => {
                let mut qs = vec![self.scan_agg(false)];
                if self.rng.random_bool(0.5) {
                    qs.push(self.scan_agg(false));
                }
                qs
            }
            Motif::FactDimension => vec![self.fact_dim()],
            Motif::Star => vec![self.star()],
            Motif::UnionLimit => vec![self.union_limit()],
            Motif::ThetaOverAggregates => vec![self.theta_over_aggs()],
            Motif::EagerAggregate => vec![self.eager()],
            Motif::SmallDimension => vec![self.small_dim()],
            Motif::EarlyCrossJoin => vec![self.early_cross()],
            Motif::BushyJoin => vec![self.bushy()],
            Motif::WeakSemiJoin => vec![self.weak_semijoin()],
            Motif::WidePartialAggregate => {
                let mut qs = vec![self.wide_partial()];
                if self.rng.random_bool(0.5) {
                    qs.push(self.scan_agg(false));
                }
                qs
            }
            Motif::RedundantPredicate => vec![self.scan_agg(true)],
        }
    }

    fn scan_agg(&mut self, redundant: bool) -> Logical {
        let f = self.fact();
        let s = self.uniform(0.05, 0.5);
        let mut preds = vec![self.filter(f, s)];
        if redundant {
            let r = self.uniform(0.05, 0.2);
            preds.push(self.redundant_filter(f, r));
        }
        let keep = self.uniform(0.2, 0.6);
        let ndv = self.log_uniform([1e2, 1e5]);
        let g = self.group(None, true, ndv, ndv);
        let ordered = self.ordered();
        Logical::scan(f).filter(preds).project(keep).aggregate(g).output(ordered)
    }

    /// Fact joined to a large dimension; filters are written above the join.
    fn fact_dim(&mut self) -> Logical {
        let f = self.fact();
        let d = self.dim();
        let j = self.fk(f, d, 1.0);
        let ds = self.uniform(0.05, 0.3);
        let dp = self.filter(d, ds);
        let fs = self.uniform(0.2, 0.9);
        let fp = self.filter(f, fs);
        let roll = self.rng.random_range(0..10);
        let (eager, decomposable, eager_ndv) = match roll {
            // Eager pre-aggregation exists but cannot reduce the fact side.
            0..=3 => (Some(f), true, self.rows(f) * 2.0),
            4 => (Some(f), false, self.rows(f)),
            _ => (None, true, 1.0),
        };
        let ndv = self.log_uniform([1e2, 1e4]);
        let g = self.group(eager, decomposable, ndv, eager_ndv);
        let keep = self.uniform(0.3, 0.8);
        let ordered = self.ordered();
        Logical::scan(f)
            .join(Logical::scan(d), j)
            .filter(vec![dp, fp])
            .project(keep)
            .aggregate(g)
            .output(ordered)
    }

    fn star(&mut self) -> Logical {
        let f = self.fact();
        let d1 = self.dim();
        let d2 = self.dim();
        let j1 = self.fk(f, d1, 1.0);
        let j2 = self.fk(f, d2, 1.0);
        let s1 = self.uniform(0.05, 0.2);
        let s2 = self.uniform(0.2, 0.3);
        let p1 = self.filter(d1, s1);
        let p2 = self.filter(d2, s2);
        let ndv = self.log_uniform([1e2, 1e4]);
        let g = self.group(None, true, ndv, ndv);
        let ordered = self.ordered();
        Logical::scan(f)
            .join(Logical::scan(d1).filter(vec![p1]), j1)
            .join(Logical::scan(d2).filter(vec![p2]), j2)
            .aggregate(g)
            .output(ordered)
    }

    fn union_limit(&mut self) -> Logical {
        let branch = |b: &mut Self| {
            let t = b.fact();
            let s = b.uniform(0.01, 0.2);
            let p = b.filter(t, s);
            Logical::scan(t).filter(vec![p])
        };
        let a = branch(self);
        let bb = branch(self);
        let c = branch(self);
        let limit = self.log_uniform([1e4, 1e6]).round();
        Logical::union(vec![a, Logical::union(vec![bb, c])])
            .limit(limit)
            .output(true)
    }

    fn theta_over_aggs(&mut self) -> Logical {
        let side = |b: &mut Self| {
            let t = b.fact();
            let s = b.uniform(0.1, 0.5);
            let p = b.filter(t, s);
            let ndv = b.log_uniform([1e2, 1e3]);
            let g = b.group(None, true, ndv, ndv);
            (t, Logical::scan(t).filter(vec![p]).aggregate(g))
        };
        let (ta, a) = side(self);
        let (tb, b) = side(self);
        let ts = self.uniform(0.05, 0.3);
        let th = self.theta(ta, tb, ts);
        let ordered = self.ordered();
        a.join(b, th).output(ordered)
    }

    /// Grouping keys and measures live on the fact table with few distinct
    /// (key, join key) combinations.
    fn eager(&mut self) -> Logical {
        let f = self.fact();
        let d = self.dim();
        let j = self.fk(f, d, 1.0);
        let ndv = self.log_uniform([1e2, 1e3]);
        let eager_ndv = ndv * self.log_uniform([5.0, 50.0]);
        let g = self.group(Some(f), true, ndv, eager_ndv);
        let ordered = self.ordered();
        Logical::scan(f).join(Logical::scan(d), j).aggregate(g).output(ordered)
    }

    fn small_dim(&mut self) -> Logical {
        let f = self.fact();
        let d = self.small();
        let j = self.fk(f, d, 1.0);
        let s = self.uniform(0.02, 0.2);
        let p = self.filter(d, s);
        let ndv = self.log_uniform([1e2, 1e4]);
        let g = self.group(None, true, ndv, ndv);
        let ordered = self.ordered();
        Logical::scan(f)
            .join(Logical::scan(d).filter(vec![p]), j)
            .aggregate(g)
            .output(ordered)
    }

    fn early_cross(&mut self) -> Logical {
        let f = self.fact();
        let cal = self.table("calendar", [20.0, 200.0]);
        let d = self.dim();
        let ts = self.uniform(0.2, 0.5);
        let th = self.theta(f, cal, ts);
        let j = self.fk(f, d, 1.0);
        let s = self.uniform(0.01, 0.05);
        let p = self.filter(d, s);
        let ndv = self.log_uniform([1e2, 1e4]);
        let g = self.group(None, true, ndv, ndv);
        Logical::scan(f)
            .join(Logical::scan(cal), th)
            .join(Logical::scan(d).filter(vec![p]), j)
            .aggregate(g)
            .output(false)
    }

    /// Two filtered fact/dimension pairs joined many-to-many; a left-deep
    /// order has to carry a large intermediate.
    fn bushy(&mut self) -> Logical {
        let f1 = self.fact();
        let d1 = self.dim();
        let f2 = self.fact();
        let d2 = self.dim();
        let j1 = self.fk(f1, d1, 1.0);
        let j2 = self.fk(f2, d2, 1.0);
        let fan = self.uniform(5.0, 20.0);
        let j12 = self.fk(f1, f2, fan);
        let s1 = self.uniform(0.005, 0.02);
        let s2 = self.uniform(0.02, 0.1);
        let p1 = self.filter(d1, s1);
        let p2 = self.filter(d2, s2);
        let ndv = self.log_uniform([1e2, 1e4]);
        let g = self.group(None, true, ndv, ndv);
        Logical::scan(f1)
            .join(Logical::scan(d1).filter(vec![p1]), j1)
            .join(Logical::scan(f2), j12)
            .join(Logical::scan(d2).filter(vec![p2]), j2)
            .aggregate(g)
            .output(false)
    }

    fn weak_semijoin(&mut self) -> Logical {
        let f = self.fact();
        let d = self.dim();
        let j = self.fk(f, d, 1.0);
        let s = self.uniform(0.9, 0.99);
        let p = self.filter(d, s);
        let ndv = self.log_uniform([1e2, 1e4]);
        let g = self.group(None, true, ndv, ndv);
        let ordered = self.ordered();
        Logical::scan(f)
            .join(Logical::scan(d).filter(vec![p]), j)
            .aggregate(g)
            .output(ordered)
    }

    /// Nearly unique grouping keys over a narrow projection: partial
    /// aggregation cannot shrink its input.
    fn wide_partial(&mut self) -> Logical {
        let f = self.fact();
        let s = self.uniform(0.3, 0.9);
        let p = self.filter(f, s);
        let keep = self.uniform(0.1, 0.25);
        let ndv = self.rows(f) * s * self.uniform(0.3, 0.9);
        let g = self.group(None, true, ndv, ndv);
        Logical::scan(f).filter(vec![p]).project(keep).aggregate(g).output(false)
    }
}
