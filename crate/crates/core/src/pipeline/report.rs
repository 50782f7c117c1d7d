//! Daily report: stage counts, cost buckets and metric deltas over hinted
//! jobs.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::flightsim::{CostCounts, RunMetrics};
use crate::tsv::{parse_int, parse_real, ParseError};
use crate::validation::delta;

const HEADER: &str = "# rulesteer-report v1";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub jobs: usize,
    pub nonempty_spans: usize,
    /// Exploit choices other than the no-op, recompiled for pruning.
    pub recompiled: usize,
    pub compile_failed: usize,
    pub pruned: usize,
    pub survivors: usize,
    pub survivor_templates: usize,
    pub selected: usize,
    pub over_budget: usize,
    pub dropped: usize,
    pub cancelled: usize,
    pub success: usize,
    pub failure: usize,
    pub timeout: usize,
    pub filtered: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub hinted_templates: usize,
    pub hinted_jobs: usize,
}

impl StageCounts {
    const NAMES: [&'static str; 19] = [
        "jobs",
        "nonempty_spans",
        "recompiled",
        "compile_failed",
        "pruned",
        "survivors",
        "survivor_templates",
        "selected",
        "over_budget",
        "dropped",
        "cancelled",
        "success",
        "failure",
        "timeout",
        "filtered",
        "accepted",
        "rejected",
        "hinted_templates",
        "hinted_jobs",
    ];

    fn values(&self) -> [usize; 19] {
        [
            self.jobs,
            self.nonempty_spans,
            self.recompiled,
            self.compile_failed,
            self.pruned,
            self.survivors,
            self.survivor_templates,
            self.selected,
            self.over_budget,
            self.dropped,
            self.cancelled,
            self.success,
            self.failure,
            self.timeout,
            self.filtered,
            self.accepted,
            self.rejected,
            self.hinted_templates,
            self.hinted_jobs,
        ]
    }

    fn slot(&mut self, name: &str) -> Option<&mut usize> {
        Some(match name {
            "jobs" => &mut self.jobs,
            "nonempty_spans" => &mut self.nonempty_spans,
            "recompiled" => &mut self.recompiled,
            "compile_failed" => &mut self.compile_failed,
            "pruned" => &mut self.pruned,
            "survivors" => &mut self.survivors,
            "survivor_templates" => &mut self.survivor_templates,
            "selected" => &mut self.selected,
            "over_budget" => &mut self.over_budget,
            "dropped" => &mut self.dropped,
            "cancelled" => &mut self.cancelled,
            "success" => &mut self.success,
            "failure" => &mut self.failure,
            "timeout" => &mut self.timeout,
            "filtered" => &mut self.filtered,
            "accepted" => &mut self.accepted,
            "rejected" => &mut self.rejected,
            "hinted_templates" => &mut self.hinted_templates,
            "hinted_jobs" => &mut self.hinted_jobs,
            _ => return None,
        })
    }

    /// Each stage's input should equal what the previous stage passed on.
    pub fn check(&self) -> Result<(), String> {
        let c = self;
        let rules = [
            (c.nonempty_spans <= c.jobs, "nonempty_spans <= jobs"),
            (c.recompiled <= c.nonempty_spans, "recompiled <= nonempty_spans"),
            (c.recompiled == c.pruned + c.survivors, "recompiled = pruned + survivors"),
            (c.compile_failed <= c.pruned, "compile_failed <= pruned"),
            (c.survivor_templates <= c.survivors, "survivor_templates <= survivors"),
            (c.survivor_templates == c.selected + c.over_budget, "survivor_templates = selected + over_budget"),
            (
                c.selected == c.dropped + c.cancelled + c.success + c.failure + c.timeout + c.filtered,
                "selected = dropped + cancelled + outcomes",
            ),
            (c.success == c.accepted + c.rejected, "success = accepted + rejected"),
            (c.accepted == c.hinted_templates, "accepted = hinted_templates"),
            (c.hinted_jobs >= c.hinted_templates, "hinted_jobs >= hinted_templates"),
            (c.hinted_jobs <= c.jobs, "hinted_jobs <= jobs"),
        ];
        match rules.iter().find(|(ok, _)| !ok) {
            Some((_, what)) => Err(format!("stage counts break {what}")),
            None => Ok(()),
        }
    }
}

/// Relative change of the summed metric, `(Σ treatment - Σ baseline) / Σ baseline`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub pn_hours: f64,
    pub latency: f64,
    pub vertices: f64,
}

/// Per-job deltas, ascending.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub pn_hours: Vec<f64>,
    pub latency: Vec<f64>,
    pub vertices: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub jobs: usize,
    pub aggregate: Aggregate,
    pub deltas: Deltas,
    pub latency_regressions: usize,
    pub pn_regressions: usize,
}

impl MetricReport {
    pub fn latency_regression_rate(&self) -> f64 {
        if self.jobs == 0 {
            0.0
        } else {
            self.latency_regressions as f64 / self.jobs as f64
        }
    }
}

pub fn report_metrics(pairs: &[(RunMetrics, RunMetrics)]) -> MetricReport {
    let sum = |f: fn(&RunMetrics) -> f64, pick: fn(&(RunMetrics, RunMetrics)) -> &RunMetrics| {
        pairs.iter().map(|p| f(pick(p))).sum::<f64>()
    };
    let agg = |f: fn(&RunMetrics) -> f64| {
        let b = sum(f, |p| &p.0);
        let t = sum(f, |p| &p.1);
        if b > 0.0 {
            (t - b) / b
        } else {
            0.0
        }
    };
    let sorted = |f: fn(&RunMetrics) -> f64| {
        let mut v: Vec<f64> = pairs.iter().map(|(b, t)| delta(f(b), f(t))).collect();
        v.sort_by(f64::total_cmp);
        v
    };
    let pn = |m: &RunMetrics| m.pn_hours;
    let lat = |m: &RunMetrics| m.latency_s;
    let vx = |m: &RunMetrics| m.total_vertices as f64;
    MetricReport {
        jobs: pairs.len(),
        aggregate: Aggregate {
            pn_hours: agg(pn),
            latency: agg(lat),
            vertices: agg(vx),
        },
        deltas: Deltas {
            pn_hours: sorted(pn),
            latency: sorted(lat),
            vertices: sorted(vx),
        },
        latency_regressions: pairs.iter().filter(|(b, t)| t.latency_s > b.latency_s).count(),
        pn_regressions: pairs.iter().filter(|(b, t)| t.pn_hours > b.pn_hours).count(),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DayReport {
    pub date: Option<NaiveDate>,
    pub counts: StageCounts,
    /// Buckets of the uniformly logged recompilations.
    pub uniform: CostCounts,
    /// Buckets of the policy's recompilations; empty in log mode.
    pub exploit: CostCounts,
    pub hinted: MetricReport,
}

fn real(x: f64) -> String {
    format!("{x:e}")
}

impl DayReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\n");
        if let Some(d) = self.date {
            s.push_str(&format!("date\t{d}\n"));
        }
        for (n, v) in StageCounts::NAMES.iter().zip(self.counts.values()) {
            s.push_str(&format!("count\t{n}\t{v}\n"));
        }
        for (tag, c) in [("uniform", &self.uniform), ("exploit", &self.exploit)] {
            for (n, v) in [("lower", c.lower), ("equal", c.equal), ("higher", c.higher), ("failed", c.failed)] {
                s.push_str(&format!("{tag}\t{n}\t{v}\n"));
            }
        }
        let h = &self.hinted;
        s.push_str(&format!("hinted\tjobs\t{}\n", h.jobs));
        s.push_str(&format!("hinted\tlatency_regressions\t{}\n", h.latency_regressions));
        s.push_str(&format!("hinted\tpn_regressions\t{}\n", h.pn_regressions));
        for (n, v) in [
            ("pn_hours", h.aggregate.pn_hours),
            ("latency", h.aggregate.latency),
            ("vertices", h.aggregate.vertices),
        ] {
            s.push_str(&format!("aggregate\t{n}\t{}\n", real(v)));
        }
        for (n, vs) in [
            ("pn_hours", &h.deltas.pn_hours),
            ("latency", &h.deltas.latency),
            ("vertices", &h.deltas.vertices),
        ] {
            for v in vs {
                s.push_str(&format!("delta\t{n}\t{}\n", real(*v)));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines = text.lines();
        if lines.next().map(|l| l.trim_end_matches('\r')) != Some(HEADER) {
            return Err(ParseError::new(1, format!("expected header {HEADER:?}")));
        }
        let mut r = DayReport::default();
        for (i, line) in lines.enumerate() {
            let no = i + 2;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            let unknown = || ParseError::new(no, format!("unknown entry {line:?}"));
            match f.as_slice() {
                ["date", d] => {
                    r.date = Some(d.parse().map_err(|_| ParseError::new(no, format!("date: bad ISO day {d:?}")))?);
                }
                ["count", n, v] => *r.counts.slot(n).ok_or_else(unknown)? = parse_int(v, n, no)?,
                [tag @ ("uniform" | "exploit"), n, v] => {
                    let c = if *tag == "uniform" { &mut r.uniform } else { &mut r.exploit };
                    let slot = match *n {
                        "lower" => &mut c.lower,
                        "equal" => &mut c.equal,
                        "higher" => &mut c.higher,
                        "failed" => &mut c.failed,
                        _ => return Err(unknown()),
                    };
                    *slot = parse_int(v, n, no)?;
                }
                ["hinted", n, v] => {
                    let slot = match *n {
                        "jobs" => &mut r.hinted.jobs,
                        "latency_regressions" => &mut r.hinted.latency_regressions,
                        "pn_regressions" => &mut r.hinted.pn_regressions,
                        _ => return Err(unknown()),
                    };
                    *slot = parse_int(v, n, no)?;
                }
                ["aggregate", n, v] => {
                    let a = &mut r.hinted.aggregate;
                    let slot = match *n {
                        "pn_hours" => &mut a.pn_hours,
                        "latency" => &mut a.latency,
                        "vertices" => &mut a.vertices,
                        _ => return Err(unknown()),
                    };
                    *slot = parse_real(v, n, no)?;
                }
                ["delta", n, v] => {
                    let d = &mut r.hinted.deltas;
                    let list = match *n {
                        "pn_hours" => &mut d.pn_hours,
                        "latency" => &mut d.latency,
                        "vertices" => &mut d.vertices,
                        _ => return Err(unknown()),
                    };
                    list.push(parse_real(v, n, no)?);
                }
                _ => return Err(unknown()),
            }
        }
        Ok(r)
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        if let Some(d) = self.date {
            s.push_str(&format!("day {d}\n"));
        }
        let c = &self.counts;
        s.push_str(&format!(
            "jobs {}  non-empty spans {}  recompiled {}  survivors {} ({} templates)\n",
            c.jobs, c.nonempty_spans, c.recompiled, c.survivors, c.survivor_templates
        ));
        s.push_str(&format!(
            "flights: selected {}  success {}  failure {}  timeout {}  filtered {}  cancelled {}  dropped {}\n",
            c.selected, c.success, c.failure, c.timeout, c.filtered, c.cancelled, c.dropped
        ));
        s.push_str(&format!(
            "validation: accepted {}  rejected {}  hinted templates {}  hinted jobs {}\n",
            c.accepted, c.rejected, c.hinted_templates, c.hinted_jobs
        ));
        s.push_str("recompilation   lower   equal  higher  failed\n");
        for (tag, k) in [("uniform", &self.uniform), ("policy", &self.exploit)] {
            s.push_str(&format!(
                "{tag:<14} {:>6.1}% {:>6.1}% {:>6.1}% {:>6.1}%\n",
                100.0 * k.lower_frac(),
                100.0 * k.equal_frac(),
                100.0 * k.higher_frac(),
                100.0 * k.failed_frac()
            ));
        }
        let a = &self.hinted.aggregate;
        s.push_str(&format!(
            "hinted jobs {}: pn_hours {:+.1}%  latency {:+.1}%  vertices {:+.1}%\n",
            self.hinted.jobs,
            100.0 * a.pn_hours,
            100.0 * a.latency,
            100.0 * a.vertices
        ));
        let d = &self.hinted.deltas;
        if let (Some(best), Some(worst)) = (d.pn_hours.first(), d.pn_hours.last()) {
            s.push_str(&format!("pn_hours delta range {:+.1}% .. {:+.1}%\n", 100.0 * best, 100.0 * worst));
        }
        s
    }
}
