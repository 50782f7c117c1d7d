//! The denormalized daily workload view: one tab-separated record per
//! (job, query tree).

use std::io::{BufRead, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flightsim::executor::{true_work, NoiseModel};
use crate::optkernel::{compile, CompileError, Job, RuleCatalog, RuleConfig};
use crate::seed;
use crate::tsv::{self, fmt_real, parse_int, parse_nonneg, quantize, ParseError};

pub const VIEW_COLUMNS: [&str; 16] = [
    "job_id",
    "template_id",
    "normalized_job_name",
    "query_index",
    "rule_signature",
    "estimated_cost",
    "estimated_cardinality",
    "avg_row_length",
    "row_count",
    "bytes_read",
    "latency_s",
    "pn_hours",
    "total_vertices",
    "max_memory_mb",
    "avg_memory_mb",
    "date",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    pub job_id: String,
    pub template_id: String,
    pub normalized_job_name: String,
    pub query_index: usize,
    pub rule_signature: String,
    pub estimated_cost: f64,
    pub estimated_cardinality: f64,
    pub avg_row_length: f64,
    pub row_count: f64,
    pub bytes_read: f64,
    pub latency_s: f64,
    pub pn_hours: f64,
    pub total_vertices: u64,
    pub max_memory_mb: f64,
    pub avg_memory_mb: f64,
    pub date: NaiveDate,
}

impl ViewRecord {
    /// Round every real to the precision the file stores.
    pub fn quantized(mut self) -> Self {
        for x in [
            &mut self.estimated_cost,
            &mut self.estimated_cardinality,
            &mut self.avg_row_length,
            &mut self.row_count,
            &mut self.bytes_read,
            &mut self.latency_s,
            &mut self.pn_hours,
            &mut self.max_memory_mb,
            &mut self.avg_memory_mb,
        ] {
            *x = quantize(*x);
        }
        self
    }

    fn to_line(&self) -> String {
        [
            self.job_id.clone(),
            self.template_id.clone(),
            self.normalized_job_name.clone(),
            self.query_index.to_string(),
            self.rule_signature.clone(),
            fmt_real(self.estimated_cost),
            fmt_real(self.estimated_cardinality),
            fmt_real(self.avg_row_length),
            fmt_real(self.row_count),
            fmt_real(self.bytes_read),
            fmt_real(self.latency_s),
            fmt_real(self.pn_hours),
            self.total_vertices.to_string(),
            fmt_real(self.max_memory_mb),
            fmt_real(self.avg_memory_mb),
            self.date.format("%Y-%m-%d").to_string(),
        ]
        .join("\t")
    }

    fn parse(line: &str, no: usize) -> Result<Self, ParseError> {
        let f = tsv::fields(line, VIEW_COLUMNS.len(), no)?;
        let text = |i: usize| -> Result<String, ParseError> {
            if f[i].is_empty() {
                Err(ParseError::new(no, format!("{} is empty", VIEW_COLUMNS[i])))
            } else {
                Ok(f[i].to_string())
            }
        };
        let real = |i: usize| parse_nonneg(f[i], VIEW_COLUMNS[i], no);
        let date = NaiveDate::parse_from_str(f[15], "%Y-%m-%d")
            .map_err(|_| ParseError::new(no, format!("date: bad ISO day {:?}", f[15])))?;
        Ok(Self {
            job_id: text(0)?,
            template_id: text(1)?,
            normalized_job_name: text(2)?,
            query_index: parse_int(f[3], VIEW_COLUMNS[3], no)?,
            rule_signature: text(4)?,
            estimated_cost: real(5)?,
            estimated_cardinality: real(6)?,
            avg_row_length: real(7)?,
            row_count: real(8)?,
            bytes_read: real(9)?,
            latency_s: real(10)?,
            pn_hours: real(11)?,
            total_vertices: parse_int(f[12], VIEW_COLUMNS[12], no)?,
            max_memory_mb: real(13)?,
            avg_memory_mb: real(14)?,
            date,
        })
    }
}

pub fn header() -> String {
    VIEW_COLUMNS.join("\t")
}

pub fn write_view(out: &mut impl Write, records: &[ViewRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", header())?;
    for r in records {
        writeln!(out, "{}", r.to_line())?;
    }
    Ok(())
}

pub fn view_to_string(records: &[ViewRecord]) -> String {
    let mut buf = Vec::new();
    write_view(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("view is UTF-8")
}

#[derive(Debug, thiserror::Error)]
pub enum ViewError {
    #[error("view {0}")]
    Parse(#[from] ParseError),
    #[error("reading view: {0}")]
    Io(#[from] std::io::Error),
}

pub fn read_view(input: impl BufRead) -> Result<Vec<ViewRecord>, ViewError> {
    let mut lines = input.lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Err(ParseError::new(1, "missing header").into()),
    };
    if first.trim_end_matches('\r') != header() {
        return Err(ParseError::new(1, "header does not match the view columns").into());
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        out.push(ViewRecord::parse(line, i + 2)?);
    }
    Ok(out)
}

pub fn parse_view(text: &str) -> Result<Vec<ViewRecord>, ViewError> {
    read_view(text.as_bytes())
}

/// Records of one job compiled under `config` and run once on the cluster.
pub fn observe_job(
    catalog: &RuleCatalog,
    job: &Job,
    config: &RuleConfig,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<ViewRecord>, CompileError> {
    let plan = compile(catalog, job, config)?;
    let work = true_work(job, &plan);
    let run = work.sample(noise, seed::derive(seed, &["view", &job.job_id]));
    let signature = plan.signature.to_hex();
    Ok(plan
        .per_query
        .iter()
        .enumerate()
        .map(|(i, q)| {
            ViewRecord {
                job_id: job.job_id.clone(),
                template_id: job.template_id.clone(),
                normalized_job_name: job.normalized_name.clone(),
                query_index: i,
                rule_signature: signature.clone(),
                estimated_cost: plan.est_cost,
                estimated_cardinality: q.est_cardinality,
                avg_row_length: q.avg_row_length,
                row_count: q.row_count,
                bytes_read: work.query_bytes_read[i],
                latency_s: run.latency_s,
                pn_hours: run.pn_hours,
                total_vertices: run.total_vertices,
                max_memory_mb: work.max_memory_mb,
                avg_memory_mb: work.avg_memory_mb,
                date: job.date,
            }
            .quantized()
        })
        .collect())
}

/// View records for a day of jobs run with the default configuration.
/// Jobs whose default plan fails to compile are left out.
pub fn observe_day(catalog: &RuleCatalog, jobs: &[Job], noise: &NoiseModel, seed: u64) -> Vec<ViewRecord> {
    let config = catalog.default_config();
    jobs.par_iter()
        .map(|j| observe_job(catalog, j, &config, noise, seed).unwrap_or_default())
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(job: &str, q: usize) -> ViewRecord {
        ViewRecord {
            job_id: job.into(),
            template_id: "T0001".into(),
            normalized_job_name: "job_0001".into(),
            query_index: q,
            rule_signature: "f00".into(),
            estimated_cost: 1234.5678901234,
            estimated_cardinality: 3.0,
            avg_row_length: 17.25,
            row_count: 1e9,
            bytes_read: 0.1,
            latency_s: 77.7,
            pn_hours: 2.0 / 3.0,
            total_vertices: 40,
            max_memory_mb: 300.0,
            avg_memory_mb: 200.0,
            date: NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(),
        }
        .quantized()
    }

    #[test]
    fn empty_view_is_header_only() {
        let text = view_to_string(&[]);
        assert_eq!(text, format!("{}\n", header()));
        assert!(parse_view(&text).unwrap().is_empty());
    }

    #[test]
    fn round_trip_and_line_numbers() {
        let recs: Vec<_> = ["a", "b"]
            .iter()
            .flat_map(|j| (0..2).map(move |q| record(j, q)))
            .collect();
        let text = view_to_string(&recs);
        assert_eq!(parse_view(&text).unwrap(), recs);

        let broken = text.replacen("\t40\t", "\tforty\t", 2);
        let lines: Vec<&str> = broken.lines().collect();
        let err = parse_view(&lines[..3].join("\n")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
