//! Tab-separated decision log. Reals are written in shortest round-trip
//! form so propensities such as 1/11 survive a reload bit for bit.

use std::io::{BufRead, Write};

use thiserror::Error;

use super::DecisionRecord;
use crate::featuregen::{ActionVector, ContextVector, DENSE_DIM};
use crate::span::JobSpan;
use crate::tsv::{self, parse_int, parse_real, ParseError};

pub const LOG_COLUMNS: [&str; 11] = [
    "job_id",
    "template_id",
    "span",
    "dense",
    "sparse",
    "actions",
    "chosen",
    "propensity",
    "reward",
    "cost_default",
    "cost_new",
];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("decision log {0}")]
    Parse(#[from] ParseError),
    #[error("reading decision log: {0}")]
    Io(#[from] std::io::Error),
}

fn action_token(a: &ActionVector) -> String {
    match (a.rule, a.category, a.direction) {
        (Some(r), Some(c), Some(d)) => format!("{r}:{c}:{d}"),
        _ => "noop".into(),
    }
}

fn parse_action(s: &str, no: usize) -> Result<ActionVector, ParseError> {
    if s == "noop" {
        return Ok(ActionVector::noop());
    }
    let bad = || ParseError::new(no, format!("actions: bad action {s:?}"));
    let mut parts = s.split(':');
    let (Some(r), Some(c), Some(d), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
        return Err(bad());
    };
    Ok(ActionVector {
        noop: false,
        rule: Some(r.parse().map_err(|_| bad())?),
        category: Some(c.parse().map_err(|_| bad())?),
        direction: Some(d.parse().map_err(|_| bad())?),
    })
}

fn list<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    let s: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    if s.is_empty() {
        "-".into()
    } else {
        s.join(",")
    }
}

fn split_list(s: &str) -> Vec<&str> {
    if s == "-" {
        Vec::new()
    } else {
        s.split(',').collect()
    }
}

fn to_line(r: &DecisionRecord) -> String {
    [
        r.job_id.clone(),
        r.template_id.clone(),
        list(r.span.rules.iter()),
        list(r.context.dense.iter().map(|x| format!("{x:e}"))),
        list(r.context.sparse.iter()),
        list(r.actions.iter().map(action_token)),
        r.chosen.to_string(),
        format!("{:e}", r.propensity),
        format!("{:e}", r.reward),
        format!("{:e}", r.cost_default),
        r.cost_new.map_or("fail".into(), |c| format!("{c:e}")),
    ]
    .join("\t")
}

fn parse_line(line: &str, no: usize) -> Result<DecisionRecord, ParseError> {
    let f = tsv::fields(line, LOG_COLUMNS.len(), no)?;
    let span = JobSpan::from_rules(
        split_list(f[2])
            .into_iter()
            .map(|s| parse_int(s, "span", no))
            .collect::<Result<Vec<usize>, _>>()?,
    );
    let dense = split_list(f[3])
        .into_iter()
        .map(|s| parse_real(s, "dense", no))
        .collect::<Result<Vec<f64>, _>>()?;
    if dense.len() != DENSE_DIM {
        return Err(ParseError::new(no, format!("dense: expected {DENSE_DIM} values, found {}", dense.len())));
    }
    let sparse = split_list(f[4])
        .into_iter()
        .map(|s| parse_int(s, "sparse", no))
        .collect::<Result<Vec<u32>, _>>()?;
    let actions = split_list(f[5])
        .into_iter()
        .map(|s| parse_action(s, no))
        .collect::<Result<Vec<_>, _>>()?;
    if actions.len() != span.len() + 1 {
        return Err(ParseError::new(no, "actions: expected the no-op plus one flip per span rule"));
    }
    let chosen: usize = parse_int(f[6], "chosen", no)?;
    if chosen >= actions.len() {
        return Err(ParseError::new(no, format!("chosen: index {chosen} out of range")));
    }
    let cost_new = if f[10] == "fail" {
        None
    } else {
        Some(parse_real(f[10], "cost_new", no)?)
    };
    Ok(DecisionRecord {
        job_id: f[0].to_string(),
        template_id: f[1].to_string(),
        context: ContextVector { dense, sparse },
        span,
        actions,
        chosen,
        propensity: parse_real(f[7], "propensity", no)?,
        reward: parse_real(f[8], "reward", no)?,
        cost_default: parse_real(f[9], "cost_default", no)?,
        cost_new,
    })
}

pub fn write_log(out: &mut impl Write, records: &[DecisionRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", LOG_COLUMNS.join("\t"))?;
    for r in records {
        writeln!(out, "{}", to_line(r))?;
    }
    Ok(())
}

pub fn read_log(input: impl BufRead) -> Result<Vec<DecisionRecord>, LogError> {
    let mut lines = input.lines();
    match lines.next().transpose()? {
        Some(l) if l.trim_end_matches('\r') == LOG_COLUMNS.join("\t") => {}
        _ => return Err(ParseError::new(1, "header does not match the decision log columns").into()),
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if !line.is_empty() {
            out.push(parse_line(line, i + 2)?);
        }
    }
    Ok(out)
}

pub fn parse_log(text: &str) -> Result<Vec<DecisionRecord>, LogError> {
    read_log(text.as_bytes())
}
