//! Regression guard: an affine model of the PN-hours delta in terms of the
//! data-read and data-written deltas.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flightsim::RunMetrics;
use crate::tsv::{parse_real, ParseError};

pub const DEFAULT_THRESHOLD: f64 = -0.1;

const HEADER: &str = "# rulesteer-vmodel v1";

/// `new / old - 1`; 0 when both are 0.
pub fn delta(old: f64, new: f64) -> f64 {
    if old > 0.0 {
        new / old - 1.0
    } else if new == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlightObservation {
    pub date: NaiveDate,
    pub template_id: String,
    pub job_id: String,
    pub d_read: f64,
    pub d_write: f64,
    pub d_pn: f64,
}

impl FlightObservation {
    pub fn from_runs(date: NaiveDate, template_id: &str, job_id: &str, base: &RunMetrics, treat: &RunMetrics) -> Self {
        Self {
            date,
            template_id: template_id.into(),
            job_id: job_id.into(),
            d_read: delta(base.data_read, treat.data_read),
            d_write: delta(base.data_written, treat.data_written),
            d_pn: delta(base.pn_hours, treat.pn_hours),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationModel {
    pub w0: f64,
    pub w_read: f64,
    pub w_write: f64,
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub n: usize,
    pub r2: f64,
    /// Slope of predicted ΔPN against Δread on the held-out split.
    pub read_trend: f64,
}

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error("need observations on at least 2 distinct dates, got {0}")]
    InsufficientDates(usize),
    #[error("non-finite delta in the flight history")]
    NonFinite,
    #[error("validation model {0}")]
    Parse(#[from] ParseError),
    #[error("reading validation model: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gate {
    Accept,
    Reject,
}

pub fn predict_pn_delta(m: &ValidationModel, d_read: f64, d_write: f64) -> f64 {
    m.w0 + m.w_read * d_read + m.w_write * d_write
}

/// Accept iff the predicted change is at or below the threshold.
pub fn gate(predicted: f64, threshold: f64) -> Gate {
    if predicted <= threshold {
        Gate::Accept
    } else {
        Gate::Reject
    }
}

/// Least squares on the earlier half of the dates; the later half is held
/// out. With an odd number of dates the training split gets the extra one.
pub fn train_validation_model(history: &[FlightObservation]) -> Result<(ValidationModel, HeldOut), ValidationError> {
    if history.iter().any(|o| !(o.d_read.is_finite() && o.d_write.is_finite() && o.d_pn.is_finite())) {
        return Err(ValidationError::NonFinite);
    }
    let dates: Vec<NaiveDate> = history.iter().map(|o| o.date).collect::<BTreeSet<_>>().into_iter().collect();
    if dates.len() < 2 {
        return Err(ValidationError::InsufficientDates(dates.len()));
    }
    let n_train = dates.len().div_ceil(2);
    let cut = dates[n_train - 1];
    let (train, test): (Vec<&FlightObservation>, Vec<&FlightObservation>) = history.iter().partition(|o| o.date <= cut);

    let x = DMatrix::from_fn(train.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => train[i].d_read,
        _ => train[i].d_write,
    });
    let y = DVector::from_iterator(train.len(), train.iter().map(|o| o.d_pn));
    let w = x.svd(true, true).solve(&y, 1e-12).expect("SVD with U and V computed");
    let model = ValidationModel {
        w0: w[0],
        w_read: w[1],
        w_write: w[2],
        train_start: dates[0],
        train_end: cut,
    };
    Ok((model.clone(), held_out(&model, &test)))
}

fn held_out(m: &ValidationModel, test: &[&FlightObservation]) -> HeldOut {
    let n = test.len();
    if n == 0 {
        return HeldOut { n, r2: 0.0, read_trend: 0.0 };
    }
    let nf = n as f64;
    let pred: Vec<f64> = test.iter().map(|o| predict_pn_delta(m, o.d_read, o.d_write)).collect();
    let mean = test.iter().map(|o| o.d_pn).sum::<f64>() / nf;
    let ss_tot: f64 = test.iter().map(|o| (o.d_pn - mean).powi(2)).sum();
    let ss_res: f64 = test.iter().zip(&pred).map(|(o, p)| (o.d_pn - p).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    let rm = test.iter().map(|o| o.d_read).sum::<f64>() / nf;
    let pm = pred.iter().sum::<f64>() / nf;
    let sxx: f64 = test.iter().map(|o| (o.d_read - rm).powi(2)).sum();
    let sxy: f64 = test.iter().zip(&pred).map(|(o, p)| (o.d_read - rm) * (p - pm)).sum();
    HeldOut {
        n,
        r2,
        read_trend: if sxx > 0.0 { sxy / sxx } else { 0.0 },
    }
}

impl ValidationModel {
    pub fn save(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "{HEADER}")?;
        writeln!(out, "# train {}..{}", self.train_start, self.train_end)?;
        writeln!(out, "w0\t{:e}", self.w0)?;
        writeln!(out, "w_read\t{:e}", self.w_read)?;
        writeln!(out, "w_write\t{:e}", self.w_write)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("model is UTF-8")
    }

    pub fn load(input: impl BufRead) -> Result<Self, ValidationError> {
        let mut lines = input.lines();
        match lines.next().transpose()? {
            Some(l) if l.trim_end() == HEADER => {}
            _ => return Err(ParseError::new(1, format!("expected header {HEADER:?}")).into()),
        }
        let (mut w0, mut wr, mut ww) = (None, None, None);
        let mut window = None;
        for (i, line) in lines.enumerate() {
            let no = i + 2;
            let line = line?;
            let line = line.trim_end();
            if let Some(rest) = line.strip_prefix("# train ") {
                let bad = || ParseError::new(no, format!("bad training window {rest:?}"));
                let (a, b) = rest.split_once("..").ok_or_else(bad)?;
                window = Some((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?));
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| ParseError::new(no, "expected name<TAB>value"))?;
            let slot = match k {
                "w0" => &mut w0,
                "w_read" => &mut wr,
                "w_write" => &mut ww,
                _ => return Err(ParseError::new(no, format!("unknown coefficient {k:?}")).into()),
            };
            *slot = Some(parse_real(v, k, no)?);
        }
        let missing = |n: &str| ParseError::new(0, format!("missing {n}"));
        let (train_start, train_end) = window.ok_or_else(|| missing("training window"))?;
        Ok(Self {
            w0: w0.ok_or_else(|| missing("w0"))?,
            w_read: wr.ok_or_else(|| missing("w_read"))?,
            w_write: ww.ok_or_else(|| missing("w_write"))?,
            train_start,
            train_end,
        })
    }
}

pub const OBSERVATION_COLUMNS: [&str; 6] = ["date", "template_id", "job_id", "d_read", "d_write", "d_pn"];

/// Flight history as tab-separated records.
pub fn write_observations(obs: &[FlightObservation]) -> String {
    let mut s = OBSERVATION_COLUMNS.join("\t");
    s.push('\n');
    for o in obs {
        s.push_str(&format!(
            "{}\t{}\t{}\t{:e}\t{:e}\t{:e}\n",
            o.date, o.template_id, o.job_id, o.d_read, o.d_write, o.d_pn
        ));
    }
    s
}

pub fn parse_observations(text: &str) -> Result<Vec<FlightObservation>, ParseError> {
    let mut lines = text.lines();
    if lines.next().map(|l| l.trim_end_matches('\r')) != Some(OBSERVATION_COLUMNS.join("\t").as_str()) {
        return Err(ParseError::new(1, "header does not match the observation columns"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let no = i + 2;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = crate::tsv::fields(line, OBSERVATION_COLUMNS.len(), no)?;
        out.push(FlightObservation {
            date: f[0]
                .parse()
                .map_err(|_| ParseError::new(no, format!("date: bad ISO day {:?}", f[0])))?,
            template_id: f[1].to_string(),
            job_id: f[2].to_string(),
            d_read: parse_real(f[3], "d_read", no)?,
            d_write: parse_real(f[4], "d_write", no)?,
            d_pn: parse_real(f[5], "d_pn", no)?,
        });
    }
    Ok(out)
}
