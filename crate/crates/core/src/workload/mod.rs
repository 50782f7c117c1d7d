//! Synthetic recurring workloads and the daily view files built from them.

pub mod generate;
pub mod view;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

pub use generate::{generate_workload, DayJobs, JobTemplate, Motif, TableUniverse, Workload, WorkloadSpec};
pub use view::{observe_day, parse_view, read_view, write_view, ViewError, ViewRecord};

use crate::optkernel::Job;

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
    #[error("workload spec: {0}")]
    SpecFormat(#[from] toml::de::Error),
    #[error("jobs file {path}: {source}")]
    Jobs {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    View(#[from] ViewError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse_spec(text: &str) -> Result<WorkloadSpec, WorkloadError> {
    let spec: WorkloadSpec = toml::from_str(text)?;
    spec.validate()?;
    Ok(spec)
}

pub fn view_file_name(date: NaiveDate) -> String {
    format!("view-{}.tsv", date.format("%Y-%m-%d"))
}

pub fn jobs_file_name(date: NaiveDate) -> String {
    format!("jobs-{}.json", date.format("%Y-%m-%d"))
}

/// The jobs file that accompanies a view file in the same directory.
pub fn jobs_path_for_view(view: &Path) -> Option<PathBuf> {
    let name = view.file_name()?.to_str()?;
    let day = name.strip_prefix("view-")?.strip_suffix(".tsv")?;
    Some(view.with_file_name(format!("jobs-{day}.json")))
}

pub fn write_jobs(path: &Path, jobs: &[Job]) -> Result<(), WorkloadError> {
    let text = serde_json::to_string(jobs).map_err(|source| WorkloadError::Jobs {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_jobs(path: &Path) -> Result<Vec<Job>, WorkloadError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| WorkloadError::Jobs {
        path: path.to_path_buf(),
        source,
    })
}
