use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{RunSummary, DECOMPOSITION_FILE, DIAGNOSTICS_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use super::study::{StudySummary, STUDY_FILE};
use crate::decompose::decomposition_header;
use crate::error::{LabError, Result};
use crate::evolve::DiagnosticsRecord;
use crate::modulate::Trajectory;

/// Columns of a numeric CSV file keyed by header name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub columns: BTreeMap<String, Vec<f64>>,
    pub rows: usize,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        let mut columns: BTreeMap<String, Vec<f64>> = header.iter().map(|h| (h.clone(), Vec::new())).collect();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            for (name, field) in header.iter().zip(rec.iter()) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| LabError::Format(format!("{}: bad number {field:?} in column {name}", path.display())))?;
                columns.get_mut(name).expect("column exists").push(v);
            }
            rows += 1;
        }
        Ok(Table { header, columns, rows })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns.get(name).map(Vec::as_slice).ok_or_else(|| LabError::Format(format!("missing column {name}")))
    }
}

/// Re-parsed view of a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub diagnostics_rows: usize,
    pub decomposition_rows: usize,
    pub trajectory_rows: usize,
    /// Tracking error recomputed from the CSV files.
    pub recomputed_tracking_error: f64,
    /// Headers match the documented schemas and the recomputed tracking
    /// error equals the summary value.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Run(Box<RunReport>),
    Study(StudySummary),
}

fn position_columns(dim: usize) -> Vec<String> {
    if dim == 1 {
        vec!["a".into()]
    } else {
        (1..=dim).map(|j| format!("a_{j}")).collect()
    }
}

pub fn report_run(dir: &Path) -> Result<RunReport> {
    let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(dir.join(SUMMARY_FILE))?)?;
    let diag = Table::read(&dir.join(DIAGNOSTICS_FILE))?;
    let dec = Table::read(&dir.join(DECOMPOSITION_FILE))?;
    let traj = Table::read(&dir.join(TRAJECTORY_FILE))?;
    let dim = (dec.header.len() - 8) / 4;
    let mut consistent = dec.header == decomposition_header(dim)
        && traj.header == Trajectory::header(dim)
        && diag.header == DiagnosticsRecord::header(dim);
    let mut err = 0.0f64;
    for name in position_columns(dim) {
        let (p, e) = (dec.column(&name)?, traj.column(&name)?);
        for (p, e) in p.iter().zip(e) {
            err = err.max((p - e).abs());
        }
    }
    consistent &= err == summary.max_tracking_error;
    Ok(RunReport {
        dir: dir.to_path_buf(),
        summary,
        diagnostics_rows: diag.rows,
        decomposition_rows: dec.rows,
        trajectory_rows: traj.rows,
        recomputed_tracking_error: err,
        consistent,
    })
}

/// Reports a run directory (`summary.json`) or a study directory (`study.json`).
pub fn report(dir: &Path) -> Result<Report> {
    if dir.join(STUDY_FILE).exists() {
        let study = serde_json::from_str(&std::fs::read_to_string(dir.join(STUDY_FILE))?)?;
        return Ok(Report::Study(study));
    }
    if !dir.join(SUMMARY_FILE).exists() {
        return Err(LabError::Config(format!("{} holds neither {SUMMARY_FILE} nor {STUDY_FILE}", dir.display())));
    }
    Ok(Report::Run(Box::new(report_run(dir)?)))
}
