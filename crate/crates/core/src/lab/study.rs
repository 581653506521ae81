use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::run::{run_scenario, ErrorRecord, RunSummary};
use crate::error::{LabError, Result};

pub const STUDY_FILE: &str = "study.json";

/// Least-squares line `log y = slope·log h + intercept`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    /// `log y_i - (slope·log h_i + intercept)`.
    pub residuals: Vec<f64>,
    pub r_squared: f64,
}

pub fn loglog_fit(h: &[f64], y: &[f64]) -> Result<ScalingFit> {
    if h.len() < 2 || h.len() != y.len() {
        return Err(LabError::TooFewSamples { needed: 2, got: h.len().min(y.len()) });
    }
    if h.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(LabError::InvalidParameter("log-log fit needs positive finite data".into()));
    }
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let z: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = x.len() as f64;
    let (mx, mz) = (x.iter().sum::<f64>() / n, z.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|x| (x - mx).powi(2)).sum();
    let sxz: f64 = x.iter().zip(&z).map(|(x, z)| (x - mx) * (z - mz)).sum();
    let slope = sxz / sxx;
    let intercept = mz - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(&z).map(|(x, z)| z - (slope * x + intercept)).collect();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let ss_tot: f64 = z.iter().map(|z| (z - mz).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(ScalingFit { slope, intercept, residuals, r_squared })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyEntry {
    pub h: f64,
    pub dir: PathBuf,
    pub summary: Option<RunSummary>,
    pub error: Option<ErrorRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub status: String,
    pub h_list: Vec<f64>,
    pub entries: Vec<StudyEntry>,
    /// Fit of `sup_t ‖w‖_{H¹}` against `h`.
    pub w_fit: Option<ScalingFit>,
    /// Fit of `sup_t |α|` against `h`.
    pub alpha_fit: Option<ScalingFit>,
}

/// Per-h directory below the study's output directory.
pub fn run_dir(base: &ScenarioConfig, h: f64) -> PathBuf {
    base.output_dir.join(format!("h_{h}"))
}

/// Runs `base` for every `h` in parallel (one output directory each) and
/// fits the scaling of `sup ‖w‖_{H¹}` and `sup |α|`. Writes `study.json`;
/// a failed run marks the study failed and leaves the fits unset.
pub fn h_scaling_study(base: &ScenarioConfig, h_list: &[f64]) -> Result<StudySummary> {
    if h_list.len() < 3 {
        return Err(LabError::Config("the scaling study needs at least 3 values of h".into()));
    }
    let ratio = h_list[1] / h_list[0];
    if h_list.iter().any(|h| !(*h > 0.0 && *h < 1.0))
        || h_list.windows(2).any(|w| ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-6)
        || (ratio - 1.0).abs() < 1e-12
    {
        return Err(LabError::Config("h values must lie in (0, 1) with geometric spacing".into()));
    }
    let configs: Vec<ScenarioConfig> = h_list
        .iter()
        .map(|&h| {
            let mut c = base.clone();
            c.model.potential.h = h;
            c.output_dir = run_dir(base, h);
            c
        })
        .collect();
    for c in &configs {
        c.validate()?;
    }
    let entries: Vec<StudyEntry> = configs
        .par_iter()
        .map(|c| {
            let h = c.model.potential.h;
            let dir = c.output_dir.clone();
            match run_scenario(c) {
                Ok(out) => {
                    let s = out.data.summary;
                    let error = s.error.clone();
                    StudyEntry { h, dir, summary: Some(s), error }
                }
                Err(e) => StudyEntry { h, dir, summary: None, error: Some(ErrorRecord::from(&e)) },
            }
        })
        .collect();
    let ok = entries.iter().all(|e| e.error.is_none());
    let (mut w_fit, mut alpha_fit) = (None, None);
    if ok {
        let sums: Vec<&RunSummary> = entries.iter().filter_map(|e| e.summary.as_ref()).collect();
        let w: Vec<f64> = sums.iter().map(|s| s.sup_w_h1).collect();
        w_fit = Some(loglog_fit(h_list, &w)?);
        if let Some(a) = sums.iter().map(|s| s.sup_alpha).collect::<Option<Vec<f64>>>() {
            alpha_fit = Some(loglog_fit(h_list, &a)?);
        }
    }
    let study = StudySummary {
        status: if ok { "ok".into() } else { "failed".into() },
        h_list: h_list.to_vec(),
        entries,
        w_fit,
        alpha_fit,
    };
    std::fs::create_dir_all(&base.output_dir)?;
    let mut text = serde_json::to_string_pretty(&study)?;
    text.push('\n');
    std::fs::write(base.output_dir.join(STUDY_FILE), text)?;
    Ok(study)
}
