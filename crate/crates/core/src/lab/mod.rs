//! Scenario orchestration: declarative configs, PDE and effective runs side
//! by side, emitted series, h-scaling studies and reports.

mod config;
mod report;
mod run;
mod study;

pub use config::{GridSpec, HorizonRule, HorizonSpec, ModelSpec, PerturbationSpec, Scenario, ScenarioConfig};
pub use report::{report, report_run, Report, RunReport, Table};
pub use run::{
    emit_series, initial_state, run_scenario, tracking_error, ErrorRecord, RunArtifacts, RunData, RunOutcome,
    RunSummary, CONFIG_FILE, DECOMPOSITION_FILE, DIAGNOSTICS_FILE, PLOT_FILE, SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use study::{h_scaling_study, loglog_fit, run_dir, ScalingFit, StudyEntry, StudySummary, STUDY_FILE};
