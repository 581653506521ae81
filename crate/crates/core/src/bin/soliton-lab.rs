//! Command-line front end: `run`, `sweep` and `report`.
//!
//! Success prints a JSON document on stdout and exits 0. Any failure prints
//! `{"error": {"kind": ..., "message": ...}}` on stdout and exits 1. The
//! worker thread count is taken from `RAYON_NUM_THREADS`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use soliton_lab::lab::{h_scaling_study, report, run_scenario, ScenarioConfig};
use soliton_lab::LabError;

#[derive(Parser)]
#[command(name = "soliton-lab", version, about = "Soliton dynamics in slowly varying potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts into the configured output directory.
    Run {
        config: PathBuf,
    },
    /// Run a scenario for several values of h and fit the scaling of ‖w‖ and α.
    Sweep {
        config: PathBuf,
        /// Geometrically spaced values of h, comma separated.
        #[arg(long = "h-list", value_delimiter = ',', num_args = 1.., required = true)]
        h_list: Vec<f64>,
    },
    /// Re-parse a run or study directory and check its consistency.
    Report {
        dir: PathBuf,
    },
}

fn execute(cli: Cli) -> anyhow::Result<Value> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ScenarioConfig::load(&config)?;
            let out = run_scenario(&cfg)?;
            let summary = serde_json::to_value(out.summary())?;
            if let Some(err) = &out.summary().error {
                bail!(Failed { kind: err.kind.clone(), message: err.message.clone(), detail: summary });
            }
            Ok(json!({ "artifacts": out.artifacts, "summary": summary }))
        }
        Command::Sweep { config, h_list } => {
            let cfg = ScenarioConfig::load(&config)?;
            let study = h_scaling_study(&cfg, &h_list)?;
            let value = serde_json::to_value(&study)?;
            if study.status != "ok" {
                bail!(Failed { kind: "study_failed".into(), message: "at least one run failed".into(), detail: value });
            }
            Ok(value)
        }
        Command::Report { dir } => {
            let r = report(&dir).with_context(|| format!("cannot report {}", dir.display()))?;
            Ok(serde_json::to_value(r)?)
        }
    }
}

/// A run that completed with a recorded error.
#[derive(Debug)]
struct Failed {
    kind: String,
    message: String,
    detail: Value,
}

impl std::fmt::Display for Failed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failed {}

fn error_json(err: &anyhow::Error) -> Value {
    if let Some(f) = err.downcast_ref::<Failed>() {
        return json!({ "error": { "kind": f.kind, "message": f.message, "detail": f.detail } });
    }
    let kind = err.chain().find_map(|e| e.downcast_ref::<LabError>()).map_or("cli", LabError::kind);
    json!({ "error": { "kind": kind, "message": format!("{err:#}") } })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            println!("{}", json!({ "error": { "kind": "usage", "message": e.to_string() } }));
            return ExitCode::FAILURE;
        }
    };
    match execute(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("JSON values serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            println!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
