use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Scenario, ScenarioConfig};
use crate::decompose::{
    alpha_from_trajectory, lyapunov_value, random_skew_orthogonal, skew_project, write_decomposition_csv,
    DecompositionRow, ManifoldChart,
};
use crate::error::{LabError, Result};
use crate::evolve::{DiagnosticsAccumulator, DiagnosticsRecord, Evolver, EvolverConfig};
use crate::field::ComplexField;
use crate::model::{Model, PotentialShape};
use crate::modulate::{adiabatic_reference, integrate_effective, rhs_leading, EffectiveState, Trajectory};
use crate::soliton::{eta_sigma, ModulationParams};
use crate::transform::apply_transform;

pub const CONFIG_FILE: &str = "config.toml";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const DECOMPOSITION_FILE: &str = "decomposition.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PLOT_FILE: &str = "plot.py";

/// Machine-readable error record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&LabError> for ErrorRecord {
    fn from(e: &LabError) -> Self {
        ErrorRecord { kind: e.kind().to_string(), message: e.to_string() }
    }
}

/// Comparison summary of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    /// `"ok"` or `"failed"`.
    pub status: String,
    pub error: Option<ErrorRecord>,
    pub h: f64,
    /// Planned run length after the horizon rule.
    pub horizon: f64,
    /// Last time reached by the PDE.
    pub final_time: f64,
    pub decompositions: usize,
    /// `max_t ‖a_PDE(t) - a_eff(t)‖_∞` over the decomposition times.
    pub max_tracking_error: f64,
    pub sup_w_h1: f64,
    pub initial_w_h1: f64,
    /// `None` with fewer than three decompositions.
    pub sup_alpha: Option<f64>,
    /// `max_t |μ(t) - μ₀|`.
    pub mu_drift: f64,
    /// `max_t ‖a_PDE(t) - c(t)‖_∞` with `c(t)` the potential centre.
    pub center_amplitude: f64,
    /// Free runs: `max_t ‖a_PDE(t) - a₀ - v₀t‖_∞`.
    pub free_motion_error: Option<f64>,
    /// Moving traps: `max_t |a_PDE(t) - (st - s/(hω₀) sin hω₀t)|` along the first axis.
    pub adiabatic_error: Option<f64>,
    pub charge_drift: f64,
    pub max_energy_rate_residual: f64,
    pub max_ehrenfest_residual: f64,
    pub max_potential_rate_residual: f64,
    pub min_energy_bound_margin: f64,
    pub max_constraint_residual: f64,
    pub warnings: Vec<String>,
}

/// Paths of the emitted files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub diagnostics: PathBuf,
    pub decomposition: PathBuf,
    pub trajectory: PathBuf,
    pub summary: PathBuf,
    pub plot_script: Option<PathBuf>,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        RunArtifacts {
            dir: dir.to_path_buf(),
            config: dir.join(CONFIG_FILE),
            diagnostics: dir.join(DIAGNOSTICS_FILE),
            decomposition: dir.join(DECOMPOSITION_FILE),
            trajectory: dir.join(TRAJECTORY_FILE),
            summary: dir.join(SUMMARY_FILE),
            plot_script: None,
        }
    }
}

/// In-memory series of a run.
#[derive(Clone, Debug)]
pub struct RunData {
    pub config: ScenarioConfig,
    pub dim: usize,
    pub diagnostics: DiagnosticsRecord,
    pub decomposition: Vec<DecompositionRow>,
    /// Effective states at the planned decomposition times.
    pub trajectory: Trajectory,
    pub summary: RunSummary,
}

/// Result of [`run_scenario`]: files plus the in-memory series.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub artifacts: RunArtifacts,
    pub data: RunData,
}

impl RunOutcome {
    pub fn summary(&self) -> &RunSummary {
        &self.data.summary
    }
}

/// Step indices at which the state is decomposed.
fn decomposition_steps(steps: usize, every: usize) -> Vec<usize> {
    let mut n: Vec<usize> = (0..=steps).step_by(every).collect();
    if n.last() != Some(&steps) {
        n.push(steps);
    }
    n
}

/// Centre of the potential well at time `t`, or the origin.
fn potential_center(model: &Model, t: f64, dim: usize) -> Vec<f64> {
    model.potential.center(t, dim).unwrap_or_else(|| vec![0.0; dim])
}

fn sup_norm_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `ψ₀ = T_{σ₀}(η_{μ₀} + w₀)` with `w₀` the configured perturbation.
pub fn initial_state(config: &ScenarioConfig, chart: &ManifoldChart) -> Result<ComplexField> {
    let sigma0 = &config.sigma0;
    let point = chart.point(sigma0.mu)?;
    let amplitude = config.perturbation_amplitude();
    if amplitude == 0.0 {
        return eta_sigma(&point.profile, sigma0);
    }
    let seed = config.perturbation.as_ref().map_or(0, |p| p.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random_skew_orthogonal(&point, &mut rng).scale(amplitude);
    let u = point.eta() + &w;
    Ok(apply_transform(&u, &sigma0.transform()?)?.field)
}

/// Effective dynamics sampled at `times`, integrated piecewise so that the
/// sample times match the PDE decomposition times exactly.
fn effective_at(
    sigma0: &ModulationParams,
    model: &Model,
    times: &[f64],
    max_dt: f64,
) -> Result<Trajectory> {
    let mu = sigma0.mu;
    let interval = (0.25 * mu, 4.0 * mu);
    let mut states = vec![EffectiveState { t: times[0], sigma: sigma0.clone() }];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let pieces = (span / max_dt).ceil().max(1.0);
        let prev = states.last().expect("non-empty").clone();
        let traj = integrate_effective(&prev, &model.potential, span / pieces, w[1], interval)?;
        let mut last = traj.states.last().expect("non-empty").clone();
        last.t = w[1];
        states.push(last);
    }
    Ok(Trajectory { states })
}

/// Runs the PDE and the effective dynamics from the same initial data,
/// decomposes the PDE snapshots, and writes the artifacts into
/// `config.output_dir`. Module errors during the run are recorded in the
/// summary and the partial series are still written; only invalid configs
/// and I/O failures return `Err`.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutcome> {
    let (grid, model) = config.validate()?;
    let dim = grid.dim();
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    let resolved = config.resolved();
    std::fs::write(dir.join(CONFIG_FILE), resolved.to_toml()?)?;

    let horizon = config.horizon_time();
    let evolver_config = EvolverConfig { t_end: horizon, ..config.evolver.clone() };
    let steps = evolver_config.steps()?;
    let dt = evolver_config.dt;
    let every = config.evolver.snapshot_stride * config.decompose_stride;
    let plan = decomposition_steps(steps, every);
    let plan_times: Vec<f64> = plan.iter().map(|&n| n as f64 * dt).collect();

    let chart = ManifoldChart::new(model.nonlinearity.clone(), grid)?;
    let mut rows: Vec<DecompositionRow> = Vec::new();
    let mut gammas: Vec<f64> = Vec::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut acc = DiagnosticsAccumulator::default();
    let mut max_constraint = 0.0f64;
    let mut final_time = 0.0;

    let pde = (|| -> Result<()> {
        let psi0 = initial_state(config, &chart)?;
        let evolver = Evolver::new(model.clone(), grid, dt)?;
        let mut guess = config.sigma0.clone();
        let mut guess_gamma = guess.gamma;
        let mut next = 0usize;
        let mut on_snapshot = |t: f64, psi: &ComplexField| -> Result<()> {
            final_time = t;
            let n = (t / dt).round() as usize;
            if next >= plan.len() || plan[next] != n {
                return Ok(());
            }
            next += 1;
            // predictor: previous decomposition advanced by the leading law
            if let Some(prev) = rows.last() {
                let tau = t - prev.t;
                let r = rhs_leading(&prev.sigma, prev.t, &model.potential);
                let a = prev.sigma.a.iter().zip(&r.a).map(|(x, d)| x + tau * d).collect();
                let v = prev.sigma.v.iter().zip(&r.v).map(|(x, d)| x + tau * d).collect();
                guess_gamma = gammas.last().copied().unwrap_or(0.0) + tau * r.gamma;
                guess = ModulationParams { a, v, gamma: guess_gamma, mu: prev.sigma.mu };
            }
            let d = skew_project(psi, &guess, &chart)?;
            if d.tube_warning && !warnings.iter().any(|w| w.starts_with("tube")) {
                warnings.push(format!("tube radius exceeded at t = {t}: ‖w‖_H1 = {:.3e}", d.w_h1));
            }
            if d.seam_warning && !warnings.iter().any(|w| w.starts_with("seam")) {
                warnings.push(format!("seam: field not negligible on the periodic boundary at t = {t}"));
            }
            max_constraint = max_constraint.max(d.constraint_residual);
            let lyapunov = lyapunov_value(&d, &chart)?;
            gammas.push(d.gamma_unwrapped);
            rows.push(DecompositionRow {
                t,
                sigma: d.sigma,
                w_h1: d.w_h1,
                constraint_residual: d.constraint_residual,
                alpha: vec![0.0; 2 * dim + 2],
                lyapunov,
            });
            Ok(())
        };
        evolver.run_observed(&psi0, 0.0, &evolver_config, &mut on_snapshot, &mut acc)?;
        Ok(())
    })();
    let mut error = pde.err().map(|e| ErrorRecord::from(&e));

    let mut sup_alpha = None;
    if rows.len() >= 3 {
        let times: Vec<f64> = rows.iter().map(|r| r.t).collect();
        let sigmas: Vec<ModulationParams> = rows.iter().map(|r| r.sigma.clone()).collect();
        let series = alpha_from_trajectory(&times, &sigmas, &model.potential)?;
        for (row, a) in rows.iter_mut().zip(&series.alpha) {
            row.alpha.clone_from(a);
        }
        sup_alpha = Some(series.sup_norm());
        warnings.extend(series.warnings);
    } else {
        warnings.push(format!("{} decompositions; alpha needs at least 3 and is reported as 0", rows.len()));
    }

    let trajectory = match effective_at(&config.sigma0, &model, &plan_times, config.effective_dt) {
        Ok(t) => t,
        Err(e) => {
            error.get_or_insert(ErrorRecord::from(&e));
            Trajectory::default()
        }
    };

    let diagnostics = acc.finish();
    warnings.extend(diagnostics.warnings.iter().cloned());
    let summary = summarize(config, &model, horizon, final_time, &rows, &trajectory, &diagnostics, sup_alpha)
        .with(error, warnings, max_constraint);
    let data = RunData { config: resolved, dim, diagnostics, decomposition: rows, trajectory, summary };
    let artifacts = emit_series(&data, &dir)?;
    Ok(RunOutcome { artifacts, data })
}

impl RunSummary {
    fn with(mut self, error: Option<ErrorRecord>, warnings: Vec<String>, max_constraint: f64) -> Self {
        self.status = if error.is_some() { "failed".into() } else { "ok".into() };
        self.error = error;
        self.warnings = warnings;
        self.max_constraint_residual = max_constraint;
        self
    }
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    config: &ScenarioConfig,
    model: &Model,
    horizon: f64,
    final_time: f64,
    rows: &[DecompositionRow],
    trajectory: &Trajectory,
    diagnostics: &DiagnosticsRecord,
    sup_alpha: Option<f64>,
) -> RunSummary {
    let dim = config.sigma0.dim();
    let sigma0 = &config.sigma0;
    let max_tracking_error = tracking_error(rows, trajectory);
    let fold = |f: &dyn Fn(&DecompositionRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let free_motion_error = matches!(model.potential.shape, PotentialShape::Zero).then(|| {
        fold(&|r| {
            let free: Vec<f64> = sigma0.a.iter().zip(&sigma0.v).map(|(a, v)| a + v * r.t).collect();
            sup_norm_diff(&r.sigma.a, &free)
        })
    });
    let adiabatic_error = match &model.potential.shape {
        PotentialShape::MovingTrap { omega0, drift, .. } if drift.iter().any(|s| *s != 0.0) => {
            let h = model.potential.h;
            Some(fold(&|r| (r.sigma.a[0] - adiabatic_reference(drift[0], h, *omega0, r.t)).abs()))
        }
        _ => None,
    };
    RunSummary {
        scenario: config.scenario,
        status: String::new(),
        error: None,
        h: model.potential.h,
        horizon,
        final_time,
        decompositions: rows.len(),
        max_tracking_error,
        sup_w_h1: fold(&|r| r.w_h1),
        initial_w_h1: rows.first().map_or(0.0, |r| r.w_h1),
        sup_alpha,
        mu_drift: fold(&|r| (r.sigma.mu - sigma0.mu).abs()),
        center_amplitude: fold(&|r| sup_norm_diff(&r.sigma.a, &potential_center(model, r.t, dim))),
        free_motion_error,
        adiabatic_error,
        charge_drift: diagnostics.charge_drift(),
        max_energy_rate_residual: diagnostics.max_of(|r| r.energy_rate_residual),
        max_ehrenfest_residual: diagnostics.max_of(|r| r.ehrenfest_residual),
        max_potential_rate_residual: diagnostics.max_of(|r| r.potential_rate_residual),
        min_energy_bound_margin: diagnostics.rows.iter().map(|r| r.energy_bound_margin).fold(f64::INFINITY, f64::min),
        max_constraint_residual: 0.0,
        warnings: Vec::new(),
    }
}

/// `max_i ‖a_PDE(t_i) - a_eff(t_i)‖_∞`, pairing rows by index.
pub fn tracking_error(rows: &[DecompositionRow], trajectory: &Trajectory) -> f64 {
    rows.iter()
        .zip(&trajectory.states)
        .map(|(r, s)| sup_norm_diff(&r.sigma.a, &s.sigma.a))
        .fold(0.0, f64::max)
}

/// Writes the CSV/JSON series (header-only when a series is empty) and,
/// when configured, a plotting script.
pub fn emit_series(data: &RunData, dir: &Path) -> Result<RunArtifacts> {
    std::fs::create_dir_all(dir)?;
    let mut art = RunArtifacts::in_dir(dir);
    if !art.config.exists() {
        std::fs::write(&art.config, data.config.to_toml()?)?;
    }
    data.diagnostics.write_csv(data.dim, BufWriter::new(File::create(&art.diagnostics)?))?;
    write_decomposition_csv(&data.decomposition, data.dim, BufWriter::new(File::create(&art.decomposition)?))?;
    data.trajectory.write_csv(data.dim, BufWriter::new(File::create(&art.trajectory)?))?;
    let mut text = serde_json::to_string_pretty(&data.summary)?;
    text.push('\n');
    std::fs::write(&art.summary, text)?;
    if data.config.plot_script {
        let path = dir.join(PLOT_FILE);
        std::fs::write(&path, plot_script(data.dim))?;
        art.plot_script = Some(path);
    }
    Ok(art)
}

fn plot_script(dim: usize) -> String {
    let a = if dim == 1 { "a".to_string() } else { "a_1".to_string() };
    format!(
        r#"import csv, sys
import matplotlib.pyplot as plt

def load(name):
    with open(name) as f:
        rows = list(csv.DictReader(f))
    return {{k: [float(r[k]) for r in rows] for k in rows[0]}} if rows else {{}}

dec = load("{DECOMPOSITION_FILE}")
eff = load("{TRAJECTORY_FILE}")
diag = load("{DIAGNOSTICS_FILE}")
fig, ax = plt.subplots(3, 1, figsize=(7, 9), sharex=True)
ax[0].plot(dec["t"], dec["{a}"], label="PDE")
ax[0].plot(eff["t"], eff["{a}"], "--", label="effective")
ax[0].set_ylabel("{a}")
ax[0].legend()
ax[1].semilogy(dec["t"], dec["w_h1"])
ax[1].set_ylabel("w_h1")
ax[2].semilogy(diag["t"], [abs(x) for x in diag["energy_rate_residual"]])
ax[2].set_ylabel("energy_rate_residual")
ax[2].set_xlabel("t")
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else "series.png")
"#
    )
}
