//! Strang split-step integration of `i∂_tψ = (-Δ + V_h(t))ψ - f(ψ)` and
//! the conservation/rate diagnostics of the flow.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField, Grid};
use crate::model::Model;
use crate::snapshot::Snapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolverConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between snapshots handed to observers; 0 disables them.
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
    /// Steps between diagnostics samples; 0 disables them.
    #[serde(default = "default_stride")]
    pub diag_stride: usize,
}

fn default_stride() -> usize {
    10
}

impl EvolverConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        EvolverConfig { dt, t_end, snapshot_stride: 10, diag_stride: 10 }
    }

    /// `dt > 0`, `t_end ≥ 0`, and the phase-resolution guard `dt·max|k|² ≤ π`.
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(LabError::InvalidParameter("need dt > 0 and t_end >= 0".into()));
        }
        let product = self.dt * grid.max_k_squared();
        if product > std::f64::consts::PI {
            return Err(LabError::TimeStepGuard { product });
        }
        Ok(())
    }

    /// Number of steps; `t_end` must be a whole number of steps.
    pub fn steps(&self) -> Result<usize> {
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(LabError::InvalidParameter(format!(
                "t_end = {} is not a multiple of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

enum PotentialSamples {
    Zero,
    /// `V(t) = c(t) · base`.
    Scaled(Vec<f64>),
    Dynamic(Vec<Vec<f64>>),
}

/// Split-step propagator for one model, grid and time step.
pub struct Evolver {
    model: Model,
    grid: Grid,
    dt: f64,
    kinetic_half: Vec<Complex64>,
    kinetic_full: Vec<Complex64>,
    potential: PotentialSamples,
}

impl Evolver {
    pub fn new(model: Model, grid: Grid, dt: f64) -> Result<Self> {
        EvolverConfig::new(dt, 0.0).validate(&grid)?;
        model.nonlinearity.validate(grid.dim())?;
        model.potential.validate(grid.dim())?;
        let k2 = grid.k_squared();
        let kinetic_half = k2.iter().map(|k2| Complex64::from_polar(1.0, -0.5 * k2 * dt)).collect();
        let kinetic_full = k2.iter().map(|k2| Complex64::from_polar(1.0, -k2 * dt)).collect();
        let potential = if model.potential.is_zero() {
            PotentialSamples::Zero
        } else if model.potential.time_factor(0.0).is_some() {
            PotentialSamples::Scaled(model.potential.sample(0.0, &grid))
        } else {
            PotentialSamples::Dynamic(grid.coordinates())
        };
        Ok(Evolver { model, grid, dt, kinetic_half, kinetic_full, potential })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn potential_at(&self, t: f64, out: &mut [f64]) {
        match &self.potential {
            PotentialSamples::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            PotentialSamples::Scaled(base) => {
                let c = self.model.potential.time_factor(t).unwrap_or(1.0);
                out.iter_mut().zip(base).for_each(|(v, b)| *v = c * b);
            }
            PotentialSamples::Dynamic(coords) => {
                let dim = coords.len();
                let mut x = [0.0; 3];
                for (j, v) in out.iter_mut().enumerate() {
                    for ax in 0..dim {
                        x[ax] = coords[ax][j];
                    }
                    *v = self.model.potential.value(t, &x[..dim]);
                }
            }
        }
    }

    fn kinetic(&self, values: &mut [Complex64], multiplier: &[Complex64]) {
        self.grid.fft(values);
        values.iter_mut().zip(multiplier).for_each(|(z, m)| *z *= m);
        self.grid.ifft(values);
    }

    /// Pointwise substep `ψ ← e^{-i(V(t) - g(ψ))dt} ψ` with `f = gψ`.
    fn phase(&self, values: &mut [Complex64], t: f64, v: &mut [f64]) {
        let g = self.model.nonlinearity.multiplier_of(&self.grid, values);
        self.potential_at(t, v);
        for ((z, v), g) in values.iter_mut().zip(v.iter()).zip(&g) {
            *z *= Complex64::from_polar(1.0, -(v - g) * self.dt);
        }
    }

    /// One Strang step from `t` to `t + dt`.
    pub fn step(&self, psi: &ComplexField, t: f64) -> Result<ComplexField> {
        self.advance(psi, t, 1)
    }

    /// `n` Strang steps from `t`; the kinetic half-steps between
    /// consecutive steps are fused into one full kinetic step.
    pub fn advance(&self, psi: &ComplexField, t: f64, n: usize) -> Result<ComplexField> {
        if psi.grid() != &self.grid {
            return Err(LabError::GridMismatch);
        }
        if n == 0 {
            return Ok(psi.clone());
        }
        let mut values = psi.values().to_vec();
        let mut v = vec![0.0; self.grid.len()];
        self.kinetic(&mut values, &self.kinetic_half);
        for i in 0..n {
            self.phase(&mut values, t + (i as f64 + 0.5) * self.dt, &mut v);
            let last = i + 1 == n;
            self.kinetic(&mut values, if last { &self.kinetic_half } else { &self.kinetic_full });
        }
        let out = ComplexField::new(self.grid, values)?;
        if !out.is_finite() {
            return Err(LabError::NonFinite { t: t + n as f64 * self.dt, last_valid: Box::new(psi.clone()) });
        }
        Ok(out)
    }

    /// Integrate from `(t0, psi0)` for `config.t_end`, calling `on_snapshot`
    /// every `snapshot_stride` steps (including the initial state) and
    /// feeding `diagnostics` every `diag_stride` steps. Partial data stays in
    /// `diagnostics` if a step fails.
    pub fn run_observed(
        &self,
        psi0: &ComplexField,
        t0: f64,
        config: &EvolverConfig,
        on_snapshot: &mut dyn FnMut(f64, &ComplexField) -> Result<()>,
        diagnostics: &mut DiagnosticsAccumulator,
    ) -> Result<(f64, ComplexField)> {
        if (config.dt - self.dt).abs() > 0.0 {
            return Err(LabError::InvalidParameter("config dt differs from the evolver dt".into()));
        }
        config.validate(&self.grid)?;
        let steps = config.steps()?;
        if !psi0.is_finite() {
            return Err(LabError::NonFinite { t: t0, last_valid: Box::new(psi0.clone()) });
        }
        let mut psi = psi0.clone();
        let due = |n: usize, stride: usize| stride > 0 && (n.is_multiple_of(stride) || n == steps);
        let mut n = 0;
        loop {
            let t = t0 + n as f64 * self.dt;
            if due(n, config.snapshot_stride) {
                on_snapshot(t, &psi)?;
            }
            if due(n, config.diag_stride) {
                diagnostics.push(sample_diagnostics(&psi, t, &self.model)?);
            }
            if n == steps {
                break;
            }
            let mut next = n + 1;
            while next < steps && !due(next, config.snapshot_stride) && !due(next, config.diag_stride) {
                next += 1;
            }
            psi = self.advance(&psi, t, next - n)?;
            n = next;
        }
        Ok((t0 + steps as f64 * self.dt, psi))
    }
}

/// Convenience single step.
pub fn step(psi: &ComplexField, t: f64, dt: f64, model: &Model) -> Result<ComplexField> {
    Evolver::new(model.clone(), *psi.grid(), dt)?.step(psi, t)
}

/// Result of [`run`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub final_time: f64,
    pub final_state: ComplexField,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: DiagnosticsRecord,
}

/// Integrate from `t = 0`, keeping every snapshot in memory.
pub fn run(psi0: &ComplexField, model: &Model, config: &EvolverConfig) -> Result<RunOutput> {
    let evolver = Evolver::new(model.clone(), *psi0.grid(), config.dt)?;
    let mut snapshots = Vec::new();
    let mut acc = DiagnosticsAccumulator::default();
    let (final_time, final_state) = evolver.run_observed(
        psi0,
        0.0,
        config,
        &mut |t, psi| {
            snapshots.push(Snapshot::new(t, psi.clone()));
            Ok(())
        },
        &mut acc,
    )?;
    Ok(RunOutput { final_time, final_state, snapshots, diagnostics: acc.finish() })
}

/// Instantaneous quantities and the right-hand sides of their rate laws.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsSample {
    pub t: f64,
    /// `N(ψ) = ½∫|ψ|²`.
    pub charge: f64,
    /// `P = ⟨ψ, -i∇ψ⟩`.
    pub momentum: Vec<f64>,
    /// `H_V(t, ψ)`.
    pub energy: f64,
    /// `½∫V|ψ|²`.
    pub potential_energy: f64,
    /// `½⟨ψ, ∂_tV ψ⟩`.
    pub energy_rate: f64,
    /// `-⟨ψ, ∇V ψ⟩`.
    pub momentum_rate: Vec<f64>,
    /// `⟨i∇V ψ, ∇ψ⟩ + ½⟨ψ, ∂_tV ψ⟩`.
    pub potential_rate: f64,
}

pub fn sample_diagnostics(psi: &ComplexField, t: f64, model: &Model) -> Result<DiagnosticsSample> {
    let grid = *psi.grid();
    let dv = grid.cell_volume();
    let dens: Vec<f64> = psi.values().iter().map(|z| z.norm_sqr()).collect();
    let grad = psi.spectral_gradient();
    let momentum: Vec<f64> = grad.iter().map(|g| psi.dot(&g.mul_i().scale(-1.0))).collect();
    let v = model.potential.sample(t, &grid);
    let vdens: f64 = v.iter().zip(&dens).map(|(v, d)| v * d).sum::<f64>() * dv;
    let energy = 0.5 * (psi.gradient_norm_sq() + vdens) - model.nonlinearity.primitive(psi);
    let dtv = model.potential.sample_time_derivative(t, &grid);
    let energy_rate = 0.5 * dtv.iter().zip(&dens).map(|(a, d)| a * d).sum::<f64>() * dv;
    let gv = model.potential.sample_gradient(t, &grid);
    let momentum_rate = gv.iter().map(|g| -g.iter().zip(&dens).map(|(g, d)| g * d).sum::<f64>() * dv).collect();
    let ipsi = psi.mul_i();
    let mut cross = 0.0;
    for (g, d) in gv.iter().zip(&grad) {
        cross += ipsi.mul_real(g).dot(d);
    }
    let sample = DiagnosticsSample {
        t,
        charge: psi.charge(),
        momentum,
        energy,
        potential_energy: 0.5 * vdens,
        energy_rate,
        momentum_rate,
        potential_rate: cross + energy_rate,
    };
    if !sample.energy.is_finite() || !sample.charge.is_finite() {
        return Err(LabError::NonFinite { t, last_valid: Box::new(psi.clone()) });
    }
    Ok(sample)
}

/// One row of the diagnostics series.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub charge: f64,
    pub momentum: Vec<f64>,
    pub energy: f64,
    /// `|dH/dt - ½⟨ψ,∂_tVψ⟩|`.
    pub energy_rate_residual: f64,
    /// `‖dP/dt + ⟨ψ,∇Vψ⟩‖_∞`.
    pub ehrenfest_residual: f64,
    /// `|d/dt ½∫V|ψ|² - ⟨i∇Vψ,∇ψ⟩ - ½⟨ψ,∂_tVψ⟩|`.
    pub potential_rate_residual: f64,
    /// `|E(0)| + t·C̃ - |E(t)|`, `C̃ = sup ½|⟨ψ,∂_tVψ⟩|`.
    pub energy_bound_margin: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub rows: Vec<DiagnosticsRow>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct DiagnosticsAccumulator {
    samples: Vec<DiagnosticsSample>,
}

impl DiagnosticsAccumulator {
    pub fn push(&mut self, s: DiagnosticsSample) {
        self.samples.push(s);
    }

    pub fn samples(&self) -> &[DiagnosticsSample] {
        &self.samples
    }

    pub fn finish(&self) -> DiagnosticsRecord {
        assemble(&self.samples)
    }
}

/// Derivative of samples `y(t)` by three-point differences on a possibly
/// non-uniform mesh; second order everywhere, one-sided at the ends.
pub fn differentiate(t: &[f64], y: &[f64]) -> Vec<f64> {
    let n = t.len();
    assert_eq!(n, y.len());
    assert!(n >= 3, "need three samples");
    let three = |i: usize, at: f64| {
        let (t0, t1, t2) = (t[i], t[i + 1], t[i + 2]);
        let (y0, y1, y2) = (y[i], y[i + 1], y[i + 2]);
        // derivative of the Lagrange interpolant through (t0,t1,t2) at `at`
        y0 * (2.0 * at - t1 - t2) / ((t0 - t1) * (t0 - t2))
            + y1 * (2.0 * at - t0 - t2) / ((t1 - t0) * (t1 - t2))
            + y2 * (2.0 * at - t0 - t1) / ((t2 - t0) * (t2 - t1))
    };
    (0..n)
        .map(|i| match i {
            0 => three(0, t[0]),
            i if i == n - 1 => three(n - 3, t[n - 1]),
            i => three(i - 1, t[i]),
        })
        .collect()
}

fn assemble(samples: &[DiagnosticsSample]) -> DiagnosticsRecord {
    let mut warnings = Vec::new();
    let n = samples.len();
    if n == 0 {
        return DiagnosticsRecord::default();
    }
    let dim = samples[0].momentum.len();
    let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let c_tilde = samples.iter().map(|s| s.energy_rate.abs()).fold(0.0, f64::max);
    let e0 = samples[0].energy.abs();
    let (mut res_e, mut res_p, mut res_v) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    if n >= 3 {
        let col = |f: &dyn Fn(&DiagnosticsSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
        let de = differentiate(&ts, &col(&|s| s.energy));
        let dv = differentiate(&ts, &col(&|s| s.potential_energy));
        let dps: Vec<Vec<f64>> = (0..dim).map(|ax| differentiate(&ts, &col(&|s| s.momentum[ax]))).collect();
        for i in 0..n {
            let s = &samples[i];
            res_e[i] = (de[i] - s.energy_rate).abs();
            res_v[i] = (dv[i] - s.potential_rate).abs();
            res_p[i] = (0..dim).map(|ax| (dps[ax][i] - s.momentum_rate[ax]).abs()).fold(0.0, f64::max);
        }
        // truncation of the centered difference ≈ τ²/6 |q'''|, with q' ≈ the rate law
        let est = |rate: &dyn Fn(&DiagnosticsSample) -> f64| {
            let r = col(rate);
            let scale = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
            let second = (1..n - 1).map(|i| (r[i + 1] - 2.0 * r[i] + r[i - 1]).abs()).fold(0.0, f64::max);
            (second / 6.0, scale)
        };
        for (name, (e, scale)) in [
            ("energy rate", est(&|s| s.energy_rate)),
            ("potential rate", est(&|s| s.potential_rate)),
            ("ehrenfest", est(&|s| s.momentum_rate.iter().map(|x| x.abs()).sum())),
        ] {
            if e > 1e-3 * scale && e > 1e-12 {
                warnings.push(format!(
                    "{name}: differencing error estimate {e:.3e} exceeds 1e-3 of the rate scale {scale:.3e}; reduce diag_stride"
                ));
            }
        }
    } else {
        warnings.push(format!("only {n} diagnostics samples; rate residuals need at least 3 and are reported as 0"));
    }
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| DiagnosticsRow {
            t: s.t,
            charge: s.charge,
            momentum: s.momentum.clone(),
            energy: s.energy,
            energy_rate_residual: res_e[i],
            ehrenfest_residual: res_p[i],
            potential_rate_residual: res_v[i],
            energy_bound_margin: e0 + (s.t - ts[0]) * c_tilde - s.energy.abs(),
        })
        .collect();
    DiagnosticsRecord { rows, warnings }
}

/// Rebuild the diagnostics from stored snapshots.
pub fn diagnostics_check(snapshots: &[Snapshot], model: &Model) -> Result<DiagnosticsRecord> {
    if snapshots.len() < 3 {
        return Err(LabError::TooFewSamples { needed: 3, got: snapshots.len() });
    }
    let samples = snapshots
        .iter()
        .map(|s| sample_diagnostics(&s.field, s.time, model))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(&samples))
}

impl DiagnosticsRecord {
    pub fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["t".to_string(), "charge".to_string()];
        if dim == 1 {
            h.push("momentum".into());
        } else {
            h.extend((1..=dim).map(|j| format!("momentum_{j}")));
        }
        h.extend(
            ["energy", "energy_rate_residual", "ehrenfest_residual", "potential_rate_residual", "energy_bound_margin"]
                .map(String::from),
        );
        h
    }

    pub fn write_csv(&self, dim: usize, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::header(dim))?;
        for r in &self.rows {
            let mut rec = vec![r.t, r.charge];
            rec.extend_from_slice(&r.momentum);
            rec.extend([
                r.energy,
                r.energy_rate_residual,
                r.ehrenfest_residual,
                r.potential_rate_residual,
                r.energy_bound_margin,
            ]);
            out.write_record(rec.iter().map(|x| format!("{x:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn max_of(&self, f: impl Fn(&DiagnosticsRow) -> f64) -> f64 {
        self.rows.iter().map(f).fold(0.0, f64::max)
    }

    /// `max_t |N(t) - N(0)| / N(0)` (0 for a zero field).
    pub fn charge_drift(&self) -> f64 {
        let Some(first) = self.rows.first() else { return 0.0 };
        if first.charge == 0.0 {
            return 0.0;
        }
        self.max_of(|r| (r.charge - first.charge).abs()) / first.charge
    }
}
