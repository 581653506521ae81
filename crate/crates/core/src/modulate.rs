//! Effective point-particle dynamics of the soliton parameters, the
//! adiabatic-transport reference and Floquet analysis of the Mathieu trap.

use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::Potential;
use crate::soliton::ModulationParams;
use crate::transform::wrap_phase;

/// Time derivatives of `σ`, in the layout of [`ModulationParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaRates {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    pub gamma: f64,
    pub mu: f64,
}

impl SigmaRates {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.a.clone();
        out.extend_from_slice(&self.v);
        out.push(self.gamma);
        out.push(self.mu);
        out
    }
}

/// Leading-order law `(ȧ, v̇, γ̇, μ̇) = (v, -2∇V(t,a), μ - V(t,a) + v²/4, 0)`.
pub fn rhs_leading(sigma: &ModulationParams, t: f64, potential: &Potential) -> SigmaRates {
    let grad = potential.gradient(t, &sigma.a);
    let v2: f64 = sigma.v.iter().map(|v| v * v).sum();
    SigmaRates {
        a: sigma.v.clone(),
        v: grad.iter().map(|g| -2.0 * g).collect(),
        gamma: sigma.mu - potential.value(t, &sigma.a) + 0.25 * v2,
        mu: 0.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveState {
    pub t: f64,
    /// `γ` reduced into `[0, 2π)`.
    pub sigma: ModulationParams,
}

/// Dense output of [`integrate_effective`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<EffectiveState>,
}

fn flat_rhs(x: &[f64], t: f64, potential: &Potential) -> Vec<f64> {
    rhs_leading(&ModulationParams::from_slice(x), t, potential).to_vec()
}

/// Classical RK4 on the leading-order law. `γ` is integrated unwrapped and
/// reported mod 2π; leaving `mu_interval` is an error.
pub fn integrate_effective(
    state0: &EffectiveState,
    potential: &Potential,
    dt: f64,
    t_end: f64,
    mu_interval: (f64, f64),
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= state0.t) {
        return Err(LabError::InvalidParameter("need dt > 0 and t_end >= t0".into()));
    }
    let (lo, hi) = mu_interval;
    let check = |mu: f64, t: f64| {
        if mu < lo || mu > hi || !mu.is_finite() {
            Err(LabError::MuOutOfInterval { mu, lo, hi, t })
        } else {
            Ok(())
        }
    };
    check(state0.sigma.mu, state0.t)?;
    let span = t_end - state0.t;
    let steps = ((span / dt) - 1e-9).ceil().max(0.0) as usize;
    let mut x = state0.sigma.to_vec();
    let mut states = Vec::with_capacity(steps + 1);
    let report = |x: &[f64], t: f64| {
        let mut sigma = ModulationParams::from_slice(x);
        sigma.gamma = wrap_phase(sigma.gamma);
        EffectiveState { t, sigma }
    };
    states.push(report(&x, state0.t));
    let n = x.len();
    for k in 0..steps {
        let t = state0.t + k as f64 * dt;
        let h = if k + 1 == steps { t_end - t } else { dt };
        let k1 = flat_rhs(&x, t, potential);
        let y: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
        let k2 = flat_rhs(&y, t + 0.5 * h, potential);
        let y: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
        let k3 = flat_rhs(&y, t + 0.5 * h, potential);
        let y: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
        let k4 = flat_rhs(&y, t + h, potential);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let t_next = if k + 1 == steps { t_end } else { state0.t + (k + 1) as f64 * dt };
        check(x[n - 1], t_next)?;
        if x.iter().any(|c| !c.is_finite()) {
            return Err(LabError::InvalidParameter(format!("effective trajectory diverged at t = {t_next}")));
        }
        states.push(report(&x, t_next));
    }
    Ok(Trajectory { states })
}

/// `a(t) = st - s/(hω₀) sin(hω₀t)`: the trap dragged at speed `s` from rest.
pub fn adiabatic_reference(s: f64, h: f64, omega0: f64, t: f64) -> f64 {
    let w = h * omega0;
    if w == 0.0 {
        return 0.0;
    }
    s * t - s / w * (w * t).sin()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetResult {
    pub multipliers: [Complex64; 2],
    pub trace: f64,
    /// Determinant of the monodromy matrix (product of the multipliers).
    pub determinant: f64,
    pub unstable: bool,
}

impl FloquetResult {
    pub fn max_modulus(&self) -> f64 {
        self.multipliers[0].norm().max(self.multipliers[1].norm())
    }
}

/// Steps per modulation period in [`floquet_monodromy`].
pub const FLOQUET_STEPS: usize = 4000;

/// Monodromy of `ä = -(hω₀)²(1 + δ cos ωt) a` over one period `2π/ω`.
pub fn floquet_monodromy(h: f64, omega0: f64, omega: f64, delta: f64) -> Result<FloquetResult> {
    if !(omega > 0.0) {
        return Err(LabError::InvalidParameter("omega must be > 0".into()));
    }
    let w2 = (h * omega0).powi(2);
    let f = |t: f64, y: [f64; 2]| [y[1], -w2 * (1.0 + delta * (omega * t).cos()) * y[0]];
    let period = TAU / omega;
    let dt = period / FLOQUET_STEPS as f64;
    let propagate = |mut y: [f64; 2]| {
        for k in 0..FLOQUET_STEPS {
            let t = k as f64 * dt;
            let k1 = f(t, y);
            let k2 = f(t + 0.5 * dt, [y[0] + 0.5 * dt * k1[0], y[1] + 0.5 * dt * k1[1]]);
            let k3 = f(t + 0.5 * dt, [y[0] + 0.5 * dt * k2[0], y[1] + 0.5 * dt * k2[1]]);
            let k4 = f(t + dt, [y[0] + dt * k3[0], y[1] + dt * k3[1]]);
            for i in 0..2 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    };
    let c0 = propagate([1.0, 0.0]);
    let c1 = propagate([0.0, 1.0]);
    let trace = c0[0] + c1[1];
    let determinant = c0[0] * c1[1] - c1[0] * c0[1];
    let disc = Complex64::new(trace * trace - 4.0 * determinant, 0.0).sqrt();
    let multipliers = [(trace + disc) / 2.0, (trace - disc) / 2.0];
    let max = multipliers[0].norm().max(multipliers[1].norm());
    Ok(FloquetResult { multipliers, trace, determinant, unstable: max > 1.0 + 1e-6 })
}

impl Trajectory {
    pub fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        h.extend(indexed("a", dim));
        h.extend(indexed("v", dim));
        h.push("gamma".into());
        h.push("mu".into());
        h
    }

    pub fn write_csv(&self, dim: usize, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::header(dim))?;
        for s in &self.states {
            let mut rec = vec![s.t];
            rec.extend(s.sigma.to_vec());
            out.write_record(rec.iter().map(|x| format!("{x:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Linear interpolation of `a` at time `t` (clamped to the ends).
    pub fn position_at(&self, t: f64) -> Option<Vec<f64>> {
        let s = &self.states;
        let first = s.first()?;
        if t <= first.t {
            return Some(first.sigma.a.clone());
        }
        let j = s.partition_point(|st| st.t <= t);
        if j >= s.len() {
            return Some(s[s.len() - 1].sigma.a.clone());
        }
        let (p, q) = (&s[j - 1], &s[j]);
        let w = (t - p.t) / (q.t - p.t);
        Some(p.sigma.a.iter().zip(&q.sigma.a).map(|(x, y)| (1.0 - w) * x + w * y).collect())
    }
}

/// Column names `name` (1D) or `name_1..name_N`.
pub(crate) fn indexed(name: &str, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![name.to_string()]
    } else {
        (1..=dim).map(|j| format!("{name}_{j}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(a: f64, v: f64, mu: f64) -> EffectiveState {
        EffectiveState { t: 0.0, sigma: ModulationParams { a: vec![a], v: vec![v], gamma: 0.0, mu } }
    }

    #[test]
    fn leading_rhs_examples() {
        let r = rhs_leading(&ModulationParams::at_rest(1, 1.3), 0.0, &Potential::zero());
        assert_eq!(r.to_vec(), vec![0.0, 0.0, 1.3, 0.0]);
        let trap = Potential::moving_trap(0.1, 1.0, vec![0.5], 10.0);
        let sigma = ModulationParams { a: vec![1.0], v: vec![0.2], gamma: 0.0, mu: 1.0 };
        assert_eq!(rhs_leading(&sigma, 2.0, &trap).v, vec![0.0]);
        let (h, w0, d, om, t, a) = (0.1, 5.0, 0.2, 1.0, 0.7, 0.9);
        let m = Potential::mathieu_trap(h, w0, d, om, 10.0);
        let sigma = ModulationParams { a: vec![a], v: vec![0.0], gamma: 0.0, mu: 1.0 };
        let expected = -(h * w0).powi(2) * (1.0 + d * (om * t).cos()) * a;
        assert!((rhs_leading(&sigma, t, &m).v[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn free_motion_is_exact() {
        let tr = integrate_effective(&state(0.3, 0.5, 1.0), &Potential::zero(), 0.1, 10.0, (0.5, 2.0)).unwrap();
        for s in &tr.states {
            assert!((s.sigma.a[0] - (0.3 + 0.5 * s.t)).abs() < 1e-12);
            let gamma = wrap_phase((1.0 + 0.0625) * s.t);
            let diff = (s.sigma.gamma - gamma).abs();
            assert!(diff < 1e-10 || (diff - TAU).abs() < 1e-10);
        }
        assert_eq!(tr.states.last().unwrap().t, 10.0);
    }

    #[test]
    fn static_trap_oscillation_and_energy() {
        let (h, w0, a0) = (0.1, 1.0, 0.2);
        let trap = Potential::static_trap(h, w0, 1, 20.0);
        let tr = integrate_effective(&state(a0, 0.0, 1.0), &trap, 0.01, 100.0, (0.5, 2.0)).unwrap();
        let e0 = trap.value(0.0, &[a0]);
        for s in &tr.states {
            assert!((s.sigma.a[0] - a0 * (h * w0 * s.t).cos()).abs() < 1e-6);
            let e = 0.25 * s.sigma.v[0].powi(2) + trap.value(s.t, &s.sigma.a);
            assert!((e - e0).abs() < 1e-8);
        }
    }

    #[test]
    fn mu_interval_enforced() {
        let r = integrate_effective(&state(0.0, 0.0, 3.0), &Potential::zero(), 0.1, 1.0, (0.5, 2.0));
        assert!(matches!(r, Err(LabError::MuOutOfInterval { .. })));
    }

    #[test]
    fn fourth_order_on_mathieu_trap() {
        let m = Potential::mathieu_trap(0.1, 5.0, 0.2, 1.0, 15.0);
        let end = |dt: f64| {
            let tr = integrate_effective(&state(1.0, 0.0, 1.0), &m, dt, 20.0, (0.5, 2.0)).unwrap();
            let s = &tr.states.last().unwrap().sigma;
            (s.a[0], s.v[0])
        };
        let (a, b, c) = (end(0.2), end(0.1), end(0.05));
        let ratio = ((a.0 - b.0).hypot(a.1 - b.1)) / ((b.0 - c.0).hypot(b.1 - c.1));
        assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn adiabatic_reference_matches_effective_ode() {
        let (h, w0, s) = (0.05, 1.0, 0.05f64.powf(2.5));
        assert_eq!(adiabatic_reference(s, h, w0, 0.0), 0.0);
        assert_eq!(adiabatic_reference(0.0, h, w0, 3.0), 0.0);
        let trap = Potential::moving_trap(h, w0, vec![s], 1e3);
        let tr = integrate_effective(&state(0.0, 0.0, 1.0), &trap, 0.01, 120.0, (0.5, 2.0)).unwrap();
        for st in &tr.states {
            assert!((st.sigma.a[0] - adiabatic_reference(s, h, w0, st.t)).abs() < 1e-6);
        }
    }

    #[test]
    fn floquet_constant_coefficients() {
        let (h, w0, om) = (0.1, 3.0, 1.0);
        let r = floquet_monodromy(h, w0, om, 0.0).unwrap();
        assert!(!r.unstable);
        let expected = Complex64::from_polar(1.0, TAU * h * w0 / om);
        let close = |z: Complex64| (z - expected).norm().min((z - expected.conj()).norm());
        assert!(close(r.multipliers[0]) < 1e-9 && close(r.multipliers[1]) < 1e-9);
    }

    #[test]
    fn floquet_resonance() {
        assert!(floquet_monodromy(0.1, 5.0, 1.0, 0.2).unwrap().unstable);
        assert!(!floquet_monodromy(0.1, 3.5, 1.0, 0.2).unwrap().unstable);
    }

    fn tongue_width(delta: f64) -> f64 {
        let n = 400;
        let inside: Vec<f64> = (0..=n)
            .map(|k| 0.4 + 0.2 * k as f64 / n as f64)
            .filter(|r| floquet_monodromy(1.0, *r, 1.0, delta).unwrap().unstable)
            .collect();
        inside.last().unwrap() - inside.first().unwrap()
    }

    #[test]
    fn tongue_narrows_with_delta() {
        let w: Vec<f64> = [0.05, 0.1, 0.2].iter().map(|&d| tongue_width(d)).collect();
        assert!(w[0] < w[1] && w[1] < w[2], "{w:?}");
        for d in [0.0, 0.05, 0.1, 0.2, 0.4] {
            for r in [0.3, 0.45, 0.5, 0.7, 1.0] {
                let res = floquet_monodromy(1.0, r, 1.0, d).unwrap();
                assert!((res.determinant - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn trajectory_csv_header() {
        assert_eq!(Trajectory::header(1).join(","), "t,a,v,gamma,mu");
        assert_eq!(Trajectory::header(2).join(","), "t,a_1,a_2,v_1,v_2,gamma,mu");
    }
}
