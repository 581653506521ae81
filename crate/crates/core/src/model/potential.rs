use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField, Grid};

/// User-supplied potential `V(t, x)` with its spatial gradient and time derivative.
pub trait PotentialFn: Send + Sync + fmt::Debug {
    fn value(&self, t: f64, x: &[f64]) -> f64;
    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]);
    fn time_derivative(&self, t: f64, x: &[f64]) -> f64;
}

/// Time-sliced samples on a periodic 1D grid.
///
/// Space is interpolated with periodic Catmull-Rom cubics, time linearly
/// between slices; outside `[times[0], times[last]]` the nearest slice is used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedPotential {
    pub extent: f64,
    pub times: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl TabulatedPotential {
    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.samples.len() {
            return Err(LabError::InvalidParameter("tabulated potential needs one sample row per time".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(LabError::InvalidParameter("tabulated times must increase".into()));
        }
        let m = self.samples[0].len();
        if m < 4 || self.samples.iter().any(|r| r.len() != m) || !(self.extent > 0.0) {
            return Err(LabError::InvalidParameter("tabulated rows must share a length >= 4".into()));
        }
        Ok(())
    }

    fn spatial(&self, row: &[f64], x: f64) -> (f64, f64) {
        let m = row.len();
        let dx = self.extent / m as f64;
        let s = (x + 0.5 * self.extent) / dx;
        let j = s.floor();
        let u = s - j;
        let at = |k: i64| row[(k.rem_euclid(m as i64)) as usize];
        let j = j as i64;
        let (p0, p1, p2, p3) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
        let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
        let c = -0.5 * p0 + 0.5 * p2;
        let value = ((a * u + b) * u + c) * u + p1;
        let slope = ((3.0 * a * u + 2.0 * b) * u + c) / dx;
        (value, slope)
    }

    /// Bracketing slice indices, interpolation weight and slice spacing.
    fn bracket(&self, t: f64) -> (usize, usize, f64, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0, 0.0, f64::INFINITY);
        }
        if t >= self.times[n - 1] {
            return (n - 1, n - 1, 0.0, f64::INFINITY);
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let span = self.times[hi] - self.times[lo];
        (lo, hi, (t - self.times[lo]) / span, span)
    }
}

impl PotentialFn for TabulatedPotential {
    fn value(&self, t: f64, x: &[f64]) -> f64 {
        let (lo, hi, w, _) = self.bracket(t);
        let a = self.spatial(&self.samples[lo], x[0]).0;
        let b = self.spatial(&self.samples[hi], x[0]).0;
        (1.0 - w) * a + w * b
    }

    fn gradient(&self, t: f64, x: &[f64], out: &mut [f64]) {
        let (lo, hi, w, _) = self.bracket(t);
        let a = self.spatial(&self.samples[lo], x[0]).1;
        let b = self.spatial(&self.samples[hi], x[0]).1;
        out[0] = (1.0 - w) * a + w * b;
    }

    fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        let (lo, hi, _, span) = self.bracket(t);
        if lo == hi {
            return 0.0;
        }
        (self.spatial(&self.samples[hi], x[0]).0 - self.spatial(&self.samples[lo], x[0]).0) / span
    }
}

#[derive(Clone)]
pub struct CustomPotential(pub Arc<dyn PotentialFn>);

/// Custom potentials are equal only when they share the same instance.
impl PartialEq for CustomPotential {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Potential families.
///
/// Built-in traps are normalized so that `-2∇V_h = -(hω₀)²(x - center)`
/// inside the cutoff, i.e. `V_h = ¼ h²ω₀² |x - center|²`, and are multiplied
/// by a C² envelope equal to one for `|x - center| ≤ θ` and zero beyond `1.5θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialShape {
    Zero,
    /// Trap centred at `drift * t`; a zero drift gives a static trap.
    MovingTrap { omega0: f64, drift: Vec<f64>, cutoff: f64 },
    /// Trap at the origin with curvature modulated by `1 + δ cos ωt`.
    MathieuTrap { omega0: f64, delta: f64, omega: f64, cutoff: f64 },
    Tabulated(TabulatedPotential),
    #[serde(skip)]
    Custom(CustomPotential),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    /// Space-adiabatic parameter of `V_h(t, x) = V(t, h x)`.
    pub h: f64,
    #[serde(flatten)]
    pub shape: PotentialShape,
}

/// C² smoothstep envelope in the radius: `(value, d value / dr)`.
fn envelope(r: f64, cutoff: f64) -> (f64, f64) {
    if r <= cutoff {
        return (1.0, 0.0);
    }
    let width = 0.5 * cutoff;
    if r >= cutoff + width {
        return (0.0, 0.0);
    }
    let u = (r - cutoff) / width;
    let s = u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
    let ds = 30.0 * u * u * (1.0 - u) * (1.0 - u) / width;
    (1.0 - s, -ds)
}

/// `x - drift·t` in a stack buffer (dimension ≤ 3).
fn shifted(x: &[f64], drift: &[f64], t: f64) -> [f64; 3] {
    let mut y = [0.0; 3];
    for ((y, x), s) in y.iter_mut().zip(x).zip(drift) {
        *y = x - s * t;
    }
    y
}

/// `¼κ|y|² env(|y|)` and its gradient in `y`.
fn trap(kappa: f64, y: &[f64], cutoff: f64, grad: Option<&mut [f64]>) -> f64 {
    let r2: f64 = y.iter().map(|c| c * c).sum();
    let r = r2.sqrt();
    let (env, denv) = envelope(r, cutoff);
    let q = 0.25 * kappa * r2;
    if let Some(g) = grad {
        for (gj, yj) in g.iter_mut().zip(y) {
            let radial = if r > 0.0 { denv * yj / r } else { 0.0 };
            *gj = 0.5 * kappa * yj * env + q * radial;
        }
    }
    q * env
}

impl Potential {
    pub fn zero() -> Self {
        Potential { h: 1.0, shape: PotentialShape::Zero }
    }

    pub fn moving_trap(h: f64, omega0: f64, drift: Vec<f64>, cutoff: f64) -> Self {
        Potential { h, shape: PotentialShape::MovingTrap { omega0, drift, cutoff } }
    }

    pub fn static_trap(h: f64, omega0: f64, dim: usize, cutoff: f64) -> Self {
        Self::moving_trap(h, omega0, vec![0.0; dim], cutoff)
    }

    pub fn mathieu_trap(h: f64, omega0: f64, delta: f64, omega: f64, cutoff: f64) -> Self {
        Potential { h, shape: PotentialShape::MathieuTrap { omega0, delta, omega, cutoff } }
    }

    pub fn custom(h: f64, f: Arc<dyn PotentialFn>) -> Self {
        Potential { h, shape: PotentialShape::Custom(CustomPotential(f)) }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: &str| Err(LabError::InvalidParameter(m.to_string()));
        match &self.shape {
            PotentialShape::Zero | PotentialShape::Custom(_) => Ok(()),
            PotentialShape::MovingTrap { omega0, drift, cutoff } => {
                if !(self.h > 0.0 && self.h < 1.0) {
                    return bad("h must lie in (0, 1)");
                }
                if drift.len() != dim {
                    return bad("drift dimension does not match the grid");
                }
                if !(*omega0 >= 0.0 && *cutoff > 0.0) {
                    return bad("trap needs omega0 >= 0 and cutoff > 0");
                }
                Ok(())
            }
            PotentialShape::MathieuTrap { omega0, omega, cutoff, delta } => {
                if !(self.h > 0.0 && self.h < 1.0) {
                    return bad("h must lie in (0, 1)");
                }
                if !(*omega0 >= 0.0 && *cutoff > 0.0 && *omega > 0.0 && delta.abs() < 1.0) {
                    return bad("mathieu trap needs omega0 >= 0, omega > 0, cutoff > 0, |delta| < 1");
                }
                Ok(())
            }
            PotentialShape::Tabulated(tab) => {
                if dim != 1 {
                    return bad("tabulated potentials are one-dimensional");
                }
                tab.validate()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, PotentialShape::Zero)
    }

    /// Trap centre at time `t`, for the built-in traps.
    pub fn center(&self, t: f64, dim: usize) -> Option<Vec<f64>> {
        match &self.shape {
            PotentialShape::MovingTrap { drift, .. } => Some(drift.iter().map(|s| s * t).collect()),
            PotentialShape::MathieuTrap { .. } => Some(vec![0.0; dim]),
            _ => None,
        }
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        match &self.shape {
            PotentialShape::Zero => 0.0,
            PotentialShape::MovingTrap { omega0, drift, cutoff } => {
                let y = shifted(x, drift, t);
                trap(self.h * self.h * omega0 * omega0, &y[..x.len()], *cutoff, None)
            }
            PotentialShape::MathieuTrap { omega0, delta, omega, cutoff } => {
                let kappa = self.h * self.h * omega0 * omega0 * (1.0 + delta * (omega * t).cos());
                trap(kappa, x, *cutoff, None)
            }
            PotentialShape::Tabulated(tab) => tab.value(t, x),
            PotentialShape::Custom(c) => c.0.value(t, x),
        }
    }

    pub fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        match &self.shape {
            PotentialShape::Zero => out.iter_mut().for_each(|g| *g = 0.0),
            PotentialShape::MovingTrap { omega0, drift, cutoff } => {
                let y = shifted(x, drift, t);
                trap(self.h * self.h * omega0 * omega0, &y[..x.len()], *cutoff, Some(out));
            }
            PotentialShape::MathieuTrap { omega0, delta, omega, cutoff } => {
                let kappa = self.h * self.h * omega0 * omega0 * (1.0 + delta * (omega * t).cos());
                trap(kappa, x, *cutoff, Some(out));
            }
            PotentialShape::Tabulated(tab) => tab.gradient(t, x, out),
            PotentialShape::Custom(c) => c.0.gradient(t, x, out),
        }
    }

    pub fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.gradient_into(t, x, &mut g);
        g
    }

    pub fn time_derivative(&self, t: f64, x: &[f64]) -> f64 {
        match &self.shape {
            PotentialShape::Zero => 0.0,
            PotentialShape::MovingTrap { drift, .. } => {
                let g = self.gradient(t, x);
                -g.iter().zip(drift).map(|(g, s)| g * s).sum::<f64>()
            }
            PotentialShape::MathieuTrap { omega0, delta, omega, cutoff } => {
                let dkappa = -self.h * self.h * omega0 * omega0 * delta * omega * (omega * t).sin();
                trap(dkappa, x, *cutoff, None)
            }
            PotentialShape::Tabulated(tab) => tab.time_derivative(t, x),
            PotentialShape::Custom(c) => c.0.time_derivative(t, x),
        }
    }

    /// `Some(c(t))` when `V(t, x) = c(t) V(0, x)`.
    pub fn time_factor(&self, t: f64) -> Option<f64> {
        match &self.shape {
            PotentialShape::MathieuTrap { delta, omega, .. } => {
                Some((1.0 + delta * (omega * t).cos()) / (1.0 + delta))
            }
            _ if self.is_time_independent() => Some(1.0),
            _ => None,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        match &self.shape {
            PotentialShape::Zero => true,
            PotentialShape::MovingTrap { drift, .. } => drift.iter().all(|&s| s == 0.0),
            PotentialShape::MathieuTrap { delta, .. } => *delta == 0.0,
            PotentialShape::Tabulated(tab) => tab.times.len() == 1,
            PotentialShape::Custom(_) => false,
        }
    }

    pub fn sample(&self, t: f64, grid: &Grid) -> Vec<f64> {
        if self.is_zero() {
            return vec![0.0; grid.len()];
        }
        let coords = grid.coordinates();
        let mut x = vec![0.0; grid.dim()];
        (0..grid.len())
            .map(|j| {
                for ax in 0..grid.dim() {
                    x[ax] = coords[ax][j];
                }
                self.value(t, &x)
            })
            .collect()
    }

    /// Gradient samples, one `Vec` per axis.
    pub fn sample_gradient(&self, t: f64, grid: &Grid) -> Vec<Vec<f64>> {
        let dim = grid.dim();
        let mut out = vec![vec![0.0; grid.len()]; dim];
        if self.is_zero() {
            return out;
        }
        let coords = grid.coordinates();
        let mut x = vec![0.0; dim];
        let mut g = vec![0.0; dim];
        for j in 0..grid.len() {
            for ax in 0..dim {
                x[ax] = coords[ax][j];
            }
            self.gradient_into(t, &x, &mut g);
            for ax in 0..dim {
                out[ax][j] = g[ax];
            }
        }
        out
    }

    pub fn sample_time_derivative(&self, t: f64, grid: &Grid) -> Vec<f64> {
        if self.is_time_independent() {
            return vec![0.0; grid.len()];
        }
        let coords = grid.coordinates();
        let mut x = vec![0.0; grid.dim()];
        (0..grid.len())
            .map(|j| {
                for ax in 0..grid.dim() {
                    x[ax] = coords[ax][j];
                }
                self.time_derivative(t, &x)
            })
            .collect()
    }

    /// Taylor remainder `R_V(x) = V(t, x+a) - V(t, a) - ∇V(t, a)·x` sampled
    /// on the co-moving grid.
    pub fn rv_residual(&self, t: f64, a: &[f64], grid: &Grid) -> ComplexField {
        let v0 = self.value(t, a);
        let g0 = self.gradient(t, a);
        let mut y = vec![0.0; a.len()];
        ComplexField::from_real_fn(*grid, |x| {
            for ax in 0..a.len() {
                y[ax] = x[ax] + a[ax];
            }
            let lin: f64 = g0.iter().zip(x).map(|(g, x)| g * x).sum();
            self.value(t, &y) - v0 - lin
        })
    }
}
