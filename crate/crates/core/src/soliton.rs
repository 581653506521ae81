//! Ground-state profiles `η_μ` of `(-Δ + μ)η = f(η)`, the tangent space of
//! the soliton manifold and the symplectic Gram matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{ComplexField, Grid};
use crate::model::Nonlinearity;
use crate::snapshot::Snapshot;
use crate::transform::{apply_transform, wrap_phase, TransformParams};

/// Manifold coordinates `σ = (a, v, γ, μ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationParams {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
    pub mu: f64,
}

impl ModulationParams {
    pub fn new(a: Vec<f64>, v: Vec<f64>, gamma: f64, mu: f64) -> Result<Self> {
        if a.len() != v.len() {
            return Err(LabError::InvalidParameter("a and v must have the same dimension".into()));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(LabError::InvalidParameter(format!("mu = {mu} must be > 0")));
        }
        Ok(ModulationParams { a, v, gamma: wrap_phase(gamma), mu })
    }

    pub fn at_rest(dim: usize, mu: f64) -> Self {
        ModulationParams { a: vec![0.0; dim], v: vec![0.0; dim], gamma: 0.0, mu }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn transform(&self) -> Result<TransformParams> {
        TransformParams::new(self.a.clone(), self.v.clone(), self.gamma)
    }

    /// Flat coordinates in basis order `(a, v, γ, μ)`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.dim() + 2);
        out.extend_from_slice(&self.a);
        out.extend_from_slice(&self.v);
        out.push(self.gamma);
        out.push(self.mu);
        out
    }

    /// Inverse of [`to_vec`](Self::to_vec); `γ` is kept unreduced.
    pub fn from_slice(x: &[f64]) -> Self {
        let n = (x.len() - 2) / 2;
        ModulationParams { a: x[..n].to_vec(), v: x[n..2 * n].to_vec(), gamma: x[2 * n], mu: x[2 * n + 1] }
    }
}

/// Solver settings for the stationary problem.
#[derive(Clone, Debug)]
pub struct ProfileSolver {
    pub max_iterations: usize,
    /// Accept when `‖(-Δ+μ)η - f(η)‖ ≤ tolerance · ‖η‖`.
    pub tolerance: f64,
    /// Relative step `δμ/μ` for the μ-derivatives.
    pub mu_step: f64,
}

impl Default for ProfileSolver {
    fn default() -> Self {
        ProfileSolver { max_iterations: 2000, tolerance: 1e-8, mu_step: 1e-4 }
    }
}

/// Stationary solution with its μ-derivatives.
#[derive(Clone, Debug)]
pub struct SolitonProfile {
    pub mu: f64,
    pub eta: ComplexField,
    /// `m(μ) = ½∫η²`.
    pub mass: f64,
    /// `m'(μ)`, by centered difference of re-solved profiles.
    pub mass_slope: f64,
    /// `‖(-Δ+μ)η - f(η)‖_{L²}`.
    pub residual: f64,
    /// `∂_μ η` (centered difference).
    pub d_mu_eta: ComplexField,
    /// `∂²_μ η` (centered second difference).
    pub d2_mu_eta: ComplexField,
    pub nonlinearity: Nonlinearity,
}

/// Radial sech-type initial guess; exact for the 1D power law.
fn initial_guess(nl: &Nonlinearity, mu: f64, grid: &Grid) -> ComplexField {
    let rmu = mu.sqrt();
    match *nl {
        Nonlinearity::LocalPower { lambda, s } => {
            let amp = (mu * (s + 2.0) / (2.0 * lambda)).powf(1.0 / s);
            ComplexField::from_real_fn(*grid, |x| {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                amp * (0.5 * s * rmu * r).cosh().powf(-2.0 / s)
            })
        }
        Nonlinearity::Hartree { lambda, .. } => ComplexField::from_real_fn(*grid, |x| {
            let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            (2.0 * mu / lambda).sqrt() / (rmu * r).cosh()
        }),
    }
}

/// Average over the reflections `x_j ↦ -x_j` of every axis; grid index
/// `i` mirrors to `(M - i) mod M`.
fn symmetrize(grid: &Grid, mut u: Vec<f64>) -> Vec<f64> {
    let m = grid.points();
    let mut idx = vec![0; grid.dim()];
    for ax in 0..grid.dim() {
        let stride = m.pow((grid.dim() - 1 - ax) as u32);
        let src = u.clone();
        for (flat, out) in u.iter_mut().enumerate() {
            grid.multi_index(flat, &mut idx);
            let j = idx[ax];
            let mirror = flat - j * stride + ((m - j) % m) * stride;
            *out = 0.5 * (src[flat] + src[mirror]);
        }
    }
    u
}

/// Petviashvili iteration `η̂ ← M^γ f̂(η)/(|k|²+μ)` with the stabilizing
/// factor `M = ⟨η,(-Δ+μ)η⟩/⟨η,f(η)⟩` and `γ = p/(p-1)`.
///
/// Runs until the residual stagnates at roundoff and returns the best iterate.
fn petviashvili(
    nl: &Nonlinearity,
    mu: f64,
    mut eta: ComplexField,
    solver: &ProfileSolver,
) -> Result<(ComplexField, f64)> {
    let grid = *eta.grid();
    let k2 = grid.k_squared();
    let p = nl.homogeneity();
    let gamma = p / (p - 1.0);
    // Parseval: ∫|u|² = dv/len Σ|û|²
    let parseval = grid.cell_volume() / grid.len() as f64;
    let mut best: Option<(ComplexField, f64)> = None;
    let mut stalled = 0;
    for _ in 0..solver.max_iterations {
        let f = nl.apply(&eta);
        let eh = eta.fourier();
        let fh = f.fourier();
        let mut num = 0.0;
        let mut den = 0.0;
        let mut res = 0.0;
        for ((e, f), k) in eh.iter().zip(&fh).zip(&k2) {
            let l = k + mu;
            num += l * e.norm_sqr();
            den += (e * f.conj()).re;
            res += (l * e - f).norm_sqr();
        }
        let residual = (res * parseval).sqrt();
        let norm = eta.l2_norm();
        if !(den > 0.0) || !residual.is_finite() {
            return Err(LabError::ProfileNotConverged { iterations: solver.max_iterations, residual });
        }
        match &best {
            Some((_, r)) if residual >= *r => stalled += 1,
            _ => {
                stalled = 0;
                best = Some((eta.clone(), residual));
            }
        }
        if residual <= 1e-14 * norm || stalled >= 8 {
            break;
        }
        let scale = (num / den).powf(gamma);
        let next: Vec<Complex64> = fh.iter().zip(&k2).map(|(f, k)| f * (scale / (k + mu))).collect();
        let next = ComplexField::from_fourier(grid, next)?;
        eta = ComplexField::from_real(grid, &symmetrize(&grid, next.real_parts()))?;
    }
    let (eta, residual) = best.expect("at least one iteration");
    if residual > solver.tolerance * eta.l2_norm() {
        return Err(LabError::ProfileNotConverged { iterations: solver.max_iterations, residual });
    }
    Ok((eta, residual))
}

impl ProfileSolver {
    /// Solve for `η_μ` alone (no μ-derivatives), optionally from a warm start.
    pub fn solve_eta(
        &self,
        nl: &Nonlinearity,
        mu: f64,
        grid: &Grid,
        warm: Option<&ComplexField>,
    ) -> Result<(ComplexField, f64)> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(LabError::InvalidParameter(format!("mu = {mu} must be > 0")));
        }
        nl.validate(grid.dim())?;
        let start = match warm {
            Some(w) => {
                grid_check(grid, w)?;
                w.clone()
            }
            None => initial_guess(nl, mu, grid),
        };
        let start = ComplexField::from_real(*grid, &symmetrize(grid, start.real_parts()))?;
        petviashvili(nl, mu, start, self)
    }

    pub fn solve(&self, nl: &Nonlinearity, mu: f64, grid: &Grid) -> Result<SolitonProfile> {
        self.solve_warm(nl, mu, grid, None)
    }

    /// Full profile including `m'`, `∂_μη`, `∂²_μη`.
    pub fn solve_warm(
        &self,
        nl: &Nonlinearity,
        mu: f64,
        grid: &Grid,
        warm: Option<&ComplexField>,
    ) -> Result<SolitonProfile> {
        let (eta, residual) = self.solve_eta(nl, mu, grid, warm)?;
        let dmu = self.mu_step * mu;
        let (plus, _) = self.solve_eta(nl, mu + dmu, grid, Some(&eta))?;
        let (minus, _) = self.solve_eta(nl, mu - dmu, grid, Some(&eta))?;
        let mass = eta.charge();
        let mass_slope = (plus.charge() - minus.charge()) / (2.0 * dmu);
        if !(mass_slope > 0.0) {
            return Err(LabError::OrbitalInstability { slope: mass_slope });
        }
        let d_mu_eta = (&plus - &minus).scale(0.5 / dmu);
        let mut d2 = &plus + &minus;
        d2.axpy(Complex64::new(-2.0, 0.0), &eta);
        let d2_mu_eta = d2.scale(1.0 / (dmu * dmu));
        Ok(SolitonProfile { mu, eta, mass, mass_slope, residual, d_mu_eta, d2_mu_eta, nonlinearity: nl.clone() })
    }
}

fn grid_check(grid: &Grid, u: &ComplexField) -> Result<()> {
    if u.grid() != grid {
        return Err(LabError::GridMismatch);
    }
    Ok(())
}

/// Solve with default settings.
pub fn solve_profile(nl: &Nonlinearity, mu: f64, grid: &Grid) -> Result<SolitonProfile> {
    ProfileSolver::default().solve(nl, mu, grid)
}

/// `(m(μ), m'(μ))`.
pub fn mass_and_slope(profile: &SolitonProfile) -> Result<(f64, f64)> {
    if !(profile.mass_slope > 0.0) {
        return Err(LabError::OrbitalInstability { slope: profile.mass_slope });
    }
    Ok((profile.mass, profile.mass_slope))
}

/// Tangent vectors of the soliton manifold at `η_μ`.
#[derive(Clone, Debug)]
pub struct TangentBasis {
    /// `-∂_j η`, real and odd.
    pub e_t: Vec<ComplexField>,
    /// `i x_j η`, imaginary and odd.
    pub e_b: Vec<ComplexField>,
    /// `iη`, imaginary and even.
    pub e_g: ComplexField,
    /// `∂_μ η`, real and even.
    pub e_s: ComplexField,
}

impl TangentBasis {
    pub fn new(profile: &SolitonProfile) -> Self {
        Self::from_fields(&profile.eta, &profile.d_mu_eta)
    }

    /// Basis built from `η` and `∂_μη`.
    pub fn from_fields(eta: &ComplexField, d_mu_eta: &ComplexField) -> Self {
        let dim = eta.grid().dim();
        let e_t = (0..dim).map(|ax| -&eta.partial(ax)).collect();
        let e_b = (0..dim).map(|ax| eta.mul_coordinate(ax).mul_i()).collect();
        TangentBasis { e_t, e_b, e_g: eta.mul_i(), e_s: d_mu_eta.clone() }
    }

    /// Vectors in the fixed order `(e_t…, e_b…, e_g, e_s)`.
    pub fn ordered(&self) -> Vec<&ComplexField> {
        self.e_t.iter().chain(&self.e_b).chain([&self.e_g, &self.e_s]).collect()
    }

    pub fn len(&self) -> usize {
        2 * self.e_t.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn tangent_basis(profile: &SolitonProfile) -> TangentBasis {
    TangentBasis::new(profile)
}

/// `L_μ w = (-Δ + μ) w - f'(η_μ) w`.
pub fn apply_linearization(profile: &SolitonProfile, w: &ComplexField) -> Result<ComplexField> {
    let mu = profile.mu;
    let mut out = w.fourier_multiply(|k2| k2 + mu);
    out -= &profile.nonlinearity.derivative_apply(&profile.eta, w)?;
    Ok(out)
}

/// Gram matrix `Ω_jk = ⟨e_j, i e_k⟩` in basis order.
pub fn gram_matrix(basis: &TangentBasis) -> DMatrix<f64> {
    let e = basis.ordered();
    let n = e.len();
    let ie: Vec<ComplexField> = e.iter().map(|f| f.mul_i()).collect();
    DMatrix::from_fn(n, n, |j, k| e[j].dot(&ie[k]))
}

pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// The symplectic Gram matrix of the tangent space; antisymmetric, with the
/// `(e_t, e_b)` block equal to `∓m·1` and the `(e_g, e_s)` block `±m'`.
pub fn omega_inv_matrix(profile: &SolitonProfile) -> Result<DMatrix<f64>> {
    let omega = gram_matrix(&TangentBasis::new(profile));
    let condition = condition_number(&omega);
    if !(condition <= 1e12) {
        return Err(LabError::IllConditioned { condition });
    }
    Ok(omega)
}

/// `η_σ = T_{avγ} η_μ`.
pub fn eta_sigma(profile: &SolitonProfile, sigma: &ModulationParams) -> Result<ComplexField> {
    Ok(apply_transform(&profile.eta, &sigma.transform()?)?.field)
}

impl SolitonProfile {
    pub fn grid(&self) -> &Grid {
        self.eta.grid()
    }

    /// Snapshot with metadata `mu`, `lambda`, `s` (or `kernel_width`), `residual`.
    pub fn to_snapshot(&self) -> Snapshot {
        let snap = Snapshot::new(0.0, self.eta.clone())
            .with_metadata("mu", self.mu)
            .with_metadata("lambda", self.nonlinearity.lambda())
            .with_metadata("residual", self.residual);
        match &self.nonlinearity {
            Nonlinearity::LocalPower { s, .. } => snap.with_metadata("s", *s),
            Nonlinearity::Hartree { kernel, .. } => {
                let crate::model::Kernel::Gaussian { width } = kernel;
                snap.with_metadata("kernel_width", *width)
            }
        }
    }
}
