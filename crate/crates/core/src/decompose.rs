//! Skew-orthogonal decomposition `ψ = T_{avγ}(η_μ + w)` with
//! `⟨w, i e_k(μ)⟩ = 0`, modulation residuals `α`, the corrected modulation
//! law, and the Lyapunov/coercivity diagnostics.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolve::differentiate;
use crate::field::{ComplexField, Grid};
use crate::model::{Model, Nonlinearity, Potential};
use crate::modulate::{indexed, SigmaRates};
use crate::soliton::{apply_linearization, gram_matrix, ModulationParams, ProfileSolver, SolitonProfile, TangentBasis};
use crate::transform::{inverse_transform, wrap_phase, TransformParams};

/// Profile and tangent data at one value of μ.
#[derive(Debug)]
pub struct ChartPoint {
    pub profile: SolitonProfile,
    pub basis: TangentBasis,
    /// `i e_k` in basis order; the constraint covectors.
    pub constraint_vectors: Vec<ComplexField>,
    /// `Ω_jk = ⟨e_j, i e_k⟩`.
    pub omega: DMatrix<f64>,
}

impl ChartPoint {
    pub fn new(profile: SolitonProfile) -> Self {
        let basis = TangentBasis::new(&profile);
        let constraint_vectors = basis.ordered().iter().map(|e| e.mul_i()).collect();
        let omega = gram_matrix(&basis);
        ChartPoint { profile, basis, constraint_vectors, omega }
    }

    pub fn mu(&self) -> f64 {
        self.profile.mu
    }

    pub fn eta(&self) -> &ComplexField {
        &self.profile.eta
    }

    /// `G_k = ⟨w, i e_k⟩`.
    pub fn constraints(&self, w: &ComplexField) -> Vec<f64> {
        self.constraint_vectors.iter().map(|c| w.dot(c)).collect()
    }

    /// L²-orthogonal projection onto `X_μ = {w : ⟨w, i e_k⟩ = 0}`.
    pub fn project(&self, w: &ComplexField) -> ComplexField {
        let c = &self.constraint_vectors;
        let n = c.len();
        let gram = DMatrix::from_fn(n, n, |j, k| c[j].dot(&c[k]));
        let rhs = DVector::from_iterator(n, c.iter().map(|c| c.dot(w)));
        let coef = gram.lu().solve(&rhs).expect("tangent vectors are independent");
        let mut out = w.clone();
        for (ck, a) in c.iter().zip(coef.iter()) {
            out.axpy(Complex64::new(-a, 0.0), ck);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct SkewOptions {
    /// Tube radius δ in H¹.
    pub tube_radius: f64,
    /// Converged when `max_k |G_k| ≤ tolerance · ‖ψ‖_{L²}`.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Centered-difference step for the Newton Jacobian.
    pub fd_step: f64,
}

impl Default for SkewOptions {
    fn default() -> Self {
        SkewOptions { tube_radius: 0.3, tolerance: 1e-10, max_iterations: 50, fd_step: 1e-6 }
    }
}

const CACHE_SIZE: usize = 48;

/// Soliton manifold over a fixed nonlinearity and grid, caching profiles by μ.
#[derive(Debug)]
pub struct ManifoldChart {
    nonlinearity: Nonlinearity,
    grid: Grid,
    solver: ProfileSolver,
    pub options: SkewOptions,
    cache: Mutex<VecDeque<Arc<ChartPoint>>>,
}

impl ManifoldChart {
    pub fn new(nonlinearity: Nonlinearity, grid: Grid) -> Result<Self> {
        nonlinearity.validate(grid.dim())?;
        Ok(ManifoldChart {
            nonlinearity,
            grid,
            solver: ProfileSolver::default(),
            options: SkewOptions::default(),
            cache: Mutex::new(VecDeque::new()),
        })
    }

    pub fn with_options(mut self, options: SkewOptions) -> Self {
        self.options = options;
        self
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    /// Profile data at `mu`, solved on first use (warm-started from the
    /// nearest cached μ).
    pub fn point(&self, mu: f64) -> Result<Arc<ChartPoint>> {
        let warm = {
            let cache = self.cache.lock().expect("chart cache poisoned");
            if let Some(p) = cache.iter().find(|p| p.mu().to_bits() == mu.to_bits()) {
                return Ok(p.clone());
            }
            cache.iter().min_by(|a, b| (a.mu() - mu).abs().total_cmp(&(b.mu() - mu).abs())).cloned()
        };
        let profile = self.solver.solve_warm(&self.nonlinearity, mu, &self.grid, warm.as_ref().map(|p| p.eta()))?;
        let point = Arc::new(ChartPoint::new(profile));
        let mut cache = self.cache.lock().expect("chart cache poisoned");
        if cache.len() >= CACHE_SIZE {
            cache.pop_front();
        }
        cache.push_back(point.clone());
        Ok(point)
    }

    /// `η_σ = T_σ η_μ`.
    pub fn eta_sigma(&self, sigma: &ModulationParams) -> Result<ComplexField> {
        let p = self.point(sigma.mu)?;
        crate::soliton::eta_sigma(&p.profile, sigma)
    }
}

/// Output of [`skew_project`].
#[derive(Clone, Debug)]
pub struct Decomposition {
    /// `γ` reduced into `[0, 2π)`.
    pub sigma: ModulationParams,
    /// `γ` as tracked by the Newton iteration from the guess (unreduced).
    pub gamma_unwrapped: f64,
    /// Fluctuation in the co-moving frame.
    pub w: ComplexField,
    pub w_h1: f64,
    /// `max_k |⟨w, i e_k⟩|`.
    pub constraint_residual: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `‖w‖_{H¹}` exceeds the tube radius.
    pub tube_warning: bool,
    /// The input is not negligible on the periodic seam.
    pub seam_warning: bool,
}

fn params_of(x: &[f64]) -> Result<TransformParams> {
    let n = (x.len() - 2) / 2;
    TransformParams::new(x[..n].to_vec(), x[n..2 * n].to_vec(), x[2 * n])
}

fn max_abs(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Constraint values `⟨u - η, i e_k⟩` for a profile `η` and basis.
fn constraint_values(u: &ComplexField, eta: &ComplexField, c: &[ComplexField]) -> Vec<f64> {
    let w = u - eta;
    c.iter().map(|c| w.dot(c)).collect()
}

/// Taylor-shifted profile and constraint covectors at `μ + h`.
fn shifted_chart(p: &ChartPoint, h: f64) -> (ComplexField, Vec<ComplexField>) {
    let prof = &p.profile;
    let mut eta = prof.eta.clone();
    eta.axpy(Complex64::new(h, 0.0), &prof.d_mu_eta);
    eta.axpy(Complex64::new(0.5 * h * h, 0.0), &prof.d2_mu_eta);
    let mut es = prof.d_mu_eta.clone();
    es.axpy(Complex64::new(h, 0.0), &prof.d2_mu_eta);
    let basis = TangentBasis::from_fields(&eta, &es);
    let c = basis.ordered().iter().map(|e| e.mul_i()).collect();
    (eta, c)
}

/// Damped Newton solve of `⟨T_σ⁻¹ψ - η_μ, i e_k(μ)⟩ = 0` starting at `guess`.
pub fn skew_project(psi: &ComplexField, guess: &ModulationParams, chart: &ManifoldChart) -> Result<Decomposition> {
    let opts = &chart.options;
    if psi.grid() != chart.grid() || guess.dim() != psi.grid().dim() {
        return Err(LabError::GridMismatch);
    }
    let norm = psi.l2_norm();
    let seam_warning = !psi.satisfies_tube_condition();
    let start = chart.point(guess.mu)?;
    let dist = (psi - &crate::soliton::eta_sigma(&start.profile, guess)?).h1_norm();
    if !(dist <= opts.tube_radius) {
        return Err(LabError::NotInTube { residual: dist });
    }
    let tol = opts.tolerance * norm;
    let n = guess.to_vec().len();
    let mut x = guess.to_vec();
    let eval = |x: &[f64], p: &ChartPoint| -> Result<(ComplexField, Vec<f64>)> {
        let u = inverse_transform(psi, &params_of(x)?)?.field;
        let g = constraint_values(&u, p.eta(), &p.constraint_vectors);
        Ok((u, g))
    };
    let mut point = start;
    let (mut u, mut g) = eval(&x, &point)?;
    let mut iterations = 0;
    let mut polished = false;
    let h = opts.fd_step;
    while iterations < opts.max_iterations {
        let res = max_abs(&g);
        if res <= tol && polished {
            break;
        }
        let reached = res <= tol;
        iterations += 1;
        // Jacobian by centered differences; the μ column uses the Taylor-shifted chart
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let (gp, gm) = if j == n - 1 {
                let (ep, cp) = shifted_chart(&point, h);
                let (em, cm) = shifted_chart(&point, -h);
                (constraint_values(&u, &ep, &cp), constraint_values(&u, &em, &cm))
            } else {
                let mut xp = x.clone();
                xp[j] += h;
                let mut xm = x.clone();
                xm[j] -= h;
                (eval(&xp, &point)?.1, eval(&xm, &point)?.1)
            };
            for k in 0..n {
                jac[(k, j)] = (gp[k] - gm[k]) / (2.0 * h);
            }
        }
        let rhs = DVector::from_iterator(n, g.iter().map(|v| -v));
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(LabError::NotInTube { residual: res });
        };
        let mut lambda = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(x, d)| x + lambda * d).collect();
            if trial[n - 1] > 0.0 {
                let p = chart.point(trial[n - 1])?;
                let (ut, gt) = eval(&trial, &p)?;
                let rt = max_abs(&gt);
                if rt < res || (reached && rt <= tol) {
                    break Some((trial, p, ut, gt));
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 || reached {
                break None;
            }
        };
        match accepted {
            Some((xt, p, ut, gt)) => {
                x = xt;
                point = p;
                u = ut;
                g = gt;
            }
            None if reached => {}
            None => break,
        }
        if reached {
            polished = true;
        }
    }
    let res = max_abs(&g);
    if !(res <= tol) {
        return Err(LabError::NotInTube { residual: res });
    }
    let w = &u - point.eta();
    let w_h1 = w.h1_norm();
    let gamma_unwrapped = x[n - 2];
    let mut sigma = ModulationParams::from_slice(&x);
    sigma.gamma = wrap_phase(gamma_unwrapped);
    Ok(Decomposition {
        sigma,
        gamma_unwrapped,
        w,
        w_h1,
        constraint_residual: res,
        converged: true,
        iterations,
        tube_warning: w_h1 > opts.tube_radius,
        seam_warning,
    })
}

/// `α` residuals sampled along a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlphaSeries {
    pub t: Vec<f64>,
    /// `(α_1..α_N, α_{N+1}..α_{2N}, α_{2N+1}, α_{2N+2})` per sample.
    pub alpha: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl AlphaSeries {
    /// `sup_t max_i |α_i(t)|`.
    pub fn sup_norm(&self) -> f64 {
        self.alpha.iter().map(|a| max_abs(a)).fold(0.0, f64::max)
    }
}

/// Remove `2π` jumps so that consecutive differences lie in `(-π, π]`.
pub fn unwrap_phase(gamma: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(gamma.len());
    let mut offset = 0.0;
    for (i, &g) in gamma.iter().enumerate() {
        if i > 0 {
            let prev = gamma[i - 1];
            let d = g - prev;
            offset -= TAU * ((d + PI) / TAU).floor();
        }
        out.push(g + offset);
    }
    out
}

/// `α` from a sampled `σ(t)` by three-point differences:
/// `α_a = ȧ - v`, `α_v = -½v̇ - ∇V(t,a)`,
/// `α_γ = μ - ¼v² + ½ȧ·v - V(t,a) - γ̇`, `α_μ = -μ̇`.
pub fn alpha_from_trajectory(times: &[f64], sigmas: &[ModulationParams], potential: &Potential) -> Result<AlphaSeries> {
    let n = times.len();
    if n < 3 || sigmas.len() != n {
        return Err(LabError::TooFewSamples { needed: 3, got: n.min(sigmas.len()) });
    }
    let dim = sigmas[0].dim();
    let gamma = unwrap_phase(&sigmas.iter().map(|s| s.gamma).collect::<Vec<_>>());
    let col = |f: &dyn Fn(&ModulationParams) -> f64| sigmas.iter().map(f).collect::<Vec<f64>>();
    let da: Vec<Vec<f64>> = (0..dim).map(|j| differentiate(times, &col(&|s| s.a[j]))).collect();
    let dv: Vec<Vec<f64>> = (0..dim).map(|j| differentiate(times, &col(&|s| s.v[j]))).collect();
    let dg = differentiate(times, &gamma);
    let dmu = differentiate(times, &col(&|s| s.mu));
    let mut alpha = Vec::with_capacity(n);
    for i in 0..n {
        let s = &sigmas[i];
        let t = times[i];
        let grad = potential.gradient(t, &s.a);
        let mut a = Vec::with_capacity(2 * dim + 2);
        a.extend(da.iter().zip(&s.v).map(|(d, v)| d[i] - v));
        a.extend(dv.iter().zip(&grad).map(|(d, g)| -0.5 * d[i] - g));
        let v2: f64 = s.v.iter().map(|v| v * v).sum();
        let adv: f64 = (0..dim).map(|j| da[j][i] * s.v[j]).sum();
        a.push(s.mu - 0.25 * v2 + 0.5 * adv - potential.value(t, &s.a) - dg[i]);
        a.push(-dmu[i]);
        alpha.push(a);
    }
    let mut warnings = Vec::new();
    let max_step = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if dg.iter().any(|r| r.abs() * max_step > 0.5 * PI) {
        warnings.push("phase advances more than π/2 between samples; γ unwrapping is unreliable".into());
    }
    // third differences estimate the truncation error τ²/6 |y'''| of each derivative
    if n >= 4 {
        let mut est = 0.0f64;
        let mut comps: Vec<Vec<f64>> = Vec::new();
        for j in 0..dim {
            comps.push(col(&|s| s.a[j]));
            comps.push(col(&|s| s.v[j]));
        }
        comps.push(gamma.clone());
        comps.push(col(&|s| s.mu));
        for y in &comps {
            for i in 0..n - 3 {
                // third divided difference equals y'''/6 at some interior point
                let t = &times[i..i + 4];
                let d1: Vec<f64> = (0..3).map(|j| (y[i + j + 1] - y[i + j]) / (t[j + 1] - t[j])).collect();
                let d2: Vec<f64> = (0..2).map(|j| (d1[j + 1] - d1[j]) / (t[j + 2] - t[j])).collect();
                let d3 = (d2[1] - d2[0]) / (t[3] - t[0]);
                let tau = (t[3] - t[0]) / 3.0;
                est = est.max(d3.abs() * tau * tau);
            }
        }
        let sup = alpha.iter().map(|a| max_abs(a)).fold(0.0, f64::max);
        if est > sup && est > 1e-10 {
            warnings.push(format!(
                "differencing error estimate {est:.3e} exceeds sup|alpha| = {sup:.3e}; sample more densely"
            ));
        }
    }
    Ok(AlphaSeries { t: times.to_vec(), alpha, warnings })
}

/// `N_μ(w) = f(η+w) - f(η) - f'(η)w`.
pub fn nonlinear_remainder(nl: &Nonlinearity, eta: &ComplexField, w: &ComplexField) -> Result<ComplexField> {
    let u = eta + w;
    let mut out = nl.apply(&u);
    out -= &nl.apply(eta);
    out -= &nl.derivative_apply(eta, w)?;
    Ok(out)
}

/// The modulation law with all correction terms: solves
/// `(A + K) α = b` with `A_kj = ⟨L_jη, i e_k⟩`, `b_k = ⟨e_k, N_μ(w) + R_V(η+w)⟩`
/// and the `O(w)` coupling `K` by two fixed-point sweeps from `α = 0`,
/// then returns `(ȧ, v̇, γ̇, μ̇)`.
pub fn corrected_rhs(decomp: &Decomposition, t: f64, potential: &Potential, chart: &ManifoldChart) -> Result<SigmaRates> {
    let alpha = corrected_alpha(decomp, t, potential, chart)?;
    Ok(rates_from_alpha(&decomp.sigma, &alpha, t, potential))
}

/// `(ȧ, v̇, γ̇, μ̇)` from `α` and `σ`.
pub fn rates_from_alpha(sigma: &ModulationParams, alpha: &[f64], t: f64, potential: &Potential) -> SigmaRates {
    let dim = sigma.dim();
    let grad = potential.gradient(t, &sigma.a);
    let a: Vec<f64> = (0..dim).map(|j| sigma.v[j] + alpha[j]).collect();
    let v: Vec<f64> = (0..dim).map(|j| -2.0 * (grad[j] + alpha[dim + j])).collect();
    let v2: f64 = sigma.v.iter().map(|v| v * v).sum();
    let adv: f64 = (0..dim).map(|j| a[j] * sigma.v[j]).sum();
    let gamma = sigma.mu - 0.25 * v2 + 0.5 * adv - potential.value(t, &sigma.a) - alpha[2 * dim];
    SigmaRates { a, v, gamma, mu: -alpha[2 * dim + 1] }
}

/// `α` predicted by the projected equation for `w` (see [`corrected_rhs`]).
pub fn corrected_alpha(decomp: &Decomposition, t: f64, potential: &Potential, chart: &ManifoldChart) -> Result<Vec<f64>> {
    let point = chart.point(decomp.sigma.mu)?;
    let prof = &point.profile;
    let grid = *prof.grid();
    let dim = grid.dim();
    let n = 2 * dim + 2;
    let w = &decomp.w;
    let e = point.basis.ordered();
    let c = &point.constraint_vectors;
    // generators applied to η: (∂_j η, i x_j η, iη, ∂_μη)
    let mut l_eta: Vec<ComplexField> = point.basis.e_t.iter().map(|f| -f).collect();
    l_eta.extend(point.basis.e_b.iter().cloned());
    l_eta.push(point.basis.e_g.clone());
    l_eta.push(point.basis.e_s.clone());
    let mut l_w: Vec<ComplexField> = (0..dim).map(|j| w.partial(j)).collect();
    l_w.extend((0..dim).map(|j| w.mul_coordinate(j).mul_i()));
    l_w.push(w.mul_i());
    // ∂_μ e_k = (-∇e_s, i x e_s, i e_s, ∂²_μη)
    let es = &prof.d_mu_eta;
    let mut de: Vec<ComplexField> = (0..dim).map(|j| -&es.partial(j)).collect();
    de.extend((0..dim).map(|j| es.mul_coordinate(j).mul_i()));
    de.push(es.mul_i());
    de.push(prof.d2_mu_eta.clone());
    let a_mat = DMatrix::from_fn(n, n, |k, j| l_eta[j].dot(&c[k]));
    let k_mat = DMatrix::from_fn(n, n, |k, j| if j < n - 1 { l_w[j].dot(&c[k]) } else { -w.dot(&de[k].mul_i()) });
    let rv = potential.rv_residual(t, &decomp.sigma.a, &grid).real_parts();
    let mut source = nonlinear_remainder(&prof.nonlinearity, &prof.eta, w)?;
    source += &(&prof.eta + w).mul_real(&rv);
    let b = DVector::from_iterator(n, e.iter().map(|e| e.dot(&source)));
    let a_inv = a_mat.clone().try_inverse().ok_or(LabError::IllConditioned { condition: f64::INFINITY })?;
    let iter = &a_inv * &k_mat;
    let factor = iter.norm();
    if !(factor < 1.0) {
        return Err(LabError::FixedPointDivergence { factor });
    }
    let base = &a_inv * &b;
    let mut alpha = DVector::zeros(n);
    for _ in 0..2 {
        alpha = &base - &iter * &alpha;
    }
    Ok(alpha.iter().copied().collect())
}

/// `ε_μ(u) = ½∫(|∇u|² + μ|u|²) - F(u)`.
pub fn energy_functional(u: &ComplexField, mu: f64, nl: &Nonlinearity) -> f64 {
    0.5 * (u.gradient_norm_sq() + mu * u.l2_norm_sq()) - nl.primitive(u)
}

/// `C_μ(η+w, η) = ε_μ(η+w) - ε_μ(η)`.
pub fn lyapunov_value(decomp: &Decomposition, chart: &ManifoldChart) -> Result<f64> {
    let p = chart.point(decomp.sigma.mu)?;
    Ok(lyapunov_of(&p.profile, &decomp.w))
}

pub fn lyapunov_of(profile: &SolitonProfile, w: &ComplexField) -> f64 {
    let nl = &profile.nonlinearity;
    energy_functional(&(&profile.eta + w), profile.mu, nl) - energy_functional(&profile.eta, profile.mu, nl)
}

/// `⟨w, L_μ w⟩`.
pub fn coercivity_quadform(w: &ComplexField, profile: &SolitonProfile) -> Result<f64> {
    Ok(w.dot(&apply_linearization(profile, w)?))
}

#[derive(Clone, Debug)]
pub struct RhoEstimate {
    pub rho: f64,
    /// Minimizer, normalized in H¹.
    pub mode: ComplexField,
    pub iterations: usize,
}

fn h1_apply(w: &ComplexField) -> ComplexField {
    w.fourier_multiply(|k2| 1.0 + k2)
}

/// Preconditioned CG for `P L P y = r` on `X_μ`.
fn projected_pcg(point: &ChartPoint, r: &ComplexField, tol: f64, max_iter: usize) -> Result<ComplexField> {
    let prof = &point.profile;
    let mu = prof.mu;
    let op = |x: &ComplexField| -> Result<ComplexField> { Ok(point.project(&apply_linearization(prof, x)?)) };
    let prec = |x: &ComplexField| point.project(&x.fourier_multiply(|k2| 1.0 / (k2 + mu)));
    let mut x = ComplexField::zeros(*r.grid());
    let mut res = r.clone();
    let mut z = prec(&res);
    let mut p = z.clone();
    let mut rz = res.dot(&z);
    let r0 = r.l2_norm();
    for _ in 0..max_iter {
        if res.l2_norm() <= tol * r0 {
            break;
        }
        let ap = op(&p)?;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(LabError::CoercivityViolated { rho: pap / p.h1_norm_sq() });
        }
        let alpha = rz / pap;
        x.axpy(Complex64::new(alpha, 0.0), &p);
        res.axpy(Complex64::new(-alpha, 0.0), &ap);
        z = prec(&res);
        let rz_new = res.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p = &z + &(&p * beta);
    }
    Ok(x)
}

/// `ρ = min_{w ∈ X_μ} ⟨w, L_μw⟩ / ‖w‖²_{H¹}` by projected inverse iteration on
/// the pencil `(P L P, P(1-Δ)P)`.
pub fn rho_estimate(point: &ChartPoint) -> Result<RhoEstimate> {
    let grid = *point.eta().grid();
    // smooth start with components along every symmetry class
    let mut x = point.project(&ComplexField::from_fn(grid, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let g = (-0.25 * r2).exp();
        Complex64::new(g * (1.0 + x[0]), g * (0.5 - x[0] + 0.3 * r2))
    }));
    x = x.scale(1.0 / x.h1_norm());
    let mut rho = f64::NAN;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it + 1;
        let rhs = point.project(&h1_apply(&x));
        let y = projected_pcg(point, &rhs, 1e-12, 500)?;
        x = y.scale(1.0 / y.h1_norm());
        let next = coercivity_quadform(&x, &point.profile)?;
        let done = (next - rho).abs() <= 1e-13 * next.abs();
        rho = next;
        if done {
            break;
        }
    }
    if !(rho > 0.0) {
        return Err(LabError::CoercivityViolated { rho });
    }
    Ok(RhoEstimate { rho, mode: x, iterations })
}

/// `|ε_μ(u) - [H_V(ψ) + ½(¼v²+μ)‖ψ‖² - ½v·⟨iψ,∇ψ⟩ - ½∫V|ψ|²]| / max(1, |ε_μ(u)|)`
/// with `u = T_σ⁻¹ψ`.
pub fn frame_energy_identity_check(psi: &ComplexField, decomp: &Decomposition, model: &Model, t: f64) -> Result<f64> {
    let sigma = &decomp.sigma;
    let u = inverse_transform(psi, &sigma.transform()?)?.field;
    let nl = &model.nonlinearity;
    let lhs = energy_functional(&u, sigma.mu, nl);
    let grid = *psi.grid();
    let v = model.potential.sample(t, &grid);
    let dv = grid.cell_volume();
    let vdens: f64 = v.iter().zip(psi.values()).map(|(v, z)| v * z.norm_sqr()).sum::<f64>() * dv;
    let h_v = 0.5 * (psi.gradient_norm_sq() + vdens) - nl.primitive(psi);
    let v2: f64 = sigma.v.iter().map(|v| v * v).sum();
    let ipsi = psi.mul_i();
    let cross: f64 = (0..grid.dim()).map(|j| sigma.v[j] * ipsi.dot(&psi.partial(j))).sum();
    let rhs = h_v + 0.5 * (0.25 * v2 + sigma.mu) * psi.l2_norm_sq() - 0.5 * cross - 0.5 * vdens;
    Ok((lhs - rhs).abs() / lhs.abs().max(1.0))
}

/// Random smooth field in `X_μ` with unit H¹ norm: a few complex Gaussian
/// bumps within two soliton widths of the origin, then projected.
pub fn random_skew_orthogonal(point: &ChartPoint, rng: &mut impl Rng) -> ComplexField {
    let grid = *point.eta().grid();
    let width = 1.0 / point.mu().sqrt();
    let bumps: Vec<(Vec<f64>, f64, Complex64)> = (0..4)
        .map(|_| {
            let c = (0..grid.dim()).map(|_| rng.random_range(-2.0..2.0) * width).collect();
            let s = rng.random_range(0.5..1.5) * width;
            let amp = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            (c, s, amp)
        })
        .collect();
    let raw = ComplexField::from_fn(grid, |x| {
        bumps
            .iter()
            .map(|(c, s, amp)| {
                let r2: f64 = x.iter().zip(c).map(|(x, c)| (x - c) * (x - c)).sum();
                amp * (-0.5 * r2 / (s * s)).exp()
            })
            .sum()
    });
    let w = point.project(&raw);
    w.scale(1.0 / w.h1_norm())
}

/// One row of the decomposition series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub t: f64,
    pub sigma: ModulationParams,
    pub w_h1: f64,
    pub constraint_residual: f64,
    pub alpha: Vec<f64>,
    pub lyapunov: f64,
}

pub fn decomposition_header(dim: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("a", dim));
    h.extend(indexed("v", dim));
    h.extend(["gamma", "mu", "w_h1", "constraint_residual"].map(String::from));
    h.extend((1..=2 * dim + 2).map(|j| format!("alpha_{j}")));
    h.push("lyapunov".into());
    h
}

pub fn write_decomposition_csv(rows: &[DecompositionRow], dim: usize, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(decomposition_header(dim))?;
    for r in rows {
        let mut rec = vec![r.t];
        rec.extend(r.sigma.to_vec());
        rec.extend([r.w_h1, r.constraint_residual]);
        rec.extend(&r.alpha);
        rec.push(r.lyapunov);
        out.write_record(rec.iter().map(|x| format!("{x:e}")))?;
    }
    out.flush()?;
    Ok(())
}

/// Convenience: `ψ = T_σ(η_μ + w)`.
pub fn compose_field(chart: &ManifoldChart, sigma: &ModulationParams, w: &ComplexField) -> Result<ComplexField> {
    let p = chart.point(sigma.mu)?;
    let u = &p.profile.eta + w;
    Ok(crate::transform::apply_transform(&u, &sigma.transform()?)?.field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PotentialFn;
    use crate::transform::apply_transform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chart(extent: f64, points: usize) -> ManifoldChart {
        ManifoldChart::new(Nonlinearity::cubic(), Grid::line(extent, points).unwrap()).unwrap()
    }

    fn sigma(a: f64, v: f64, gamma: f64, mu: f64) -> ModulationParams {
        ModulationParams::new(vec![a], vec![v], gamma, mu).unwrap()
    }

    #[test]
    fn round_trip_recovers_parameters_and_fluctuation() {
        let chart = chart(40.0, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = sigma(1.3, -0.4, 2.0, 1.1);
        let p = chart.point(1.1).unwrap();
        let w = random_skew_orthogonal(&p, &mut rng).scale(0.05);
        let psi = compose_field(&chart, &s, &w).unwrap();
        let guess = sigma(1.301, -0.399, 2.001, 1.101);
        let d = skew_project(&psi, &guess, &chart).unwrap();
        let err = s.to_vec().iter().zip(d.sigma.to_vec()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "sigma error {err:e}");
        assert!((&d.w - &w).h1_norm() < 1e-9);
        assert!(d.constraint_residual < 1e-10 * psi.l2_norm());
        assert!(!d.tube_warning);
    }

    #[test]
    fn far_field_is_rejected() {
        let chart = chart(40.0, 512);
        let p = chart.point(1.0).unwrap();
        let psi = p.eta().scale(2.0);
        let r = skew_project(&psi, &sigma(0.0, 0.0, 0.0, 1.0), &chart);
        assert!(matches!(r, Err(LabError::NotInTube { .. })));
    }

    #[test]
    fn phase_unwrapping_removes_jumps() {
        let g: Vec<f64> = (0..50).map(|i| wrap_phase(0.4 * i as f64)).collect();
        let u = unwrap_phase(&g);
        for (i, x) in u.iter().enumerate() {
            assert!((x - 0.4 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn free_soliton_trajectory_has_zero_alpha() {
        let (v, mu) = (0.6, 1.2);
        let times: Vec<f64> = (0..40).map(|i| 0.05 * i as f64 + 0.01 * (i % 3) as f64).collect();
        let sig: Vec<_> =
            times.iter().map(|&t| sigma(0.5 + v * t, v, wrap_phase((mu + 0.25 * v * v) * t), mu)).collect();
        let al = alpha_from_trajectory(&times, &sig, &Potential::zero()).unwrap();
        assert!(al.sup_norm() < 1e-12, "{}", al.sup_norm());
        assert!(al.warnings.is_empty());
        assert!(alpha_from_trajectory(&times[..2], &sig[..2], &Potential::zero()).is_err());
    }

    #[derive(Debug)]
    struct Cubic(f64);

    impl PotentialFn for Cubic {
        fn value(&self, _: f64, x: &[f64]) -> f64 {
            self.0 * x[0].powi(3)
        }
        fn gradient(&self, _: f64, x: &[f64], out: &mut [f64]) {
            out[0] = 3.0 * self.0 * x[0] * x[0];
        }
        fn time_derivative(&self, _: f64, _: &[f64]) -> f64 {
            0.0
        }
    }

    #[test]
    fn corrected_law_matches_momentum_balance_on_the_manifold() {
        let chart = chart(40.0, 1024);
        let c = 1e-3;
        let pot = Potential::custom(0.1, std::sync::Arc::new(Cubic(c)));
        let s = sigma(0.7, 0.3, 0.0, 1.0);
        let p = chart.point(1.0).unwrap();
        let d = Decomposition {
            sigma: s.clone(),
            gamma_unwrapped: 0.0,
            w: ComplexField::zeros(*chart.grid()),
            w_h1: 0.0,
            constraint_residual: 0.0,
            converged: true,
            iterations: 0,
            tube_warning: false,
            seam_warning: false,
        };
        let rates = corrected_rhs(&d, 0.0, &pot, &chart).unwrap();
        let x2: f64 = p.eta().mul_coordinate(0).l2_norm_sq();
        let m = p.profile.mass;
        let expected = -2.0 * 3.0 * c * 0.49 - 3.0 * c * x2 / m;
        assert!((rates.v[0] - expected).abs() < 1e-9, "{} vs {}", rates.v[0], expected);
        // the quadratic part of R_V is even and does not move the centre
        assert!((rates.a[0] - 0.3).abs() < 1e-9);
    }

    #[test]
    fn rho_matches_dense_oracle() {
        let chart = chart(24.0, 128);
        let p = chart.point(1.0).unwrap();
        let est = rho_estimate(&p).unwrap();
        let grid = *chart.grid();
        let n = grid.len();
        let unit = |i: usize| {
            let mut f = ComplexField::zeros(grid);
            f.values_mut()[i % n] = if i < n { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 1.0) };
            f
        };
        let coords = |f: &ComplexField| {
            DVector::from_iterator(2 * n, f.values().iter().map(|z| z.re).chain(f.values().iter().map(|z| z.im)))
        };
        let mut lm = DMatrix::zeros(2 * n, 2 * n);
        let mut bm = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..2 * n {
            let e = unit(j);
            lm.set_column(j, &coords(&apply_linearization(&p.profile, &e).unwrap()));
            bm.set_column(j, &coords(&e.fourier_multiply(|k2| 1.0 + k2)));
        }
        let lm = 0.5 * (&lm + lm.transpose());
        let bm = 0.5 * (&bm + bm.transpose());
        let cm = DMatrix::from_columns(&p.constraint_vectors.iter().map(coords).collect::<Vec<_>>());
        let proj = DMatrix::identity(2 * n, 2 * n)
            - &cm * (cm.transpose() * &cm).try_inverse().unwrap() * cm.transpose();
        let eig = nalgebra::SymmetricEigen::new(0.5 * (&proj + proj.transpose()));
        let cols: Vec<_> =
            (0..2 * n).filter(|&i| eig.eigenvalues[i] > 0.5).map(|i| eig.eigenvectors.column(i).into_owned()).collect();
        assert_eq!(cols.len(), 2 * n - 4);
        let q = DMatrix::from_columns(&cols);
        let lr = q.transpose() * &lm * &q;
        let br = q.transpose() * &bm * &q;
        let chol = br.cholesky().unwrap();
        let linv = chol.l().try_inverse().unwrap();
        let red = &linv * lr * linv.transpose();
        let red = 0.5 * (&red + red.transpose());
        let oracle = red.symmetric_eigenvalues().min();
        assert!(oracle > 0.0);
        assert!((est.rho - oracle).abs() < 1e-6 * oracle, "{} vs {}", est.rho, oracle);
    }

    #[test]
    fn frame_energy_identity_holds() {
        let chart = chart(40.0, 1024);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sigma(-0.8, 0.5, 1.0, 1.0);
        let p = chart.point(1.0).unwrap();
        let w = random_skew_orthogonal(&p, &mut rng).scale(0.1);
        let psi = compose_field(&chart, &s, &w).unwrap();
        let model = Model::new(
            Nonlinearity::cubic(),
            Potential::mathieu_trap(0.1, 5.0, 0.2, 1.0, 15.0),
            chart.grid(),
        )
        .unwrap();
        let d = skew_project(&psi, &s, &chart).unwrap();
        let r = frame_energy_identity_check(&psi, &d, &model, 0.3).unwrap();
        assert!(r < 1e-9, "{r:e}");
    }

    #[test]
    fn lyapunov_is_quadratic_to_leading_order() {
        let chart = chart(40.0, 512);
        let p = chart.point(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dir = random_skew_orthogonal(&p, &mut rng);
        let mut ratios = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3] {
            let w = dir.scale(eps);
            let c = lyapunov_of(&p.profile, &w);
            let q = 0.5 * coercivity_quadform(&w, &p.profile).unwrap();
            ratios.push((c - q).abs() / eps.powi(3));
        }
        assert!(ratios.iter().all(|r| *r < 10.0), "{ratios:?}");
    }

    #[test]
    fn projection_is_idempotent_and_annihilates_constraints() {
        let chart = chart(40.0, 512);
        let p = chart.point(0.8).unwrap();
        let f = ComplexField::from_fn(*chart.grid(), |x| Complex64::new((-x[0] * x[0]).exp(), x[0] * (-x[0] * x[0]).exp()));
        let w = p.project(&f);
        assert!(max_abs(&p.constraints(&w)) < 1e-13);
        assert!((&p.project(&w) - &w).l2_norm() < 1e-13);
        let _ = apply_transform(&w, &TransformParams::identity(1)).unwrap();
    }

    #[test]
    fn csv_header_lists_alpha_columns() {
        assert_eq!(
            decomposition_header(1).join(","),
            "t,a,v,gamma,mu,w_h1,constraint_residual,alpha_1,alpha_2,alpha_3,alpha_4,lyapunov"
        );
        assert_eq!(decomposition_header(2)[1..5].join(","), "a_1,a_2,v_1,v_2");
    }
}
