//! Periodic grids and complex fields with spectral calculus.
//!
//! Fields are stored row-major with axis 0 slowest. Coordinates along each
//! axis run over `[-L/2, L/2)` so that the origin is a grid point, and all
//! integrals are plain Riemann sums, which are spectrally accurate for smooth
//! periodic integrands.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Uniform periodic grid with the same extent and sample count on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    dim: usize,
    extent: f64,
    points: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    #[serde(default = "default_dim")]
    dim: usize,
    extent: f64,
    points: usize,
}

fn default_dim() -> usize {
    1
}

impl TryFrom<GridSpec> for Grid {
    type Error = LabError;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.dim, spec.extent, spec.points)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec { dim: g.dim, extent: g.extent, points: g.points }
    }
}

impl Grid {
    pub fn new(dim: usize, extent: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(LabError::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(LabError::InvalidGrid(format!("extent {extent} must be positive")));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(LabError::InvalidGrid(format!(
                "points per axis {points} must be a power of two >= 8"
            )));
        }
        Ok(Grid { dim, extent, points })
    }

    /// One-dimensional grid, the common case.
    pub fn line(extent: f64, points: usize) -> Result<Self> {
        Self::new(1, extent, points)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.points as f64
    }

    /// Volume element `dx^N` of the Riemann sum.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn axis_coordinates(&self) -> Vec<f64> {
        let dx = self.spacing();
        (0..self.points).map(|j| -0.5 * self.extent + j as f64 * dx).collect()
    }

    /// Wavenumbers `2πj/L` in FFT order, `j ∈ {0, …, M/2-1, -M/2, …, -1}`.
    pub fn axis_wavenumbers(&self) -> Vec<f64> {
        let m = self.points as i64;
        (0..m)
            .map(|j| {
                let jj = if j < m / 2 { j } else { j - m };
                2.0 * PI * jj as f64 / self.extent
            })
            .collect()
    }

    /// Multi-index of a flat index, axis 0 first.
    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for ax in (0..self.dim).rev() {
            out[ax] = flat % self.points;
            flat /= self.points;
        }
    }

    /// Spatial coordinates of every grid point, one `Vec` per axis.
    pub fn coordinates(&self) -> Vec<Vec<f64>> {
        let axis = self.axis_coordinates();
        let mut idx = vec![0; self.dim];
        let mut out = vec![Vec::with_capacity(self.len()); self.dim];
        for flat in 0..self.len() {
            self.multi_index(flat, &mut idx);
            for ax in 0..self.dim {
                out[ax].push(axis[idx[ax]]);
            }
        }
        out
    }

    /// Wavenumber components per flat Fourier index, one `Vec` per axis.
    pub fn wavenumbers(&self) -> Vec<Vec<f64>> {
        let axis = self.axis_wavenumbers();
        let mut idx = vec![0; self.dim];
        let mut out = vec![Vec::with_capacity(self.len()); self.dim];
        for flat in 0..self.len() {
            self.multi_index(flat, &mut idx);
            for ax in 0..self.dim {
                out[ax].push(axis[idx[ax]]);
            }
        }
        out
    }

    pub fn k_squared(&self) -> Vec<f64> {
        let ks = self.wavenumbers();
        (0..self.len()).map(|j| ks.iter().map(|k| k[j] * k[j]).sum()).collect()
    }

    /// Largest `|k|^2` resolved by the grid (Nyquist on every axis).
    pub fn max_k_squared(&self) -> f64 {
        let kn = PI * self.points as f64 / self.extent;
        self.dim as f64 * kn * kn
    }

    /// Whether the flat index sits on the outermost layer of some axis.
    fn on_boundary(&self, flat: usize, idx: &mut [usize]) -> bool {
        self.multi_index(flat, idx);
        idx.iter().any(|&j| j == 0 || j + 1 == self.points)
    }

    fn same_as(&self, other: &Grid) -> bool {
        self.dim == other.dim
            && self.points == other.points
            && self.extent.to_bits() == other.extent.to_bits()
    }

    /// In-place forward DFT (unnormalized).
    pub fn fft(&self, data: &mut [Complex64]) {
        fft_nd(data, self.dim, self.points, false);
    }

    /// In-place inverse DFT including the `1/M^N` normalization.
    pub fn ifft(&self, data: &mut [Complex64]) {
        fft_nd(data, self.dim, self.points, true);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }
}

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, Plans>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(len: usize) -> Plans {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        cache
            .entry(len)
            .or_insert_with(|| (planner.plan_fft_forward(len), planner.plan_fft_inverse(len)))
            .clone()
    })
}

fn fft_nd(data: &mut [Complex64], dim: usize, m: usize, inverse: bool) {
    let (fwd, inv) = plans(m);
    let fft = if inverse { inv } else { fwd };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    // last axis is contiguous
    fft.process_with_scratch(data, &mut scratch);
    if dim == 1 {
        return;
    }
    let total = data.len();
    let mut line = vec![Complex64::default(); m];
    for ax in 0..dim - 1 {
        let stride = m.pow((dim - 1 - ax) as u32);
        let block = stride * m;
        for base in (0..total).step_by(block) {
            for offset in 0..stride {
                let start = base + offset;
                for (j, z) in line.iter_mut().enumerate() {
                    *z = data[start + j * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (j, z) in line.iter().enumerate() {
                    data[start + j * stride] = *z;
                }
            }
        }
    }
}

/// Complex samples of a field on a periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::InvalidGrid(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        Ok(ComplexField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ComplexField { grid, values: vec![Complex64::default(); grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> Complex64) -> Self {
        let axis = grid.axis_coordinates();
        let mut idx = vec![0; grid.dim()];
        let mut x = vec![0.0; grid.dim()];
        let values = (0..grid.len())
            .map(|flat| {
                grid.multi_index(flat, &mut idx);
                for ax in 0..grid.dim() {
                    x[ax] = axis[idx[ax]];
                }
                f(&x)
            })
            .collect();
        ComplexField { grid, values }
    }

    pub fn from_real_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        Self::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::new(grid, values.iter().map(|&r| Complex64::new(r, 0.0)).collect())
    }

    /// Build a field from Fourier coefficients (forward-DFT convention).
    pub fn from_fourier(grid: Grid, mut coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(LabError::InvalidGrid("Fourier coefficient count mismatch".into()));
        }
        grid.ifft(&mut coeffs);
        Ok(ComplexField { grid, values: coeffs })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn fourier(&self) -> Vec<Complex64> {
        let mut c = self.values.clone();
        self.grid.fft(&mut c);
        c
    }

    pub fn ensure_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(LabError::GridMismatch)
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag_abs(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    /// Largest modulus on the outermost grid layer (the periodic seam).
    pub fn boundary_max_abs(&self) -> f64 {
        let mut idx = vec![0; self.grid.dim()];
        let mut out: f64 = 0.0;
        for (flat, z) in self.values.iter().enumerate() {
            if self.grid.on_boundary(flat, &mut idx) {
                out = out.max(z.norm());
            }
        }
        out
    }

    /// Tube condition: seam amplitude below `1e-12 * max|u|`.
    pub fn satisfies_tube_condition(&self) -> bool {
        self.boundary_max_abs() <= 1e-12 * self.max_abs()
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn map(&self, mut f: impl FnMut(Complex64) -> Complex64) -> ComplexField {
        ComplexField { grid: self.grid, values: self.values.iter().map(|&z| f(z)).collect() }
    }

    pub fn zip_map(
        &self,
        other: &ComplexField,
        mut f: impl FnMut(Complex64, Complex64) -> Complex64,
    ) -> Result<ComplexField> {
        self.ensure_same_grid(other)?;
        Ok(ComplexField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Pointwise product with real samples.
    pub fn mul_real(&self, weights: &[f64]) -> ComplexField {
        assert_eq!(weights.len(), self.values.len(), "weight length mismatch");
        ComplexField {
            grid: self.grid,
            values: self.values.iter().zip(weights).map(|(z, w)| z * w).collect(),
        }
    }

    pub fn mul_i(&self) -> ComplexField {
        self.map(|z| I * z)
    }

    pub fn scale(&self, c: f64) -> ComplexField {
        self.map(|z| z * c)
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: Complex64, other: &ComplexField) {
        assert!(self.grid.same_as(&other.grid), "grid mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// `⟨u, v⟩ = Re ∫ u conj(v)`.
    pub fn inner_product(&self, other: &ComplexField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        Ok(self.dot(other))
    }

    pub(crate) fn dot(&self, other: &ComplexField) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        s * self.grid.cell_volume()
    }

    /// `ω(u, v) = Im ∫ u conj(v) = ⟨u, i v⟩`.
    pub fn symplectic_form(&self, other: &ComplexField) -> Result<f64> {
        self.ensure_same_grid(other)?;
        let s: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.im * b.re - a.re * b.im)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Noether charge `N(ψ) = ½ ∫ |ψ|²`.
    pub fn charge(&self) -> f64 {
        0.5 * self.l2_norm_sq()
    }

    fn weighted_fourier_sum(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let c = self.fourier();
        let k2 = self.grid.k_squared();
        let s: f64 = c.iter().zip(&k2).map(|(z, &k)| weight(k) * z.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    /// `∫ |∇u|²` evaluated in Fourier space.
    pub fn gradient_norm_sq(&self) -> f64 {
        self.weighted_fourier_sum(|k2| k2)
    }

    /// `Σ_k (1+|k|²)|û_k|²`, the spectral form of `‖u‖²_{H¹}`.
    pub fn h1_norm_sq(&self) -> f64 {
        self.weighted_fourier_sum(|k2| 1.0 + k2)
    }

    pub fn h1_norm(&self) -> f64 {
        self.h1_norm_sq().sqrt()
    }

    /// Spectral derivative along one axis. The Nyquist mode is dropped so
    /// that real fields have real derivatives.
    pub fn partial(&self, axis: usize) -> ComplexField {
        assert!(axis < self.grid.dim(), "axis out of range");
        let mut c = self.fourier();
        let kaxis = self.grid.axis_wavenumbers();
        let m = self.grid.points();
        let mut idx = vec![0; self.grid.dim()];
        for (flat, z) in c.iter_mut().enumerate() {
            self.grid.multi_index(flat, &mut idx);
            let j = idx[axis];
            if j == m / 2 {
                *z = Complex64::default();
            } else {
                *z *= I * kaxis[j];
            }
        }
        self.grid.ifft(&mut c);
        ComplexField { grid: self.grid, values: c }
    }

    pub fn spectral_gradient(&self) -> Vec<ComplexField> {
        (0..self.grid.dim()).map(|ax| self.partial(ax)).collect()
    }

    /// Spectral Laplacian with symbol `-|k|²`.
    pub fn spectral_laplacian(&self) -> ComplexField {
        self.fourier_multiply(|k2| -k2)
    }

    /// Apply a radial Fourier multiplier `m(|k|²)`.
    pub fn fourier_multiply(&self, symbol: impl Fn(f64) -> f64) -> ComplexField {
        let mut c = self.fourier();
        for (z, k2) in c.iter_mut().zip(self.grid.k_squared()) {
            *z *= symbol(k2);
        }
        self.grid.ifft(&mut c);
        ComplexField { grid: self.grid, values: c }
    }

    /// Translate by an arbitrary real vector: `u(x - a)`, via DFT phase shift.
    pub fn translate(&self, a: &[f64]) -> ComplexField {
        assert_eq!(a.len(), self.grid.dim(), "shift dimension mismatch");
        if a.iter().all(|&s| s == 0.0) {
            return self.clone();
        }
        let mut c = self.fourier();
        let ks = self.grid.wavenumbers();
        for (flat, z) in c.iter_mut().enumerate() {
            let phase: f64 = (0..a.len()).map(|ax| ks[ax][flat] * a[ax]).sum();
            *z *= Complex64::from_polar(1.0, -phase);
        }
        self.grid.ifft(&mut c);
        ComplexField { grid: self.grid, values: c }
    }

    /// Multiply by the coordinate `x_axis`.
    pub fn mul_coordinate(&self, axis: usize) -> ComplexField {
        let xs = &self.grid.coordinates()[axis];
        self.mul_real(xs)
    }
}

pub fn inner_product(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    u.inner_product(v)
}

pub fn symplectic_form(u: &ComplexField, v: &ComplexField) -> Result<f64> {
    u.symplectic_form(v)
}

pub fn h1_norm_sq(u: &ComplexField) -> f64 {
    u.h1_norm_sq()
}

pub fn spectral_gradient(u: &ComplexField) -> Vec<ComplexField> {
    u.spectral_gradient()
}

pub fn spectral_laplacian(u: &ComplexField) -> ComplexField {
    u.spectral_laplacian()
}

impl Add for &ComplexField {
    type Output = ComplexField;
    fn add(self, rhs: &ComplexField) -> ComplexField {
        assert!(self.grid.same_as(&rhs.grid), "grid mismatch");
        ComplexField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexField {
    type Output = ComplexField;
    fn sub(self, rhs: &ComplexField) -> ComplexField {
        assert!(self.grid.same_as(&rhs.grid), "grid mismatch");
        ComplexField {
            grid: self.grid,
            values: self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexField {
    type Output = ComplexField;
    fn neg(self) -> ComplexField {
        self.map(|z| -z)
    }
}

impl Mul<f64> for &ComplexField {
    type Output = ComplexField;
    fn mul(self, rhs: f64) -> ComplexField {
        self.scale(rhs)
    }
}

impl Mul<Complex64> for &ComplexField {
    type Output = ComplexField;
    fn mul(self, rhs: Complex64) -> ComplexField {
        self.map(|z| z * rhs)
    }
}

impl AddAssign<&ComplexField> for ComplexField {
    fn add_assign(&mut self, rhs: &ComplexField) {
        self.axpy(Complex64::new(1.0, 0.0), rhs);
    }
}

impl SubAssign<&ComplexField> for ComplexField {
    fn sub_assign(&mut self, rhs: &ComplexField) {
        self.axpy(Complex64::new(-1.0, 0.0), rhs);
    }
}
