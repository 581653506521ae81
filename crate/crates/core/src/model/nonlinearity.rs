use serde::{Deserialize, Serialize};

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::field::{ComplexField, Grid};

/// Spherically symmetric Hartree kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// Normalized Gaussian `(2πw²)^{-N/2} exp(-|x|²/2w²)`.
    Gaussian { width: f64 },
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Gaussian { width: 1.0 }
    }
}

impl Kernel {
    /// Continuous Fourier transform `Ŵ(k)` as a function of `|k|²`.
    fn symbol(&self, k2: f64) -> f64 {
        match *self {
            Kernel::Gaussian { width } => (-0.5 * width * width * k2).exp(),
        }
    }
}

/// Self-focusing nonlinearity `f`, with primitive `F` (`F' = f`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Nonlinearity {
    /// `f(ψ) = λ|ψ|^s ψ`.
    LocalPower { lambda: f64, s: f64 },
    /// `f(ψ) = λ (W ⋆ |ψ|²) ψ`.
    Hartree {
        lambda: f64,
        #[serde(default)]
        kernel: Kernel,
    },
}

impl Nonlinearity {
    pub fn local_power(lambda: f64, s: f64, dim: usize) -> Result<Self> {
        let nl = Nonlinearity::LocalPower { lambda, s };
        nl.validate(dim)?;
        Ok(nl)
    }

    pub fn cubic() -> Self {
        Nonlinearity::LocalPower { lambda: 1.0, s: 2.0 }
    }

    pub fn hartree(lambda: f64, kernel: Kernel) -> Result<Self> {
        let nl = Nonlinearity::Hartree { lambda, kernel };
        nl.validate(1)?;
        Ok(nl)
    }

    /// Subcriticality `0 < s < 4/N`, `λ > 0`, admissible kernel.
    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Nonlinearity::LocalPower { lambda, s } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(LabError::InvalidParameter(format!("lambda = {lambda} must be > 0")));
                }
                let critical = 4.0 / dim as f64;
                if !(*s > 0.0 && *s < critical) {
                    return Err(LabError::InvalidParameter(format!(
                        "power s = {s} outside the subcritical range (0, {critical})"
                    )));
                }
            }
            Nonlinearity::Hartree { lambda, kernel } => {
                if !(*lambda > 0.0 && lambda.is_finite()) {
                    return Err(LabError::InvalidParameter(format!("lambda = {lambda} must be > 0")));
                }
                let Kernel::Gaussian { width } = kernel;
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(LabError::InvalidParameter("kernel width must be > 0".into()));
                }
            }
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Nonlinearity::LocalPower { lambda, .. } | Nonlinearity::Hartree { lambda, .. } => lambda,
        }
    }

    /// Degree `p` with `f(cψ) = c^p f(ψ)` for `c > 0`.
    pub fn homogeneity(&self) -> f64 {
        match *self {
            Nonlinearity::LocalPower { s, .. } => s + 1.0,
            Nonlinearity::Hartree { .. } => 3.0,
        }
    }

    /// Periodic convolution `W ⋆ g` of real samples, exact through the DFT.
    fn convolve(&self, kernel: &Kernel, grid: &Grid, g: &[f64]) -> Vec<f64> {
        let mut c: Vec<Complex64> = g.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        grid.fft(&mut c);
        for (z, k2) in c.iter_mut().zip(grid.k_squared()) {
            *z *= kernel.symbol(k2);
        }
        grid.ifft(&mut c);
        c.into_iter().map(|z| z.re).collect()
    }

    /// Real multiplier `g(ψ)` such that `f(ψ) = g(ψ) ψ`.
    pub fn multiplier(&self, u: &ComplexField) -> Vec<f64> {
        self.multiplier_of(u.grid(), u.values())
    }

    /// [`multiplier`](Self::multiplier) on raw samples.
    pub fn multiplier_of(&self, grid: &Grid, values: &[Complex64]) -> Vec<f64> {
        match self {
            Nonlinearity::LocalPower { lambda, s } => {
                let half = 0.5 * s;
                if *s == 2.0 {
                    values.iter().map(|z| lambda * z.norm_sqr()).collect()
                } else {
                    values.iter().map(|z| lambda * z.norm_sqr().powf(half)).collect()
                }
            }
            Nonlinearity::Hartree { lambda, kernel } => {
                let dens: Vec<f64> = values.iter().map(|z| z.norm_sqr()).collect();
                self.convolve(kernel, grid, &dens).into_iter().map(|c| lambda * c).collect()
            }
        }
    }

    /// `f(u)`.
    pub fn apply(&self, u: &ComplexField) -> ComplexField {
        u.mul_real(&self.multiplier(u))
    }

    /// `F(u)`: `λ/(s+2) ∫|u|^{s+2}` or `λ/4 ∫ (W⋆|u|²)|u|²`.
    pub fn primitive(&self, u: &ComplexField) -> f64 {
        let dv = u.grid().cell_volume();
        match self {
            Nonlinearity::LocalPower { lambda, s } => {
                let e = 0.5 * (s + 2.0);
                let sum: f64 = u.values().iter().map(|z| z.norm_sqr().powf(e)).sum();
                lambda / (s + 2.0) * sum * dv
            }
            Nonlinearity::Hartree { .. } => {
                let g = self.multiplier(u);
                let sum: f64 = u.values().iter().zip(&g).map(|(z, g)| g * z.norm_sqr()).sum();
                0.25 * sum * dv
            }
        }
    }

    /// Real-linear Fréchet derivative `f'(η) w` at a real profile `η`.
    pub fn derivative_apply(&self, eta: &ComplexField, w: &ComplexField) -> Result<ComplexField> {
        eta.ensure_same_grid(w)?;
        let scale = eta.max_abs().max(f64::MIN_POSITIVE);
        let max_imag = eta.max_imag_abs();
        if max_imag > 1e-12 * scale {
            return Err(LabError::NonRealProfile { max_imag });
        }
        let out = match self {
            Nonlinearity::LocalPower { lambda, s } => {
                let values = eta
                    .values()
                    .iter()
                    .zip(w.values())
                    .map(|(e, z)| {
                        let c = lambda * e.re.abs().powf(*s);
                        Complex64::new(c * (s + 1.0) * z.re, c * z.im)
                    })
                    .collect();
                ComplexField::new(*eta.grid(), values)?
            }
            Nonlinearity::Hartree { lambda, kernel } => {
                let grid = eta.grid();
                let dens: Vec<f64> = eta.values().iter().map(|e| e.re * e.re).collect();
                let conv = self.convolve(kernel, grid, &dens);
                let cross: Vec<f64> =
                    eta.values().iter().zip(w.values()).map(|(e, z)| e.re * z.re).collect();
                let conv_cross = self.convolve(kernel, grid, &cross);
                let values = eta
                    .values()
                    .iter()
                    .zip(w.values())
                    .zip(conv.iter().zip(&conv_cross))
                    .map(|((e, z), (c, cc))| lambda * (c * z + 2.0 * cc * e.re))
                    .collect();
                ComplexField::new(*grid, values)?
            }
        };
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::I;

    fn sech(x: f64) -> f64 {
        1.0 / x.cosh()
    }

    fn grid() -> Grid {
        Grid::line(60.0, 2048).unwrap()
    }

    fn eta1(g: Grid) -> ComplexField {
        ComplexField::from_real_fn(g, |x| 2f64.sqrt() * sech(x[0]))
    }

    #[test]
    fn subcriticality_enforced() {
        assert!(Nonlinearity::local_power(1.0, 2.0, 1).is_ok());
        assert!(Nonlinearity::local_power(1.0, 4.0, 1).is_err());
        assert!(Nonlinearity::local_power(1.0, 2.0, 2).is_err());
        assert!(Nonlinearity::local_power(-1.0, 1.0, 1).is_err());
        assert!(Nonlinearity::local_power(1.0, 0.0, 1).is_err());
        assert!(Nonlinearity::hartree(1.0, Kernel::Gaussian { width: 0.0 }).is_err());
    }

    #[test]
    fn vanishes_at_zero() {
        let z = ComplexField::zeros(grid());
        for nl in [Nonlinearity::cubic(), Nonlinearity::hartree(1.0, Kernel::default()).unwrap()] {
            assert_eq!(nl.apply(&z).max_abs(), 0.0);
            assert_eq!(nl.primitive(&z), 0.0);
        }
    }

    #[test]
    fn cubic_on_soliton() {
        let g = grid();
        let eta = eta1(g);
        let nl = Nonlinearity::cubic();
        let f = nl.apply(&eta);
        let expected = ComplexField::from_real_fn(g, |x| 2.0 * 2f64.sqrt() * sech(x[0]).powi(3));
        assert!((&f - &expected).max_abs() < 1e-10);
        assert!((nl.primitive(&eta) - 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn derivative_branches() {
        let g = grid();
        let eta = eta1(g);
        let nl = Nonlinearity::cubic();
        let w = ComplexField::from_real_fn(g, |x| (-x[0] * x[0]).exp());
        let fr = nl.derivative_apply(&eta, &w).unwrap();
        let fi = nl.derivative_apply(&eta, &w.mul_i()).unwrap();
        for ((e, a), (b, wv)) in eta.values().iter().zip(fr.values()).zip(fi.values().iter().zip(w.values())) {
            assert!((a - 3.0 * e.re * e.re * wv).norm() < 1e-13);
            assert!((b - I * e.re * e.re * wv).norm() < 1e-13);
        }
        assert!(matches!(
            nl.derivative_apply(&eta.mul_i(), &w),
            Err(LabError::NonRealProfile { .. })
        ));
    }

    #[test]
    fn hartree_primitive_is_consistent_with_f() {
        // dF/dε at u along φ equals ⟨f(u), φ⟩
        let g = Grid::line(40.0, 512).unwrap();
        let nl = Nonlinearity::hartree(1.5, Kernel::Gaussian { width: 0.7 }).unwrap();
        let u = ComplexField::from_fn(g, |x| Complex64::new(sech(x[0]), 0.3 * x[0] * sech(x[0])));
        let phi = ComplexField::from_fn(g, |x| Complex64::new((-x[0] * x[0]).exp(), 0.5 * (-0.5 * x[0] * x[0]).exp()));
        let eps = 1e-5;
        let mut up = u.clone();
        up.axpy(Complex64::new(eps, 0.0), &phi);
        let mut um = u.clone();
        um.axpy(Complex64::new(-eps, 0.0), &phi);
        let fd = (nl.primitive(&up) - nl.primitive(&um)) / (2.0 * eps);
        let exact = nl.apply(&u).inner_product(&phi).unwrap();
        assert!((fd - exact).abs() < 1e-8, "{fd} vs {exact}");
    }
}
