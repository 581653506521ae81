//! The combined translation/boost/gauge transformation
//! `T_{avγ} ψ = e^{i(½ v·(x-a) + γ)} ψ(x - a)` and its inverse.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::ComplexField;

/// Reduce a phase into `[0, 2π)`.
pub fn wrap_phase(gamma: f64) -> f64 {
    let g = gamma.rem_euclid(TAU);
    if g >= TAU {
        0.0
    } else {
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub a: Vec<f64>,
    pub v: Vec<f64>,
    gamma: f64,
}

impl TransformParams {
    pub fn new(a: Vec<f64>, v: Vec<f64>, gamma: f64) -> Result<Self> {
        if a.len() != v.len() {
            return Err(LabError::InvalidParameter("a and v must have the same dimension".into()));
        }
        if !gamma.is_finite() || a.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(LabError::InvalidParameter("non-finite transform parameter".into()));
        }
        Ok(TransformParams { a, v, gamma: wrap_phase(gamma) })
    }

    pub fn identity(dim: usize) -> Self {
        TransformParams { a: vec![0.0; dim], v: vec![0.0; dim], gamma: 0.0 }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Heisenberg group law: `T_self ∘ T_inner = T_{self·inner}` with
    /// `γ'' = γ + γ' + ½ v·a'`.
    pub fn compose(&self, inner: &TransformParams) -> TransformParams {
        let a = self.a.iter().zip(&inner.a).map(|(x, y)| x + y).collect();
        let v = self.v.iter().zip(&inner.v).map(|(x, y)| x + y).collect();
        let cross: f64 = self.v.iter().zip(&inner.a).map(|(v, a)| v * a).sum();
        TransformParams { a, v, gamma: wrap_phase(self.gamma + inner.gamma + 0.5 * cross) }
    }
}

/// Output of a transformation together with the seam diagnostic.
#[derive(Clone, Debug)]
pub struct Transformed {
    pub field: ComplexField,
    /// Set when the translated field is not negligible on the periodic seam,
    /// where the boost phase is discontinuous.
    pub seam_warning: bool,
}

fn boost_phase(u: &mut ComplexField, p: &TransformParams, sign: f64) {
    let coords = u.grid().coordinates();
    for (flat, z) in u.values_mut().iter_mut().enumerate() {
        let vx: f64 = (0..p.dim()).map(|ax| p.v[ax] * (coords[ax][flat] - p.a[ax])).sum();
        *z *= Complex64::from_polar(1.0, sign * (0.5 * vx + p.gamma));
    }
}

fn check_dim(u: &ComplexField, p: &TransformParams) -> Result<()> {
    if p.dim() != u.grid().dim() {
        return Err(LabError::GridMismatch);
    }
    Ok(())
}

pub fn apply_transform(u: &ComplexField, p: &TransformParams) -> Result<Transformed> {
    check_dim(u, p)?;
    let mut field = u.translate(&p.a);
    let seam_warning = !field.satisfies_tube_condition();
    boost_phase(&mut field, p, 1.0);
    Ok(Transformed { field, seam_warning })
}

/// `T⁻¹_{avγ} ψ (x) = e^{-i(½ v·x + γ)} ψ(x + a)`.
pub fn inverse_transform(psi: &ComplexField, p: &TransformParams) -> Result<Transformed> {
    check_dim(psi, p)?;
    let seam_warning = !psi.satisfies_tube_condition();
    let mut field = psi.clone();
    boost_phase(&mut field, p, -1.0);
    let back: Vec<f64> = p.a.iter().map(|a| -a).collect();
    Ok(Transformed { field: field.translate(&back), seam_warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn packet(grid: Grid) -> ComplexField {
        ComplexField::from_fn(grid, |x| {
            let g = (-0.5 * x[0] * x[0]).exp();
            Complex64::new(g * (1.0 + 0.3 * x[0]), 0.4 * g * x[0] * x[0])
        })
    }

    #[test]
    fn gamma_is_reduced() {
        let p = TransformParams::new(vec![0.0], vec![0.0], -0.5).unwrap();
        assert!((p.gamma() - (TAU - 0.5)).abs() < 1e-15);
        assert!(TransformParams::new(vec![0.0], vec![], 0.0).is_err());
    }

    #[test]
    fn identity_transform() {
        let g = Grid::line(40.0, 256).unwrap();
        let u = packet(g);
        let t = apply_transform(&u, &TransformParams::identity(1)).unwrap();
        assert!((&t.field - &u).max_abs() < 1e-15);
        assert!(!t.seam_warning);
    }

    #[test]
    fn inverse_undoes_forward() {
        let g = Grid::line(40.0, 256).unwrap();
        let u = packet(g);
        let p = TransformParams::new(vec![2.7], vec![-0.8], 4.0).unwrap();
        let fwd = apply_transform(&u, &p).unwrap();
        let back = inverse_transform(&fwd.field, &p).unwrap();
        assert!((&back.field - &u).l2_norm() < 1e-10 * u.l2_norm());
    }

    #[test]
    fn seam_warning_raised_for_wide_fields() {
        let g = Grid::line(10.0, 64).unwrap();
        let wide = ComplexField::from_real_fn(g, |x| (-0.01 * x[0] * x[0]).exp());
        let t = apply_transform(&wide, &TransformParams::identity(1)).unwrap();
        assert!(t.seam_warning);
    }
}
