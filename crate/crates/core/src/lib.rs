//! Numerical laboratory for solitons of the nonlinear Schrödinger equation
//! `i∂_tψ = (-Δ + V_h)ψ - f(ψ)` in slowly varying external potentials.
//!
//! Layers, bottom up:
//! - [`field`]: periodic grids, spectral calculus, inner products and norms.
//! - [`model`]: nonlinearities `f` and potentials `V_h`.
//! - [`soliton`]: ground-state profiles `η_μ`, tangent basis, Gram matrix.
//! - [`transform`]: the translation/boost/gauge action `T_{avγ}`.
//! - [`evolve`]: split-step Fourier evolution and conservation diagnostics.
//! - [`modulate`]: effective dynamics of the soliton parameters, Floquet analysis.
//! - [`decompose`]: skew-orthogonal decomposition, modulation residuals, Lyapunov machinery.
//! - [`lab`]: scenario configs, runs, studies and reports.

// `!(x <= y)` is used on purpose so that NaN fails every guard.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod decompose;
pub mod error;
pub mod evolve;
pub mod field;
pub mod lab;
pub mod model;
pub mod modulate;
pub mod snapshot;
pub mod soliton;
pub mod transform;

pub use decompose::{skew_project, Decomposition, ManifoldChart};
pub use error::{LabError, Result};
pub use evolve::{Evolver, EvolverConfig};
pub use field::{ComplexField, Grid};
pub use lab::{run_scenario, ScenarioConfig};
pub use model::{Model, Nonlinearity, Potential};
pub use soliton::{solve_profile, ModulationParams, SolitonProfile};
