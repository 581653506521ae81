//! Nonlinearities and external potentials.

mod nonlinearity;
mod potential;

pub use nonlinearity::{Kernel, Nonlinearity};
pub use potential::{CustomPotential, Potential, PotentialFn, PotentialShape, TabulatedPotential};

use crate::error::Result;
use crate::field::Grid;

/// A complete NLS model: nonlinearity plus external potential.
#[derive(Clone, Debug)]
pub struct Model {
    pub nonlinearity: Nonlinearity,
    pub potential: Potential,
}

impl Model {
    pub fn new(nonlinearity: Nonlinearity, potential: Potential, grid: &Grid) -> Result<Self> {
        nonlinearity.validate(grid.dim())?;
        potential.validate(grid.dim())?;
        Ok(Model { nonlinearity, potential })
    }

    pub fn free(nonlinearity: Nonlinearity) -> Self {
        Model { nonlinearity, potential: Potential::zero() }
    }
}
