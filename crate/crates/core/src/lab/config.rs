use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::evolve::EvolverConfig;
use crate::field::Grid;
use crate::model::{Model, Nonlinearity, Potential};
use crate::soliton::ModulationParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    FreeSoliton,
    StaticTrap,
    AdiabaticTransport,
    Mathieu,
    HScaling,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "one")]
    pub dim: usize,
    pub extent: f64,
    pub points: usize,
}

fn one() -> usize {
    1
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dim, self.extent, self.points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub nonlinearity: Nonlinearity,
    #[serde(default = "Potential::zero")]
    pub potential: Potential,
}

/// Initial fluctuation: a seeded random field in `X_μ` scaled to `amplitude`
/// in H¹ (default `0.5·h`; `0` disables it).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonRule {
    /// `C·|log h| / h`.
    Logarithmic,
    /// `C / h`.
    Inverse,
}

/// Caps the run length by an h-dependent horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSpec {
    pub constant: f64,
    #[serde(default = "default_rule")]
    pub rule: HorizonRule,
}

fn default_rule() -> HorizonRule {
    HorizonRule::Logarithmic
}

impl HorizonSpec {
    pub fn horizon(&self, h: f64) -> f64 {
        match self.rule {
            HorizonRule::Logarithmic => self.constant * h.ln().abs() / h,
            HorizonRule::Inverse => self.constant / h,
        }
    }
}

/// Declarative description of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    pub model: ModelSpec,
    pub sigma0: ModulationParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationSpec>,
    pub evolver: EvolverConfig,
    /// Snapshots between decompositions.
    #[serde(default = "default_decompose_stride")]
    pub decompose_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<HorizonSpec>,
    /// Largest RK4 step for the effective dynamics.
    #[serde(default = "default_effective_dt")]
    pub effective_dt: f64,
    /// Also write a plotting script next to the CSVs.
    #[serde(default)]
    pub plot_script: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_decompose_stride() -> usize {
    10
}

fn default_effective_dt() -> f64 {
    1e-2
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(e.to_string()))
    }

    /// Checks every referenced value against the module preconditions.
    pub fn validate(&self) -> Result<(Grid, Model)> {
        let grid = self.grid.build()?;
        let model = Model::new(self.model.nonlinearity.clone(), self.model.potential.clone(), &grid)?;
        ModulationParams::new(self.sigma0.a.clone(), self.sigma0.v.clone(), self.sigma0.gamma, self.sigma0.mu)?;
        if self.sigma0.dim() != grid.dim() {
            return Err(LabError::Config("sigma0 dimension does not match the grid".into()));
        }
        let mut ev = self.evolver.clone();
        ev.t_end = self.horizon_time();
        ev.validate(&grid)?;
        if self.evolver.snapshot_stride == 0 || self.decompose_stride == 0 {
            return Err(LabError::Config("snapshot_stride and decompose_stride must be positive".into()));
        }
        if !(self.effective_dt > 0.0) {
            return Err(LabError::Config("effective_dt must be positive".into()));
        }
        if let Some(p) = &self.perturbation {
            if p.amplitude.is_some_and(|a| !(a >= 0.0)) {
                return Err(LabError::Config("perturbation amplitude must be non-negative".into()));
            }
        }
        if let Some(hz) = &self.horizon {
            if !(hz.constant > 0.0) {
                return Err(LabError::Config("horizon constant must be positive".into()));
            }
        }
        Ok((grid, model))
    }

    /// Run length: `t_end`, capped by the horizon rule, rounded down to whole steps.
    pub fn horizon_time(&self) -> f64 {
        let mut t = self.evolver.t_end;
        if let Some(hz) = &self.horizon {
            t = t.min(hz.horizon(self.model.potential.h));
        }
        let n = (t / self.evolver.dt + 1e-9).floor();
        n * self.evolver.dt
    }

    /// H¹ size of the initial fluctuation.
    pub fn perturbation_amplitude(&self) -> f64 {
        match &self.perturbation {
            None => 0.0,
            Some(p) => p.amplitude.unwrap_or(0.5 * self.model.potential.h),
        }
    }

    /// The config with every default made explicit.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if let Some(p) = &mut c.perturbation {
            p.amplitude = Some(self.perturbation_amplitude());
        }
        c
    }
}
