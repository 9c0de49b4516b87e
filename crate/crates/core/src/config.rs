//! Versioned JSON job configuration.

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::DVector;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::presets::GainPreset;
use crate::sdp::TOL_GAMMA;
use crate::sim::{InitialProfile, MeasurementNoise, SimScenario, SpatialDisturbance, DEFAULT_STEP};
use crate::spectral::{PlantConfig, Regime};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Stabilize,
    MinN,
    MinGamma,
    Simulate,
    ReproduceTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Table {
    I,
    II,
}

impl Table {
    pub fn regime(self) -> Regime {
        match self {
            Table::I => Regime::Dirichlet,
            Table::II => Regime::Neumann,
        }
    }

    /// (ISS gains, L2 gains).
    pub fn presets(self) -> (GainPreset, GainPreset) {
        match self {
            Table::I => (GainPreset::DirichletStabilization, GainPreset::DirichletL2),
            Table::II => (GainPreset::NeumannStabilization, GainPreset::NeumannL2),
        }
    }
}

/// Sensing point: a number or the literal "1/pi".
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct XStar(pub f64);

impl<'de> Deserialize<'de> for XStar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(XStar(v)),
            Raw::Text(s) if s.trim() == "1/pi" => Ok(XStar(1.0 / PI)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!(
                "x_star must be a number or \"1/pi\", got \"{s}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub regime: Regime,
    pub nu: f64,
    #[serde(default)]
    pub x_star: Option<XStar>,
    pub delta: f64,
    #[serde(default = "one")]
    pub sobolev_split: f64,
    #[serde(default)]
    pub rho_w: f64,
    #[serde(default)]
    pub rho_u: f64,
}

fn one() -> f64 {
    1.0
}

impl PlantSection {
    pub fn to_plant(&self) -> PlantConfig {
        PlantConfig {
            nu: self.nu,
            regime: self.regime,
            x_star: self.x_star.map(|x| x.0),
            delta: self.delta,
            sobolev_split: self.sobolev_split,
            rho_w: self.rho_w,
            rho_u: self.rho_u,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GainSpec {
    Preset(GainPreset),
    Explicit { k0: Vec<f64>, l0: Vec<f64> },
    Auto { delta0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NSweep {
    #[serde(default = "one_usize")]
    pub n_from: usize,
    pub n_max: usize,
    /// Extra dimensions probed above N* to confirm monotonicity.
    #[serde(default)]
    pub confirm_above: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaBracket {
    #[serde(default)]
    pub lo: Option<f64>,
    pub hi: f64,
    #[serde(default = "default_tol_gamma")]
    pub tol: f64,
}

fn default_tol_gamma() -> f64 {
    TOL_GAMMA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub m: usize,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "zero_profile")]
    pub initial: InitialProfile,
    #[serde(default = "zero_disturbance")]
    pub disturbance: SpatialDisturbance,
    #[serde(default = "zero_noise")]
    pub noise: MeasurementNoise,
    /// gamma of the performance index J.
    #[serde(default)]
    pub gamma: f64,
    /// Certify the stabilization LMI first and report V along the run.
    #[serde(default)]
    pub lyapunov: bool,
    /// Include the modal coordinates in trajectory.csv.
    #[serde(default)]
    pub modes_in_csv: bool,
}

impl SimulationSection {
    /// Scenario for this section with the given plant, dimension and gains.
    pub fn scenario(&self, plant: &PlantConfig, n: usize, k0: DVector<f64>, l0: DVector<f64>) -> Result<SimScenario> {
        if self.m < n {
            return Err(Error::Config(format!("simulation.m = {} is below N = {n}", self.m)));
        }
        let mut sc = SimScenario::new(plant.clone(), n, self.m, k0, l0)?;
        sc.w0 = self.initial.modal(&sc.spectral)?;
        sc.d = self.disturbance;
        sc.sigma = self.noise;
        sc.horizon = self.horizon;
        sc.step = self.step;
        sc.record_every = self.record_every;
        sc.gamma = self.gamma;
        Ok(sc)
    }
}

fn default_horizon() -> f64 {
    3.5
}
fn default_step() -> f64 {
    DEFAULT_STEP
}
fn default_record_every() -> usize {
    10
}
fn zero_profile() -> InitialProfile {
    InitialProfile::Zero
}
fn zero_disturbance() -> SpatialDisturbance {
    SpatialDisturbance::Zero
}
fn zero_noise() -> MeasurementNoise {
    MeasurementNoise::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub schema: u32,
    pub mode: Mode,
    #[serde(default)]
    pub plant: Option<PlantSection>,
    #[serde(default)]
    pub gains: Option<GainSpec>,
    /// Observer dimension for stabilize, min-gamma and simulate.
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub sweep: Option<NSweep>,
    #[serde(default)]
    pub gamma: Option<GammaBracket>,
    #[serde(default)]
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub table: Option<Table>,
    #[serde(default)]
    pub outdir: Option<PathBuf>,
}

fn missing(mode: Mode, field: &str) -> Error {
    Error::Config(format!("mode {mode:?} requires '{field}'"))
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: JobConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Plant parameters: explicit section, else the preset's own.
    pub fn plant(&self) -> Result<PlantConfig> {
        match (&self.plant, &self.gains) {
            (Some(p), _) => Ok(p.to_plant()),
            (None, Some(GainSpec::Preset(g))) => Ok(g.plant()),
            _ => Err(missing(self.mode, "plant")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.mode == Mode::ReproduceTable {
            if self.table.is_none() {
                return Err(missing(self.mode, "table"));
            }
            if self.plant.is_some() || self.gains.is_some() {
                return Err(Error::Config("reproduce-table uses the bundled gains; drop 'plant' and 'gains'".into()));
            }
            return Ok(());
        }
        let plant = self.plant()?;
        plant.validate().map_err(|e| Error::Config(e.to_string()))?;
        let gains = self.gains.as_ref().ok_or_else(|| missing(self.mode, "gains"))?;
        match gains {
            GainSpec::Preset(p) if p.regime() != plant.regime => {
                return Err(Error::Config(format!("preset {} does not match the plant regime", p.name())));
            }
            GainSpec::Explicit { k0, l0 } => {
                if k0.iter().chain(l0).any(|v| !v.is_finite()) {
                    return Err(Error::Config("gains must be finite".into()));
                }
            }
            GainSpec::Auto { delta0 } if !(*delta0 > 0.0) => {
                return Err(Error::Config("delta0 must be positive".into()));
            }
            _ => {}
        }
        match self.mode {
            Mode::Stabilize => {
                self.n.ok_or_else(|| missing(self.mode, "n"))?;
            }
            Mode::MinN => {
                let s = self.sweep.as_ref().ok_or_else(|| missing(self.mode, "sweep"))?;
                if s.n_from == 0 || s.n_from > s.n_max {
                    return Err(Error::Config("sweep needs 1 <= n_from <= n_max".into()));
                }
            }
            Mode::MinGamma => {
                self.n.ok_or_else(|| missing(self.mode, "n"))?;
                let g = self.gamma.as_ref().ok_or_else(|| missing(self.mode, "gamma"))?;
                if !(g.hi > 0.0 && g.tol > 0.0) || g.lo.is_some_and(|lo| !(lo >= 0.0 && lo < g.hi)) {
                    return Err(Error::Config("gamma bracket needs 0 <= lo < hi and tol > 0".into()));
                }
            }
            Mode::Simulate => {
                self.n.ok_or_else(|| missing(self.mode, "n"))?;
                let s = self.simulation.as_ref().ok_or_else(|| missing(self.mode, "simulation"))?;
                if !(s.horizon > 0.0 && s.step > 0.0) || s.record_every == 0 {
                    return Err(Error::Config("simulation needs horizon, step and record_every positive".into()));
                }
                if s.gamma < 0.0 {
                    return Err(Error::Config("simulation gamma must be non-negative".into()));
                }
            }
            Mode::ReproduceTable => unreachable!(),
        }
        Ok(())
    }
}
