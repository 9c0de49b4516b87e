//! Published gain sets and the matching plant parameters, bundled as fixtures.

use std::f64::consts::PI;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::spectral::{PlantConfig, Regime};

/// Anti-diffusion coefficient of the reference examples.
pub const NU: f64 = 10.0;
/// Sensing point of the Dirichlet examples.
pub const X_STAR: f64 = 1.0 / PI;
/// Sobolev split of the Neumann examples.
pub const SOBOLEV_SPLIT: f64 = 1.0;
/// Performance weights of the L2-gain examples.
pub const RHO_W: f64 = 0.1;
pub const RHO_U: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainPreset {
    DirichletStabilization,
    DirichletL2,
    NeumannStabilization,
    NeumannL2,
}

impl GainPreset {
    pub const ALL: [GainPreset; 4] = [
        GainPreset::DirichletStabilization,
        GainPreset::DirichletL2,
        GainPreset::NeumannStabilization,
        GainPreset::NeumannL2,
    ];

    pub fn regime(self) -> Regime {
        match self {
            GainPreset::DirichletStabilization | GainPreset::DirichletL2 => Regime::Dirichlet,
            GainPreset::NeumannStabilization | GainPreset::NeumannL2 => Regime::Neumann,
        }
    }

    /// True for the gains tuned for the L2-gain (delta = 0) analysis.
    pub fn is_l2(self) -> bool {
        matches!(self, GainPreset::DirichletL2 | GainPreset::NeumannL2)
    }

    /// Decay rate the gains were designed for.
    pub fn delta(self) -> f64 {
        if self.is_l2() {
            0.0
        } else {
            1.0
        }
    }

    pub fn k0(self) -> DVector<f64> {
        DVector::from_vec(match self {
            GainPreset::DirichletStabilization => vec![7.1415, 26.0901],
            GainPreset::DirichletL2 => vec![3.0672, 15.911],
            GainPreset::NeumannStabilization => vec![477.83, 32.61, -3315.44],
            GainPreset::NeumannL2 => vec![291.602, 13.311, -2043.3],
        })
    }

    pub fn l0(self) -> DVector<f64> {
        DVector::from_vec(match self {
            GainPreset::DirichletStabilization => vec![2.3419],
            GainPreset::DirichletL2 => vec![1.501],
            GainPreset::NeumannStabilization => vec![-6.147, 8.101],
            GainPreset::NeumannL2 => vec![-1.967, 3.741],
        })
    }

    /// Plant parameters the gains were published with.
    pub fn plant(self) -> PlantConfig {
        let delta = self.delta();
        let p = match self.regime() {
            Regime::Dirichlet => PlantConfig::dirichlet(NU, X_STAR, delta),
            Regime::Neumann => PlantConfig::neumann(NU, SOBOLEV_SPLIT, delta),
        };
        if self.is_l2() {
            p.with_weights(RHO_W, RHO_U)
        } else {
            p
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GainPreset::DirichletStabilization => "dirichlet-stabilization",
            GainPreset::DirichletL2 => "dirichlet-l2",
            GainPreset::NeumannStabilization => "neumann-stabilization",
            GainPreset::NeumannL2 => "neumann-l2",
        }
    }
}

impl FromStr for GainPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        GainPreset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown gain preset '{s}'")))
    }
}

/// Observer dimensions of the two published feasibility tables.
pub fn table_grid(regime: Regime) -> Vec<usize> {
    match regime {
        Regime::Dirichlet => vec![4, 6, 8, 10, 12],
        Regime::Neumann => vec![5, 7, 9, 11, 13],
    }
}
