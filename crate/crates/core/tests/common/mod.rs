#![allow(dead_code)]

use std::f64::consts::PI;

use kse_synth::presets::GainPreset;
use kse_synth::spectral::{PlantConfig, SpectralModel};
use nalgebra::DVector;

/// Composite Simpson rule on [a, b] with `panels` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels % 2 == 0);
    let h = (b - a) / panels as f64;
    let mut s = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn dirichlet_plant() -> PlantConfig {
    PlantConfig::dirichlet(10.0, 1.0 / PI, 1.0)
}

pub fn neumann_plant() -> PlantConfig {
    PlantConfig::neumann(10.0, 1.0, 1.0)
}

pub fn spectral(plant: &PlantConfig, n: usize, m: usize) -> SpectralModel {
    SpectralModel::new(plant, n, m).unwrap()
}

pub fn gains(p: GainPreset) -> (DVector<f64>, DVector<f64>) {
    (p.k0(), p.l0())
}
