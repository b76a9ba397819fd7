//! Shared fixtures for the kernel benchmarks.

use ctw_core::dynamics::{DrivingField, TwoLevelSystem};
use ctw_core::noise::NoiseSpec;
use ctw_core::series::uniform_grid;

/// Quantum dot with resonant drive and slow noise, as used in the g1/g2 figures.
pub fn dot() -> TwoLevelSystem {
    TwoLevelSystem::new(0.34, 0.5).expect("valid lifetimes")
}

pub fn noisy_field() -> DrivingField {
    DrivingField {
        rabi_mean: 0.1,
        detuning: 0.0,
        noise: NoiseSpec { tau_c: 4.0, var_domega: 0.01, var_de_rel: 1.0, epsilon: 0.0 },
    }
}

/// 101 delays over [0, 20] ns.
pub fn delays() -> Vec<f64> {
    uniform_grid(20.0, 0.2)
}
