//! Emitter model, drive, and the noise-free or BPP-effective correlation
//! functions obtained from the quantum regression theorem.

mod correlation;
mod regime;

pub use correlation::{g1_lab, g1_rotating, g2_rotating, Regression};
pub use regime::{regime_classify, RegimeReport, RegimeThresholds};

use crate::error::{validation, Error, Result};
use crate::noise::NoiseSpec;
use crate::qcore::{
    build_liouvillian, sigma_minus, spin_x, spin_z, CollapseOperator, Liouvillian, OperatorMatrix,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelSystem {
    /// Population lifetime (ns).
    pub t1: f64,
    /// Coherence time (ns), at most 2·t1.
    pub t2: f64,
}

impl TwoLevelSystem {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        let s = TwoLevelSystem { t1, t2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t1 > 0.0 && self.t1.is_finite()) {
            return Err(validation(format!("t1 must be positive, got {}", self.t1)));
        }
        if !(self.t2 > 0.0 && self.t2 <= 2.0 * self.t1 * (1.0 + 1e-12)) {
            return Err(validation(format!(
                "t2 must lie in (0, 2·t1] = (0, {}], got {}",
                2.0 * self.t1,
                self.t2
            )));
        }
        Ok(())
    }

    /// Pure dephasing rate 1/T2 − 1/(2T1).
    pub fn pure_dephasing_rate(&self) -> f64 {
        (1.0 / self.t2 - 0.5 / self.t1).max(0.0)
    }

    /// Radiative decay on S− and pure dephasing on Sz.
    pub fn relaxation_ops(&self) -> Vec<CollapseOperator> {
        vec![
            CollapseOperator::scaled(sigma_minus(), 1.0 / self.t1),
            // D[√γ·Sz] damps coherences at γ/2
            CollapseOperator::scaled(spin_z(), 2.0 * self.pure_dephasing_rate()),
        ]
    }

    pub fn slowest_time(&self) -> f64 {
        self.t1.max(self.t2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrivingField {
    /// Mean Rabi coupling Ω̄1 (rad/ns).
    pub rabi_mean: f64,
    /// Detuning Δω (rad/ns).
    pub detuning: f64,
    pub noise: NoiseSpec,
}

impl DrivingField {
    pub fn validate(&self) -> Result<()> {
        if !(self.rabi_mean >= 0.0 && self.rabi_mean.is_finite()) {
            return Err(validation(format!("rabi_mean must be >= 0, got {}", self.rabi_mean)));
        }
        if !self.detuning.is_finite() {
            return Err(validation("detuning must be finite"));
        }
        self.noise.validate()
    }

    /// Generalized Rabi frequency √(Ω̄1² + Δω²).
    pub fn generalized_rabi(&self) -> f64 {
        self.rabi_mean.hypot(self.detuning)
    }

    pub fn hamiltonian(&self) -> OperatorMatrix {
        OperatorMatrix::driven(self.rabi_mean, self.detuning)
    }
}

pub fn saturation_static(system: &TwoLevelSystem, rabi: f64, detuning: f64) -> f64 {
    let dt = detuning * system.t2;
    rabi * rabi * system.t1 * system.t2 / (1.0 + dt * dt)
}

pub fn saturation(system: &TwoLevelSystem, field: &DrivingField) -> f64 {
    saturation_static(system, field.rabi_mean, field.detuning)
}

/// Rabi coupling giving saturation `s` at the given detuning.
pub fn rabi_for_saturation(system: &TwoLevelSystem, s: f64, detuning: f64) -> f64 {
    let dt = detuning * system.t2;
    (s * (1.0 + dt * dt) / (system.t1 * system.t2)).sqrt()
}

/// Rates below this multiple of the largest contribution are rounding.
const RADICAND_TOL: f64 = 1e-12;

fn radicand(operator: &'static str, rate: f64, scale: f64) -> Result<f64> {
    if rate >= 0.0 {
        Ok(rate)
    } else if rate >= -RADICAND_TOL * scale {
        Ok(0.0)
    } else {
        Err(Error::ParameterDomain { operator, rate })
    }
}

/// Effective collapse operators of fast drive fluctuations in the
/// non-viscous limit, on Sx, Sz and Sx + Sz.
pub fn bpp_collapse_ops(system: &TwoLevelSystem, field: &DrivingField) -> Result<Vec<CollapseOperator>> {
    system.validate()?;
    field.validate()?;
    let n = &field.noise;
    let omega = field.rabi_mean;
    let amp = omega * omega * n.var_de_rel;
    let cross = omega * n.covariance();
    let scale = amp.abs() + n.var_domega + cross.abs();
    let two_tc = 2.0 * n.tau_c;
    let r1 = radicand("L1", two_tc * (amp - cross), two_tc * scale)?;
    let r2 = radicand("L2", two_tc * (n.var_domega - cross), two_tc * scale)?;
    let r3 = radicand("L3", two_tc * cross, two_tc * scale)?;
    Ok(vec![
        CollapseOperator::scaled(spin_x(), r1),
        CollapseOperator::scaled(spin_z(), r2),
        CollapseOperator::scaled(spin_x() + spin_z(), r3),
    ])
}

/// Noise-free generator for a static drive.
pub fn static_liouvillian(system: &TwoLevelSystem, rabi: f64, detuning: f64) -> Result<Liouvillian> {
    build_liouvillian(&OperatorMatrix::driven(rabi, detuning), &system.relaxation_ops())
}

/// Generator with the BPP operators added to the intrinsic relaxation.
pub fn bpp_liouvillian(system: &TwoLevelSystem, field: &DrivingField) -> Result<Liouvillian> {
    let mut ops = system.relaxation_ops();
    ops.extend(bpp_collapse_ops(system, field)?);
    build_liouvillian(&field.hamiltonian(), &ops)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{propagate, DensityState, Mat2, C64};
    use approx::assert_relative_eq;

    fn sys() -> TwoLevelSystem {
        TwoLevelSystem::new(0.34, 0.5).unwrap()
    }

    fn field(rabi: f64, noise: NoiseSpec) -> DrivingField {
        DrivingField { rabi_mean: rabi, detuning: 0.0, noise }
    }

    #[test]
    fn saturation_values() {
        let s = sys();
        assert_relative_eq!(saturation(&s, &field(0.1, NoiseSpec::quiet(4.0))), 1.7e-3, max_relative = 1e-12);
        assert_relative_eq!(saturation(&s, &field(2.0, NoiseSpec::quiet(4.0))), 0.68, max_relative = 1e-12);
        assert_eq!(saturation(&s, &field(0.0, NoiseSpec::quiet(4.0))), 0.0);
        let r = rabi_for_saturation(&s, 0.3, 0.7);
        assert_relative_eq!(saturation_static(&s, r, 0.7), 0.3, max_relative = 1e-12);
    }

    #[test]
    fn system_validation() {
        assert!(TwoLevelSystem::new(0.34, 0.69).is_err());
        assert!(TwoLevelSystem::new(0.34, 0.68).is_ok());
        assert!(TwoLevelSystem::new(0.0, 0.1).is_err());
    }

    #[test]
    fn bpp_quiet_is_zero() {
        let ops = bpp_collapse_ops(&sys(), &field(0.1, NoiseSpec::quiet(4.0))).unwrap();
        assert_eq!(ops.len(), 3);
        assert!(ops.iter().all(|o| o.is_zero()));
    }

    // oracle: propagate a coherence under the L2 channel alone and fit its decay
    #[test]
    fn bpp_dephasing_rate() {
        let noise = NoiseSpec { tau_c: 4.0, var_domega: 0.01, var_de_rel: 0.0, epsilon: 0.0 };
        let ops = bpp_collapse_ops(&sys(), &field(0.0, noise)).unwrap();
        let l2 = ops[1].matrix();
        // √0.08 on Sz
        assert_relative_eq!(l2[(1, 1)].re, 0.5 * 0.08f64.sqrt(), epsilon = 1e-15);
        let l = build_liouvillian(&OperatorMatrix::zero(), &ops).unwrap();
        let h = C64::new(0.5, 0.0);
        let rho = DensityState::new(Mat2::new(h, h, h, h)).unwrap();
        let t = 10.0;
        let c = propagate(&l, &rho, t).unwrap().coherence().re;
        let rate = -(c / 0.5).ln() / t;
        assert_relative_eq!(rate, 0.04, max_relative = 1e-10);
    }

    #[test]
    fn bpp_fully_correlated() {
        // Ω̄·Q⁻¹ = σω makes the L1 and L2 radicands cancel
        let noise = NoiseSpec { tau_c: 0.01, var_domega: 0.04, var_de_rel: 0.04, epsilon: 1.0 };
        let ops = bpp_collapse_ops(&sys(), &field(1.0, noise)).unwrap();
        assert!(ops[0].is_zero());
        assert!(ops[1].is_zero());
        assert!(!ops[2].is_zero());
    }

    #[test]
    fn bpp_negative_radicand() {
        let noise = NoiseSpec { tau_c: 0.01, var_domega: 0.04, var_de_rel: 0.04, epsilon: -0.5 };
        let err = bpp_collapse_ops(&sys(), &field(1.0, noise)).unwrap_err();
        assert!(matches!(err, Error::ParameterDomain { operator: "L3", .. }));
        let noise = NoiseSpec { tau_c: 0.01, var_domega: 0.01, var_de_rel: 0.04, epsilon: 1.0 };
        let err = bpp_collapse_ops(&sys(), &field(1.0, noise)).unwrap_err();
        assert!(matches!(err, Error::ParameterDomain { operator: "L2", .. }));
    }
}
