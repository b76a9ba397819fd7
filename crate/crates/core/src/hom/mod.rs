//! Hong-Ou-Mandel interferometer response, visibility and the coalescence
//! time window.

mod visibility;
mod weights;

pub use visibility::{convolve_irf, ctw, visibility, CtwResult};
pub use weights::{envelope, hom_weights, Envelope, ResponseTerm, WeightTable, RESPONSE_TERMS, TERM1_SHIFTED};

use crate::averaging::BunchingModel;
use crate::error::{validation, Error, Result};
use crate::noise::NoiseSpec;
use crate::qcore::C64;
use crate::series::{CorrelationSeries, SeriesKind};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

/// Γ_L·Δt below which one-photon interference terms are not negligible.
pub const DECOUPLING_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomSetup {
    /// Intensity reflection R of both splitters.
    pub r_int: f64,
    /// Intensity transmission T of both splitters.
    pub t_int: f64,
    /// Arm delay Δt (ns).
    pub delay: f64,
    /// Polarization angle φ between the arms (rad); 0 is parallel.
    pub pol_angle: f64,
    /// Laser blurring rate Γ_L = 1/T_L (ns⁻¹); may be infinite.
    pub gamma_l: f64,
    /// Detector response FWHM (ns).
    #[serde(default)]
    pub irf_fwhm: Option<f64>,
}

impl HomSetup {
    pub fn balanced(delay: f64, gamma_l: f64) -> Self {
        HomSetup { r_int: 0.5, t_int: 0.5, delay, pol_angle: 0.0, gamma_l, irf_fwhm: None }
    }

    pub fn crossed(self) -> Self {
        HomSetup { pol_angle: FRAC_PI_2, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_int >= 0.0 && self.t_int >= 0.0) || (self.r_int + self.t_int - 1.0).abs() > 1e-12 {
            return Err(validation(format!(
                "splitters must be lossless: R + T = {} (R = {}, T = {})",
                self.r_int + self.t_int,
                self.r_int,
                self.t_int
            )));
        }
        if !(self.delay > 0.0 && self.delay.is_finite()) {
            return Err(validation(format!("arm delay must be positive, got {}", self.delay)));
        }
        if !(self.gamma_l >= 0.0) {
            return Err(validation(format!("gamma_l must be >= 0, got {}", self.gamma_l)));
        }
        if !self.pol_angle.is_finite() {
            return Err(validation("polarization angle must be finite"));
        }
        if let Some(f) = self.irf_fwhm {
            if !(f >= 0.0 && f.is_finite()) {
                return Err(validation(format!("irf_fwhm must be >= 0, got {f}")));
            }
        }
        Ok(())
    }

    /// α = R/T.
    pub fn alpha(&self) -> f64 {
        self.r_int / self.t_int
    }

    pub fn interference_weight(&self) -> f64 {
        let c = self.pol_angle.cos();
        if c.abs() < 1e-15 {
            0.0
        } else {
            c * c
        }
    }

    fn kind(&self) -> SeriesKind {
        if self.interference_weight() == 0.0 {
            SeriesKind::G2xPerp
        } else {
            SeriesKind::G2xPar
        }
    }

    /// Laser coherence time T_L = 1/Γ_L.
    pub fn laser_coherence_time(&self) -> f64 {
        1.0 / self.gamma_l
    }
}

fn check_inputs(g2: &CorrelationSeries, g1: &CorrelationSeries, setup: &HomSetup) -> Result<()> {
    setup.validate()?;
    if !g2.kind.is_g2() || g2.kind != SeriesKind::G2 {
        return Err(validation(format!("expected a g2 series, got {}", g2.kind)));
    }
    if g1.kind != SeriesKind::G1Rot {
        return Err(validation(format!("expected a rotating-frame g1 series, got {}", g1.kind)));
    }
    if !g2.normalized || !g1.normalized {
        return Err(validation("g2x assembly needs normalized inputs"));
    }
    if g1.is_empty() {
        return Err(validation("empty g1 series"));
    }
    let lo = g1.delays[0] - setup.delay;
    let hi = g1.delays[g1.len() - 1] + setup.delay;
    if !g2.covers(lo, hi) {
        return Err(Error::Coverage(format!(
            "g2 grid must cover [{lo}, {hi}] ns (output grid shifted by ±Δt)"
        )));
    }
    let gd = setup.gamma_l * setup.delay;
    if gd < DECOUPLING_THRESHOLD {
        log::warn!("Γ_L·Δt = {gd:.3} is below {DECOUPLING_THRESHOLD}: one-photon interference terms are not negligible");
    }
    Ok(())
}

fn g2_at(g2: &CorrelationSeries, tau: f64) -> Result<f64> {
    g2.value_at(tau)
        .map(|z| z.re)
        .ok_or_else(|| Error::Coverage(format!("g2 undefined at {tau} ns")))
}

/// Normalized cross-correlation of the interferometer outputs when the
/// one-photon interference terms are wiped out, on the grid of `g1_rot`.
pub fn g2x_bpp(g2: &CorrelationSeries, g1_rot: &CorrelationSeries, setup: &HomSetup) -> Result<CorrelationSeries> {
    check_inputs(g2, g1_rot, setup)?;
    let (r, t, dt) = (setup.r_int, setup.t_int, setup.delay);
    let sum2 = r * r + t * t;
    let pol = setup.interference_weight();
    let mut values = Vec::with_capacity(g1_rot.len());
    for (k, &tau) in g1_rot.delays.iter().enumerate() {
        let intensity = sum2 * g2_at(g2, tau)? + t * t * g2_at(g2, tau - dt)? + r * r * g2_at(g2, tau + dt)?;
        let interference = 2.0
            * r
            * t
            * pol
            * envelope(Envelope::TwoPhoton, tau, dt, setup.gamma_l)
            * g1_rot.values[k].norm_sqr();
        values.push(C64::new((intensity - interference) / (2.0 * sum2), 0.0));
    }
    Ok(CorrelationSeries::new(g1_rot.delays.clone(), values, setup.kind(), true)?
        .with_attr("model", "bpp")
        .with_attr("delta_t", dt)
        .with_attr("gamma_l", setup.gamma_l)
        .with_attr("r_int", r)
        .with_attr("pol_angle", setup.pol_angle))
}

/// W2(τ) = ½(1 + A e^{−|τ|/τC} + B e^{−2|τ|/τC}).
pub fn w2(model: &BunchingModel, tau: f64) -> f64 {
    0.5 * model.multiplier(tau)
}

/// Weight of |g̃1|² in the noisy weak-driving response.
pub fn w1(tau: f64, setup: &HomSetup, spec: &NoiseSpec) -> f64 {
    let a = setup.alpha();
    let q = spec.var_de_rel;
    let tc = spec.tau_c;
    let dt = setup.delay;
    let e = |x: f64| (-x.abs() / tc).exp();
    let bracket = (1.0 + q * e(tau)).powi(2)
        + 2.0 * q * e(dt) * (1.0 + 2.0 * q * e(dt))
        + q * (e(dt + tau) + e(dt - tau));
    a * envelope(Envelope::TwoPhoton, tau, dt, setup.gamma_l) / (1.0 + a * a) / (1.0 + q).powi(2) * bracket
}

/// Noisy weak-driving response assembled from the noise-free `g2` and
/// `g1_rot`: the drive averaging enters only through W1 and W2.
pub fn g2x_weak_noisy(
    g2: &CorrelationSeries,
    g1_rot: &CorrelationSeries,
    setup: &HomSetup,
    spec: &NoiseSpec,
    model: &BunchingModel,
) -> Result<CorrelationSeries> {
    check_inputs(g2, g1_rot, setup)?;
    spec.validate()?;
    let a2 = setup.alpha().powi(2);
    let dt = setup.delay;
    let pol = setup.interference_weight();
    let mut values = Vec::with_capacity(g1_rot.len());
    for (k, &tau) in g1_rot.delays.iter().enumerate() {
        let v = w2(model, tau) * g2_at(g2, tau)?
            + (a2 * w2(model, tau - dt) * g2_at(g2, tau - dt)? + w2(model, tau + dt) * g2_at(g2, tau + dt)?)
                / (a2 + 1.0)
            - pol * w1(tau, setup, spec) * g1_rot.values[k].norm_sqr();
        values.push(C64::new(v, 0.0));
    }
    Ok(CorrelationSeries::new(g1_rot.delays.clone(), values, setup.kind(), true)?
        .with_attr("model", "weak_noisy")
        .with_attr("delta_t", dt)
        .with_attr("gamma_l", setup.gamma_l)
        .with_attr("r_int", setup.r_int)
        .with_attr("pol_angle", setup.pol_angle)
        .with_attr("q_inv_sq", spec.var_de_rel)
        .with_attr("bunching_a", model.a_coeff)
        .with_attr("bunching_b", model.b_coeff))
}
