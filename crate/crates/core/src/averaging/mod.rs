//! Averaging of noise-free correlation functions over slow drive
//! fluctuations.

mod bunching;
mod pseudo;
mod quadrature;
mod spline;

pub use bunching::{
    bunching_ratio, default_bunching_table, fit_bunching, BunchingModel, BunchingRow,
    BunchingTable, TableParameters, TABLE_VERSION,
};
pub use pseudo::{averaged_correlators, frozen_intensity, AveragedCorrelators};
pub use quadrature::NormalRule;
pub use spline::Pchip;

use crate::error::Result;
use crate::noise::NoiseSpec;
use crate::qcore::C64;
use crate::series::{CorrelationSeries, SeriesKind};
use rayon::prelude::*;

pub const DEFAULT_ORDER: usize = 24;

/// One realization of the drive: relative field amplitude E/Ē and
/// frequency offset δω (rad/ns).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub e_rel: f64,
    pub domega: f64,
}

impl FieldSample {
    pub fn mean() -> Self {
        FieldSample { e_rel: 1.0, domega: 0.0 }
    }
}

/// Which reduced axes carry variance: the one shared by x and y, and the
/// one private to y.
fn active_axes(spec: &NoiseSpec) -> (bool, bool) {
    let sw = spec.sigma_domega() > 0.0;
    let se = spec.sigma_de_rel() > 0.0;
    (sw || (se && spec.epsilon != 0.0), se && spec.epsilon.abs() < 1.0)
}

fn rule_for(active: bool, full: &NormalRule) -> NormalRule {
    if active {
        full.clone()
    } else {
        NormalRule::degenerate()
    }
}

/// Reduced pair `(x, y)` with correlation ε from independent normals.
fn correlate(spec: &NoiseSpec, u1: f64, u2: f64) -> (f64, f64) {
    let eps = spec.epsilon;
    (u1, eps * u1 + (1.0 - eps * eps).max(0.0).sqrt() * u2)
}

fn physical(spec: &NoiseSpec, x: f64, y: f64) -> FieldSample {
    FieldSample { e_rel: 1.0 + spec.sigma_de_rel() * y, domega: spec.sigma_domega() * x }
}

/// Tensor-product quadrature nodes of the two-time law at lag `tau`:
/// `(weight, sample at 0, sample at tau)`, in a fixed order.
pub(crate) fn two_time_nodes(spec: &NoiseSpec, tau: f64, order: usize) -> Result<Vec<(f64, FieldSample, FieldSample)>> {
    let full = NormalRule::new(order)?;
    let (a1, a2) = active_axes(spec);
    let r1 = rule_for(a1, &full);
    let r2 = rule_for(a2, &full);
    let a = (-tau.abs() / spec.tau_c).exp();
    let s = (-(-2.0 * tau.abs() / spec.tau_c).exp_m1()).sqrt();
    let (q1, q2) = if s > 0.0 { (r1.clone(), r2.clone()) } else { (NormalRule::degenerate(), NormalRule::degenerate()) };
    let mut out = Vec::with_capacity(r1.len() * r2.len() * q1.len() * q2.len());
    for (i, &u1) in r1.nodes.iter().enumerate() {
        for (j, &u2) in r2.nodes.iter().enumerate() {
            let w1 = r1.weights[i] * r2.weights[j];
            let (x1, y1) = correlate(spec, u1, u2);
            let first = physical(spec, x1, y1);
            for (k, &v1) in q1.nodes.iter().enumerate() {
                for (l, &v2) in q2.nodes.iter().enumerate() {
                    let (dx, dy) = correlate(spec, v1, v2);
                    let second = physical(spec, a * x1 + s * dx, a * y1 + s * dy);
                    out.push((w1 * q1.weights[k] * q2.weights[l], first, second));
                }
            }
        }
    }
    Ok(out)
}

/// Average of `kernel(sample at τ, sample at 0, τ)` over the joint
/// stationary law of the drive at lag τ.
pub fn pseudo_adiabatic_average<K>(kernel: K, spec: &NoiseSpec, tau: f64, order: usize) -> Result<C64>
where
    K: Fn(&FieldSample, &FieldSample, f64) -> C64 + Sync,
{
    spec.validate()?;
    let nodes = two_time_nodes(spec, tau, order)?;
    let partial: Vec<C64> = nodes
        .par_chunks(256)
        .map(|chunk| chunk.iter().map(|(w, s1, s2)| kernel(s2, s1, tau) * *w).sum())
        .collect();
    Ok(partial.into_iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrozenMode {
    FullQuadrature,
    /// Two-point rule exact for quadratic responses.
    TwoPoint,
}

/// Average over a field frozen at one stationary draw.
pub fn frozen_average<G>(correlator: G, spec: &NoiseSpec, mode: FrozenMode) -> Result<C64>
where
    G: Fn(&FieldSample) -> C64 + Sync,
{
    frozen_average_with_order(correlator, spec, mode, DEFAULT_ORDER)
}

pub fn frozen_average_with_order<G>(correlator: G, spec: &NoiseSpec, mode: FrozenMode, order: usize) -> Result<C64>
where
    G: Fn(&FieldSample) -> C64 + Sync,
{
    spec.validate()?;
    match mode {
        FrozenMode::FullQuadrature => {
            let full = NormalRule::new(order)?;
            let (a1, a2) = active_axes(spec);
            let r1 = rule_for(a1, &full);
            let r2 = rule_for(a2, &full);
            let mut acc = C64::new(0.0, 0.0);
            for (i, &u1) in r1.nodes.iter().enumerate() {
                for (j, &u2) in r2.nodes.iter().enumerate() {
                    let (x, y) = correlate(spec, u1, u2);
                    acc += correlator(&physical(spec, x, y)) * (r1.weights[i] * r2.weights[j]);
                }
            }
            Ok(acc)
        }
        FrozenMode::TwoPoint => {
            let q = spec.var_de_rel;
            let e = (1.0 + q).sqrt();
            let sw = spec.sigma_domega();
            let c = if sw > 0.0 { spec.epsilon * spec.sigma_de_rel() / e } else { 0.0 };
            let plus = correlator(&FieldSample { e_rel: e, domega: sw });
            let minus = correlator(&FieldSample { e_rel: e, domega: -sw });
            Ok(plus * (0.5 * (1.0 + c)) + minus * (0.5 * (1.0 - c)))
        }
    }
}

/// Weak-driving multiplier of g̃1 under slow amplitude noise.
pub fn weak_g1_multiplier(q_inv_sq: f64, tau: f64, tau_c: f64) -> f64 {
    1.0 - q_inv_sq * (1.0 - (-tau.abs() / tau_c).exp()) / (1.0 + q_inv_sq)
}

pub fn weak_g1_average(g1_rot: &CorrelationSeries, spec: &NoiseSpec) -> CorrelationSeries {
    let q = spec.var_de_rel;
    g1_rot
        .map(g1_rot.kind, |tau, v| v * weak_g1_multiplier(q, tau, spec.tau_c))
        .with_attr("q_inv_sq", q)
}

pub fn weak_g2_average(g2: &CorrelationSeries, model: &BunchingModel) -> CorrelationSeries {
    g2.map(SeriesKind::G2, |tau, v| v * model.multiplier(tau))
        .with_attr("bunching_a", model.a_coeff)
        .with_attr("bunching_b", model.b_coeff)
}
