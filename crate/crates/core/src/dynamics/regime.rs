use super::{DrivingField, TwoLevelSystem};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    /// Bound for the "≪ 1" phase-accumulation and decoupling ratios.
    pub theta: f64,
    /// Bound on max(T1, T2)/τC for pseudo-adiabatic averaging.
    pub pseudo_adiabatic: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        RegimeThresholds { theta: 0.1, pseudo_adiabatic: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub bpp_ok: bool,
    pub pseudo_adiabatic_ok: bool,
    pub frame_decoupled: bool,
    pub monte_carlo_required: bool,
    pub diagnostics: BTreeMap<String, f64>,
}

impl RegimeReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "bpp_ok={}\npseudo_adiabatic_ok={}\nframe_decoupled={}\nmonte_carlo_required={}\n",
            self.bpp_ok, self.pseudo_adiabatic_ok, self.frame_decoupled, self.monte_carlo_required
        );
        for (k, v) in &self.diagnostics {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

pub fn regime_classify(
    system: &TwoLevelSystem,
    field: &DrivingField,
    interferometer_delay: Option<f64>,
    thresholds: &RegimeThresholds,
) -> RegimeReport {
    let n = &field.noise;
    let tc = n.tau_c;
    let omega = field.generalized_rabi();
    let gamma = n.gamma_l();
    let mut d = BTreeMap::new();
    let freq_ratio = n.sigma_domega() * tc;
    let amp_ratio = omega * n.sigma_de_rel() * tc;
    let relax_ratio = system.slowest_time() / tc;
    d.insert("sigma_domega_tau_c".to_string(), freq_ratio);
    d.insert("rabi_sigma_e_tau_c".to_string(), amp_ratio);
    d.insert("rabi_tau_c".to_string(), omega * tc);
    d.insert("relaxation_over_tau_c".to_string(), relax_ratio);
    d.insert("gamma_l_tau_c".to_string(), gamma * tc);
    if let Some(delay) = interferometer_delay {
        d.insert("gamma_l_delay".to_string(), gamma * delay);
    }
    let quiet = n.is_quiet();
    let bpp_ok = quiet || (freq_ratio < thresholds.theta && amp_ratio < thresholds.theta);
    let pseudo_adiabatic_ok = quiet || relax_ratio < thresholds.pseudo_adiabatic;
    RegimeReport {
        bpp_ok,
        pseudo_adiabatic_ok,
        frame_decoupled: gamma * tc < thresholds.theta,
        monte_carlo_required: !(bpp_ok || pseudo_adiabatic_ok),
        diagnostics: d,
    }
}
