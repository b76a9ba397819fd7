use super::{averaged_correlators, Pchip};
use crate::dynamics::{g2_rotating, DrivingField, TwoLevelSystem};
use crate::error::{validation, Error, Result};
use crate::noise::NoiseSpec;
use crate::series::{uniform_grid, CorrelationSeries, SeriesKind};
use serde::{Deserialize, Serialize};

pub const TABLE_VERSION: u32 = 1;

const POOR_FIT_RMS: f64 = 0.1;

/// Extra-bunching multiplier 1 + A·e^{−|τ|/τC} + B·e^{−2|τ|/τC}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingModel {
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub q_inv_sq: f64,
    pub tau_c: f64,
    pub residual_rms: f64,
    pub poor_fit: bool,
}

impl BunchingModel {
    pub fn new(a_coeff: f64, b_coeff: f64, q_inv_sq: f64, tau_c: f64) -> Self {
        BunchingModel { a_coeff, b_coeff, q_inv_sq, tau_c, residual_rms: 0.0, poor_fit: false }
    }

    pub fn multiplier(&self, tau: f64) -> f64 {
        let e = (-tau.abs() / self.tau_c).exp();
        1.0 + self.a_coeff * e + self.b_coeff * e * e
    }
}

/// `averaged/bare − 1` on the points where the bare g2 is at least `min_g2`
/// (the ratio is ill-conditioned near the antibunching dip).
pub fn bunching_ratio(averaged: &CorrelationSeries, bare: &CorrelationSeries, min_g2: f64) -> Result<CorrelationSeries> {
    if !averaged.same_grid(bare) {
        return Err(validation("bunching ratio needs series on the same grid"));
    }
    let (mut d, mut v) = (Vec::new(), Vec::new());
    for k in 0..bare.len() {
        let g = bare.values[k].re;
        if g >= min_g2 {
            d.push(bare.delays[k]);
            v.push(averaged.values[k].re / g - 1.0);
        }
    }
    let mut out = CorrelationSeries::from_real(d, v, SeriesKind::Auxiliary, false)?;
    out.attrs = averaged.attrs.clone();
    Ok(out)
}

/// Least-squares fit of `A·e^{−|τ|/τC} + B·e^{−2|τ|/τC}` with τC fixed.
/// Q⁻² is read from the series' `q_inv_sq` attribute when present.
pub fn fit_bunching(ratio: &CorrelationSeries, tau_c: f64) -> Result<BunchingModel> {
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(validation(format!("tau_c must be positive, got {tau_c}")));
    }
    if ratio.len() < 4 {
        return Err(validation(format!("bunching fit needs at least 4 points, got {}", ratio.len())));
    }
    let span = ratio.delays.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if span < 5.0 * tau_c * (1.0 - 1e-9) {
        log::warn!("bunching fit grid reaches {span} ns, short of 5 tau_c = {} ns", 5.0 * tau_c);
    }
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (t, z) in ratio.delays.iter().zip(&ratio.values) {
        let e1 = (-t.abs() / tau_c).exp();
        let e2 = e1 * e1;
        s11 += e1 * e1;
        s12 += e1 * e2;
        s22 += e2 * e2;
        r1 += e1 * z.re;
        r2 += e2 * z.re;
    }
    let det = s11 * s22 - s12 * s12;
    if !(det > 1e-14 * s11 * s22) {
        return Err(Error::Validation(
            "bunching fit is degenerate: the grid does not separate the two exponentials".into(),
        ));
    }
    let a = (s22 * r1 - s12 * r2) / det;
    let b = (s11 * r2 - s12 * r1) / det;
    let q = ratio.attr_f64("q_inv_sq").unwrap_or(0.0);
    let mut model = BunchingModel::new(a, b, q, tau_c);
    let ss: f64 = ratio
        .delays
        .iter()
        .zip(&ratio.values)
        .map(|(t, z)| (model.multiplier(*t) - 1.0 - z.re).powi(2))
        .sum();
    model.residual_rms = (ss / ratio.len() as f64).sqrt();
    if model.residual_rms > POOR_FIT_RMS {
        model.poor_fit = true;
        log::warn!("poor bunching fit: residual RMS {:.3} at Q^-2 = {q}", model.residual_rms);
    }
    Ok(model)
}

/// Parameters the cached table was generated with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableParameters {
    pub t1: f64,
    pub t2: f64,
    pub rabi_mean: f64,
    pub sigma_domega: f64,
    pub tau_c: f64,
    pub epsilon: f64,
    pub quadrature_order: usize,
    pub grid_max: f64,
    pub grid_step: f64,
    pub min_g2: f64,
}

impl Default for TableParameters {
    fn default() -> Self {
        TableParameters {
            t1: 0.34,
            t2: 0.5,
            rabi_mean: 1e-3,
            sigma_domega: 0.1,
            tau_c: 4.0,
            epsilon: 0.0,
            quadrature_order: 12,
            grid_max: 20.0,
            grid_step: 0.2,
            min_g2: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BunchingRow {
    /// Q; `None` for the noise-free anchor Q = ∞.
    pub q: Option<f64>,
    pub q_inv_sq: f64,
    pub a_coeff: f64,
    pub b_coeff: f64,
    pub residual_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BunchingTable {
    pub version: u32,
    pub parameters: TableParameters,
    pub rows: Vec<BunchingRow>,
}

impl BunchingTable {
    pub const DEFAULT_Q: [f64; 6] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0];

    /// Fits one row from a pseudo-adiabatic run at the given Q.
    pub fn compute_row(params: &TableParameters, q: f64) -> Result<BunchingRow> {
        if !(q > 0.0) {
            return Err(validation(format!("Q must be positive, got {q}")));
        }
        let system = TwoLevelSystem::new(params.t1, params.t2)?;
        let q_inv_sq = 1.0 / (q * q);
        let field = DrivingField {
            rabi_mean: params.rabi_mean,
            detuning: 0.0,
            noise: NoiseSpec {
                tau_c: params.tau_c,
                var_domega: params.sigma_domega * params.sigma_domega,
                var_de_rel: q_inv_sq,
                epsilon: params.epsilon,
            },
        };
        let grid = uniform_grid(params.grid_max, params.grid_step);
        let avg = averaged_correlators(&system, &field, &grid, params.quadrature_order)?;
        let bare = g2_rotating(&system, params.rabi_mean, 0.0, &grid)?;
        let ratio = bunching_ratio(&avg.g2, &bare, params.min_g2)?;
        let model = fit_bunching(&ratio, params.tau_c)?;
        Ok(BunchingRow { q: Some(q), q_inv_sq, a_coeff: model.a_coeff, b_coeff: model.b_coeff, residual_rms: model.residual_rms })
    }

    pub fn compute(params: TableParameters, qs: &[f64]) -> Result<Self> {
        let mut rows = vec![BunchingRow { q: None, q_inv_sq: 0.0, a_coeff: 0.0, b_coeff: 0.0, residual_rms: 0.0 }];
        for &q in qs {
            log::info!("bunching table: fitting Q = {q}");
            rows.push(Self::compute_row(&params, q)?);
        }
        rows.sort_by(|a, b| a.q_inv_sq.total_cmp(&b.q_inv_sq));
        Ok(BunchingTable { version: TABLE_VERSION, parameters: params, rows })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table: BunchingTable = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if table.version != TABLE_VERSION {
            return Err(Error::Format(format!(
                "bunching table version {} (expected {TABLE_VERSION})",
                table.version
            )));
        }
        if table.rows.len() < 2 {
            return Err(Error::Format("bunching table needs at least two rows".into()));
        }
        Ok(table)
    }

    /// Monotone-spline interpolation in 1/Q = √(Q⁻²).
    pub fn model(&self, q_inv_sq: f64, tau_c: f64) -> Result<BunchingModel> {
        let x: Vec<f64> = self.rows.iter().map(|r| r.q_inv_sq.sqrt()).collect();
        let x_max = x[x.len() - 1];
        let at = q_inv_sq.sqrt();
        if !(q_inv_sq >= 0.0) || at > x_max * (1.0 + 1e-12) {
            return Err(Error::Coverage(format!(
                "Q^-2 = {q_inv_sq} outside the bunching table range [0, {}]",
                x_max * x_max
            )));
        }
        let a = Pchip::new(x.clone(), self.rows.iter().map(|r| r.a_coeff).collect())?;
        let b = Pchip::new(x, self.rows.iter().map(|r| r.b_coeff).collect())?;
        Ok(BunchingModel::new(a.eval(at), b.eval(at), q_inv_sq, tau_c))
    }
}

/// The table shipped with the crate.
pub fn default_bunching_table() -> BunchingTable {
    BunchingTable::from_toml(include_str!("../../data/bunching_table.toml"))
        .expect("embedded bunching table is valid")
}
