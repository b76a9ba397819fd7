//! Caption parameter sets and the pipelines that regenerate each figure's data.

use crate::averaging::{
    averaged_correlators, bunching_ratio, default_bunching_table, fit_bunching, weak_g1_average,
    weak_g2_average, BunchingTable, TableParameters,
};
use crate::dynamics::{rabi_for_saturation, DrivingField, Regression, TwoLevelSystem};
use crate::error::{validation, Error, Result};
use crate::hom::{ctw, g2x_weak_noisy, visibility, CtwResult, HomSetup};
use crate::montecarlo::{mc_correlators, EnsembleConfig};
use crate::noise::NoiseSpec;
use crate::qcore::C64;
use crate::series::{symmetric_grid, uniform_grid, CorrelationSeries, SeriesKind};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Bumped whenever a number in [`PRESETS`] changes.
pub const PRESET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig6,
    Fig7,
    Fig8,
}

impl Figure {
    pub const ALL: [Figure; 6] = [Figure::Fig2, Figure::Fig3, Figure::Fig4, Figure::Fig6, Figure::Fig7, Figure::Fig8];

    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }

    pub fn preset(&self) -> &'static CaptionPreset {
        PRESETS.iter().find(|p| p.figure == *self).expect("every figure has a preset")
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| validation(format!("unknown figure {s:?}; expected one of fig2, fig3, fig4, fig6, fig7, fig8")))
    }
}

/// Parameters read off one caption. Times in ns, frequencies in rad/ns.
#[derive(Debug, Clone, Serialize)]
pub struct CaptionPreset {
    pub figure: Figure,
    pub t1: f64,
    pub t2: f64,
    pub tau_c: f64,
    /// Mean Rabi coupling Ω̄.
    pub rabi: f64,
    pub var_domega: f64,
    /// Q⁻² values; the first one is the headline case.
    pub q_inv_sq: &'static [f64],
    pub epsilons: &'static [f64],
    /// Arm delay Δt, for interferometer figures.
    pub delay: Option<f64>,
    /// Laser coherence times T_L = 1/Γ_L.
    pub laser_times: &'static [f64],
    /// Largest delay of one-sided correlation plots.
    pub tau_max: f64,
}

pub const PRESETS: [CaptionPreset; 6] = [
    CaptionPreset {
        figure: Figure::Fig2,
        t1: 0.34,
        t2: 0.5,
        tau_c: 4.0,
        rabi: 0.1,
        var_domega: 0.01,
        q_inv_sq: &[1.0],
        epsilons: &[0.0, 0.8],
        delay: None,
        laser_times: &[],
        tau_max: 20.0,
    },
    CaptionPreset {
        figure: Figure::Fig3,
        t1: 0.34,
        t2: 0.5,
        tau_c: 4.0,
        rabi: 0.1,
        var_domega: 0.01,
        q_inv_sq: &[1.0],
        epsilons: &[0.0],
        delay: None,
        laser_times: &[],
        tau_max: 20.0,
    },
    CaptionPreset {
        figure: Figure::Fig4,
        t1: 0.34,
        t2: 0.5,
        tau_c: 4.0,
        rabi: 2.0,
        var_domega: 4.0,
        q_inv_sq: &[1.0],
        epsilons: &[0.0, 0.8],
        delay: None,
        laser_times: &[],
        tau_max: 20.0,
    },
    CaptionPreset {
        figure: Figure::Fig6,
        t1: 0.34,
        t2: 0.5,
        tau_c: 4.0,
        rabi: 0.1,
        var_domega: 0.0,
        q_inv_sq: &[0.03, 1.0, 0.0],
        epsilons: &[0.0],
        delay: Some(43.0),
        laser_times: &[0.0, 20.0, f64::INFINITY],
        tau_max: 0.0,
    },
    CaptionPreset {
        figure: Figure::Fig7,
        t1: 0.34,
        t2: 0.5,
        tau_c: 4.0,
        rabi: 0.1,
        var_domega: 0.0,
        q_inv_sq: &[0.0, 0.03, 0.3, 1.0],
        epsilons: &[0.0],
        delay: Some(43.0),
        laser_times: &[1.0, 2.0, 4.0, 5.0, 7.0, 10.0, 15.0, 20.0, 30.0, 43.0, 60.0, 100.0],
        tau_max: 0.0,
    },
    CaptionPreset {
        figure: Figure::Fig8,
        t1: 0.34,
        t2: 0.5,
        tau_c: 4.0,
        rabi: 0.1,
        var_domega: 0.0,
        q_inv_sq: &[0.0, 0.03, 0.3, 1.0],
        epsilons: &[0.0],
        delay: Some(43.0),
        laser_times: &[20.0],
        tau_max: 0.0,
    },
];

/// Saturation sweep of the CTW-vs-drive figure: log-spaced over [1e-4, 1].
pub fn s0_sweep() -> Vec<f64> {
    (0..=16).map(|k| 10f64.powf(-4.0 + 0.25 * k as f64)).collect()
}

impl CaptionPreset {
    pub fn system(&self) -> Result<TwoLevelSystem> {
        TwoLevelSystem::new(self.t1, self.t2)
    }

    pub fn field(&self, q_inv_sq: f64, epsilon: f64) -> DrivingField {
        DrivingField {
            rabi_mean: self.rabi,
            detuning: 0.0,
            noise: NoiseSpec { tau_c: self.tau_c, var_domega: self.var_domega, var_de_rel: q_inv_sq, epsilon },
        }
    }
}

/// Step used for interferometer grids: T2/10 or finer.
pub fn hom_step(system: &TwoLevelSystem) -> f64 {
    (system.t2 / 10.0).min(0.05)
}

/// Output grid symmetric about 0 reaching past the echoes at ±Δt, and the
/// wider grid the shifted g2 lookups need.
pub fn hom_grids(system: &TwoLevelSystem, delay: f64) -> (Vec<f64>, Vec<f64>) {
    let h = hom_step(system);
    let reach = delay + 5.0 * system.slowest_time();
    (symmetric_grid(reach, h), symmetric_grid(reach + delay + h, h))
}

/// Noise-free g2 and rotating-frame g1 feeding the interferometer assembly.
#[derive(Debug, Clone)]
pub struct HomInputs {
    pub g2: CorrelationSeries,
    pub g1: CorrelationSeries,
    pub delay: f64,
}

impl HomInputs {
    pub fn compute(system: &TwoLevelSystem, rabi: f64, delay: f64) -> Result<Self> {
        let (out, wide) = hom_grids(system, delay);
        let reg = Regression::noise_free(system, rabi, 0.0)?;
        Ok(HomInputs { g2: reg.g2_series(&wide)?, g1: reg.g1_series(&out)?, delay })
    }
}

#[derive(Debug, Clone)]
pub struct HomCurves {
    pub parallel: CorrelationSeries,
    pub crossed: CorrelationSeries,
    pub visibility: CorrelationSeries,
    pub ctw: CtwResult,
}

/// Weak-driving interferograms, visibility and CTW at laser coherence time
/// `t_l` (0 and ∞ allowed) and amplitude noise `q_inv_sq`.
pub fn weak_hom_curves(
    inputs: &HomInputs,
    t_l: f64,
    q_inv_sq: f64,
    tau_c: f64,
    table: &BunchingTable,
) -> Result<HomCurves> {
    if !(t_l >= 0.0) {
        return Err(validation(format!("laser coherence time must be >= 0, got {t_l}")));
    }
    let gamma = 1.0 / t_l;
    let setup = HomSetup::balanced(inputs.delay, gamma);
    let var_domega = if gamma.is_finite() { gamma / tau_c } else { 0.0 };
    let spec = NoiseSpec { tau_c, var_domega, var_de_rel: q_inv_sq, epsilon: 0.0 };
    let model = table.model(q_inv_sq, tau_c)?;
    let parallel = g2x_weak_noisy(&inputs.g2, &inputs.g1, &setup, &spec, &model)?;
    let crossed = g2x_weak_noisy(&inputs.g2, &inputs.g1, &setup.crossed(), &spec, &model)?;
    let vis = visibility(&parallel, &crossed)?;
    let c = ctw(&vis, None)?;
    Ok(HomCurves { parallel, crossed, visibility: vis.with_attr("t_l", t_l), ctw: c })
}

/// One emitted artifact.
#[derive(Debug, Clone)]
pub enum Artifact {
    Series { series: CorrelationSeries, stderr: Option<Vec<f64>> },
    /// Delimiter-separated table including its header row.
    Table(String),
}

#[derive(Debug, Clone)]
pub struct FigureData {
    pub figure: Figure,
    /// `(file stem, artifact)` in emission order.
    pub outputs: Vec<(String, Artifact)>,
}

impl FigureData {
    fn new(figure: Figure) -> Self {
        FigureData { figure, outputs: Vec::new() }
    }

    fn series(&mut self, stem: impl Into<String>, series: CorrelationSeries) {
        self.outputs.push((stem.into(), Artifact::Series { series, stderr: None }));
    }

    fn table<R: Serialize>(&mut self, stem: impl Into<String>, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        self.outputs.push((stem.into(), Artifact::Table(String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))?)));
        Ok(())
    }

    pub fn get(&self, stem: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|(s, _)| s == stem).map(|(_, a)| a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReproduceOptions {
    /// Gauss-Hermite order of the pseudo-adiabatic averages.
    pub order: usize,
    /// Monte Carlo trajectories added to the correlation figures; 0 skips them.
    pub mc_trajectories: usize,
    pub seed: u64,
    /// Delay step of the one-sided correlation plots (ns).
    pub step: f64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        ReproduceOptions { order: 12, mc_trajectories: 0, seed: 1, step: 0.2 }
    }
}

pub fn reproduce(figure: Figure, opts: &ReproduceOptions) -> Result<FigureData> {
    match figure {
        Figure::Fig2 | Figure::Fig4 => correlation_figure(figure, opts),
        Figure::Fig3 => fig3(opts),
        Figure::Fig6 => fig6(),
        Figure::Fig7 => fig7(),
        Figure::Fig8 => fig8(),
    }
}

fn eps_tag(e: f64) -> String {
    format!("eps{}", e.to_string().replace('.', "p"))
}

fn correlation_figure(figure: Figure, opts: &ReproduceOptions) -> Result<FigureData> {
    let p = figure.preset();
    let system = p.system()?;
    let q = p.q_inv_sq[0];
    let grid = uniform_grid(p.tau_max, opts.step);
    let bare = Regression::noise_free(&system, p.rabi, 0.0)?;
    let g1 = bare.g1_series(&grid)?;
    let g2 = bare.g2_series(&grid)?;
    let model = default_bunching_table().model(q, p.tau_c)?;
    let mut out = FigureData::new(figure);
    out.series("g1_noise_free", g1.clone());
    out.series("g2_noise_free", g2.clone());
    out.series("g1_weak_theory", weak_g1_average(&g1, &p.field(q, 0.0).noise));
    out.series("g2_weak_theory", weak_g2_average(&g2, &model));
    for &eps in p.epsilons {
        let field = p.field(q, eps);
        let avg = averaged_correlators(&system, &field, &grid, opts.order)?;
        out.series(format!("g1_averaged_{}", eps_tag(eps)), avg.g1);
        out.series(format!("g2_averaged_{}", eps_tag(eps)), avg.g2);
        if opts.mc_trajectories > 0 {
            let cfg = EnsembleConfig::new(opts.mc_trajectories, opts.seed, grid.clone());
            let mc = mc_correlators(&system, &field, &cfg, false)?;
            out.outputs.push((
                format!("g1_mc_{}", eps_tag(eps)),
                Artifact::Series { series: mc.g1.series, stderr: Some(mc.g1.stderr) },
            ));
            out.outputs.push((
                format!("g2_mc_{}", eps_tag(eps)),
                Artifact::Series { series: mc.g2.series, stderr: Some(mc.g2.stderr) },
            ));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct CoefficientRow {
    q: Option<f64>,
    inv_q: f64,
    q_inv_sq: f64,
    a_coeff: f64,
    b_coeff: f64,
    residual_rms: f64,
}

fn fig3(opts: &ReproduceOptions) -> Result<FigureData> {
    let p = Figure::Fig3.preset();
    let system = p.system()?;
    let grid = uniform_grid(p.tau_max, opts.step);
    let field = p.field(p.q_inv_sq[0], 0.0);
    let bare = Regression::noise_free(&system, p.rabi, 0.0)?.g2_series(&grid)?;
    let avg = averaged_correlators(&system, &field, &grid, opts.order)?;
    let ratio = bunching_ratio(&avg.g2, &bare, 0.05)?.with_attr("q_inv_sq", field.noise.var_de_rel);
    let fit = fit_bunching(&ratio, p.tau_c)?;
    let curve = ratio.map(SeriesKind::Auxiliary, |tau, _| C64::new(fit.multiplier(tau) - 1.0, 0.0));
    let mut out = FigureData::new(Figure::Fig3);
    out.series("a_ratio", ratio);
    out.series("a_fit", curve.with_attr("bunching_a", fit.a_coeff).with_attr("bunching_b", fit.b_coeff));
    let params = TableParameters { quadrature_order: opts.order, ..TableParameters::default() };
    let table = BunchingTable::compute(params, &BunchingTable::DEFAULT_Q)?;
    let rows: Vec<CoefficientRow> = table
        .rows
        .iter()
        .map(|r| CoefficientRow {
            q: r.q,
            inv_q: r.q_inv_sq.sqrt(),
            q_inv_sq: r.q_inv_sq,
            a_coeff: r.a_coeff,
            b_coeff: r.b_coeff,
            residual_rms: r.residual_rms,
        })
        .collect();
    out.table("b_coefficients", &rows)?;
    Ok(out)
}

fn t_l_tag(t_l: f64) -> String {
    if t_l.is_infinite() {
        "tlinf".into()
    } else {
        format!("tl{t_l}")
    }
}

#[derive(Serialize)]
struct CtwRow {
    panel: &'static str,
    t_l_ns: f64,
    q_inv_sq: f64,
    ctw_ns: f64,
    truncation_residual_ns: f64,
}

fn fig6() -> Result<FigureData> {
    let p = Figure::Fig6.preset();
    let system = p.system()?;
    let delay = p.delay.expect("interferometer preset");
    let inputs = HomInputs::compute(&system, p.rabi, delay)?;
    let table = default_bunching_table();
    let mut out = FigureData::new(Figure::Fig6);
    let mut rows = Vec::new();
    let q_a = p.q_inv_sq[0];
    for &t_l in p.laser_times {
        let c = weak_hom_curves(&inputs, t_l, q_a, p.tau_c, &table)?;
        out.series(format!("a_par_{}", t_l_tag(t_l)), c.parallel);
        rows.push(CtwRow { panel: "a", t_l_ns: t_l, q_inv_sq: q_a, ctw_ns: c.ctw.ctw, truncation_residual_ns: c.ctw.truncation_residual });
    }
    let t_l = p.laser_times[1];
    let crossed_a = weak_hom_curves(&inputs, t_l, q_a, p.tau_c, &table)?.crossed;
    out.series("a_perp", crossed_a);
    for (k, &q) in p.q_inv_sq[1..].iter().enumerate() {
        let c = weak_hom_curves(&inputs, t_l, q, p.tau_c, &table)?;
        let tag = if q == 0.0 { "qinf".to_string() } else { format!("q{}", 1.0 / q.sqrt()) };
        out.series(format!("b_par_{tag}"), c.parallel);
        if k == 0 {
            out.series(format!("b_perp_{tag}"), c.crossed);
            out.series(format!("c_visibility_{tag}"), c.visibility);
        }
        rows.push(CtwRow { panel: "b", t_l_ns: t_l, q_inv_sq: q, ctw_ns: c.ctw.ctw, truncation_residual_ns: c.ctw.truncation_residual });
    }
    out.table("ctw", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct SweepRow {
    t_l_ns: f64,
    q_inv_sq: f64,
    ctw_ns: f64,
    truncation_residual_ns: f64,
    /// T_L > τC: blurring decouples from the Bloch evolution.
    decoupled: bool,
    /// T_L < Δt: one-photon self-interference is wiped out.
    interpretable: bool,
}

/// CTW against laser coherence time for each Q⁻² of the preset.
pub fn ctw_vs_coherence_time(inputs: &HomInputs, laser_times: &[f64], q_inv_sq: &[f64], tau_c: f64) -> Result<Vec<(f64, f64, CtwResult)>> {
    let table = default_bunching_table();
    let mut out = Vec::new();
    for &q in q_inv_sq {
        for &t_l in laser_times {
            out.push((t_l, q, weak_hom_curves(inputs, t_l, q, tau_c, &table)?.ctw));
        }
    }
    Ok(out)
}

fn fig7() -> Result<FigureData> {
    let p = Figure::Fig7.preset();
    let delay = p.delay.expect("interferometer preset");
    let inputs = HomInputs::compute(&p.system()?, p.rabi, delay)?;
    let rows: Vec<SweepRow> = ctw_vs_coherence_time(&inputs, p.laser_times, p.q_inv_sq, p.tau_c)?
        .into_iter()
        .map(|(t_l, q, c)| SweepRow {
            t_l_ns: t_l,
            q_inv_sq: q,
            ctw_ns: c.ctw,
            truncation_residual_ns: c.truncation_residual,
            decoupled: t_l > p.tau_c,
            interpretable: t_l < delay,
        })
        .collect();
    let mut out = FigureData::new(Figure::Fig7);
    out.table("ctw_vs_t_l", &rows)?;
    Ok(out)
}

#[derive(Serialize)]
struct SaturationRow {
    s0: f64,
    q_inv_sq: f64,
    ctw_ns: f64,
    ctw_over_t_l: f64,
    /// Below saturation, where the weak-driving averaging applies.
    weak_driving: bool,
}

fn fig8() -> Result<FigureData> {
    let p = Figure::Fig8.preset();
    let system = p.system()?;
    let delay = p.delay.expect("interferometer preset");
    let t_l = p.laser_times[0];
    let table = default_bunching_table();
    let mut rows = Vec::new();
    for s0 in s0_sweep() {
        let inputs = HomInputs::compute(&system, rabi_for_saturation(&system, s0, 0.0), delay)?;
        for &q in p.q_inv_sq {
            let c = weak_hom_curves(&inputs, t_l, q, p.tau_c, &table)?.ctw;
            rows.push(SaturationRow { s0, q_inv_sq: q, ctw_ns: c.ctw, ctw_over_t_l: c.ctw / t_l, weak_driving: s0 < 1.0 });
        }
    }
    let mut out = FigureData::new(Figure::Fig8);
    out.table("ctw_vs_s0", &rows)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::saturation_static;

    #[test]
    fn presets_match_captions() {
        for f in Figure::ALL {
            assert_eq!(f.preset().figure, f);
            assert_eq!(f.name().parse::<Figure>().unwrap(), f);
        }
        assert!("fig5".parse::<Figure>().is_err());
        let sys = Figure::Fig2.preset().system().unwrap();
        assert!((saturation_static(&sys, Figure::Fig2.preset().rabi, 0.0) - 1.7e-3).abs() < 1e-5);
        assert!((saturation_static(&sys, Figure::Fig4.preset().rabi, 0.0) - 0.68).abs() < 1e-3);
        // Q⁻² = var(δΩ)/Ω̄² with √var(δΩ) = √var(δω)
        for f in [Figure::Fig2, Figure::Fig4] {
            let p = f.preset();
            assert!((p.var_domega / (p.rabi * p.rabi) - p.q_inv_sq[0]).abs() < 1e-12);
        }
        // Q = 5.8 ↔ Q⁻² = 3%
        assert!((1.0 / 5.8f64.powi(2) - Figure::Fig6.preset().q_inv_sq[0]).abs() < 1e-3);
        let s = s0_sweep();
        assert_eq!((s[0], *s.last().unwrap()), (1e-4, 1.0));
    }

    #[test]
    fn hom_grids_cover_echoes() {
        let sys = TwoLevelSystem::new(0.34, 0.5).unwrap();
        let (out, wide) = hom_grids(&sys, 43.0);
        assert!(out[0] <= -43.0 && *out.last().unwrap() >= 43.0);
        assert!(out.windows(2).all(|w| w[1] - w[0] <= sys.t2 / 10.0 + 1e-12));
        assert!(wide[0] <= out[0] - 43.0);
        assert!(out.iter().any(|t| t.abs() < 1e-12));
    }

    #[test]
    fn fig6_has_every_panel() {
        let d = reproduce(Figure::Fig6, &ReproduceOptions::default()).unwrap();
        for stem in ["a_par_tl0", "a_par_tl20", "a_par_tlinf", "a_perp", "b_par_q1", "b_par_qinf", "b_perp_q1", "c_visibility_q1", "ctw"] {
            assert!(d.get(stem).is_some(), "missing {stem}");
        }
        // T_L = 0 leaves only intensity terms: par equals perp away from τ = 0
        let (Some(Artifact::Series { series: par0, .. }), Some(Artifact::Series { series: perp, .. })) =
            (d.get("a_par_tl0"), d.get("a_perp"))
        else {
            panic!("series expected")
        };
        let k = par0.find(1.0).unwrap();
        assert!((par0.values[k] - perp.values[k]).norm() < 1e-12);
    }

    #[test]
    fn fig7_flags_validity_regions() {
        let Artifact::Table(t) = reproduce(Figure::Fig7, &ReproduceOptions::default()).unwrap().outputs[0].1.clone() else {
            panic!("table expected")
        };
        let mut r = csv::Reader::from_reader(t.as_bytes());
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 12 * 4);
        let first = &rows[0];
        assert_eq!((&first[0], &first[4], &first[5]), ("1.0", "false", "true"));
        let last = rows.last().unwrap();
        assert_eq!((&last[0], &last[4], &last[5]), ("100.0", "true", "false"));
    }
}
