//! Ensemble estimates over sampled drive realizations, usable in every
//! regime and serving as the reference for the analytic branches.

mod trajectory;

use crate::dynamics::{DrivingField, TwoLevelSystem};
use crate::error::{validation, Error, Result};
use crate::noise::{sample_path_with, NoiseSpec, PhaseIntegration};
use crate::qcore::{sigma_minus, sigma_plus, unvectorize, vectorize, Vec4, C64};
use crate::series::{check_increasing, CorrelationSeries, SeriesKind};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use trajectory::{build_mesh, Trajectory};

pub const DEFAULT_T_SAMPLES: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub master_seed: u64,
    /// Burn-in before the first anchor (ns); `None` uses 5·max(T1, T2, τC).
    pub equilibration: Option<f64>,
    /// Stationary start times per trajectory.
    pub t_samples: usize,
    /// Spacing of the start times (ns); `None` uses 5·max(T1, T2).
    pub anchor_spacing: Option<f64>,
    /// Delay grid (ns).
    pub grid: Vec<f64>,
}

impl EnsembleConfig {
    pub fn new(n_traj: usize, master_seed: u64, grid: Vec<f64>) -> Self {
        EnsembleConfig {
            n_traj,
            master_seed,
            equilibration: None,
            t_samples: DEFAULT_T_SAMPLES,
            anchor_spacing: None,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(validation("n_traj must be at least 1"));
        }
        if self.t_samples == 0 {
            return Err(validation("t_samples must be at least 1"));
        }
        if let Some(e) = self.equilibration {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(validation(format!("equilibration must be >= 0, got {e}")));
            }
        }
        if let Some(s) = self.anchor_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return Err(validation(format!("anchor spacing must be positive, got {s}")));
            }
        }
        if self.grid.is_empty() {
            return Err(validation("delay grid is empty"));
        }
        check_increasing(&self.grid)
    }
}

/// Mean over trajectories with its standard error.
#[derive(Debug, Clone)]
pub struct EstimatedSeries {
    pub series: CorrelationSeries,
    /// Zero when a single trajectory was run.
    pub stderr: Vec<f64>,
    pub n_effective: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub index: u64,
    /// Excited population averaged over the anchors.
    pub intensity: f64,
    /// Laser phase accumulated over the whole path (rad).
    pub final_phase: f64,
}

#[derive(Debug, Clone)]
pub struct McCorrelators {
    pub g1: EstimatedSeries,
    pub g2: EstimatedSeries,
    pub trajectories: Vec<TrajectorySummary>,
}

/// Mesh step min(τC/20, T2/10).
pub fn mesh_step(system: &TwoLevelSystem, spec: &NoiseSpec) -> f64 {
    (spec.tau_c / 20.0).min(system.t2 / 10.0)
}

struct Layout {
    step: f64,
    anchors: Vec<f64>,
}

fn layout(system: &TwoLevelSystem, field: &DrivingField, config: &EnsembleConfig) -> Layout {
    let h = mesh_step(system, &field.noise);
    let recommended = 5.0 * system.slowest_time().max(field.noise.tau_c);
    let eq = config.equilibration.unwrap_or(recommended);
    if eq < recommended * (1.0 - 1e-9) {
        log::warn!("equilibration {eq} ns is below 5·max(T1, T2, tau_c) = {recommended} ns");
    }
    let round_up = |t: f64| (t / h - 1e-9).ceil().max(0.0) * h;
    let eq = round_up(eq);
    let spacing = round_up(config.anchor_spacing.unwrap_or(5.0 * system.slowest_time())).max(h);
    let anchors = (0..config.t_samples).map(|j| eq + j as f64 * spacing).collect();
    Layout { step: h, anchors }
}

fn abs_delays(grid: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = grid.iter().map(|t| t.abs()).collect();
    abs.sort_by(f64::total_cmp);
    abs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    abs
}

fn abs_index(abs: &[f64], t: f64) -> usize {
    let a = t.abs();
    abs.partition_point(|&x| x < a - 1e-12 * a.max(1.0)).min(abs.len() - 1)
}

/// Ratio-of-means estimate `mean(num)/mean(den)^power` with its delta-method
/// standard error over trajectories.
fn ratio_estimate(num: &[Vec<C64>], den: &[f64], power: i32) -> (Vec<C64>, Vec<f64>) {
    let n = den.len();
    let nf = n as f64;
    let b = den.iter().sum::<f64>() / nf;
    let bp = b.powi(power);
    let m = num[0].len();
    let mut est = Vec::with_capacity(m);
    let mut err = Vec::with_capacity(m);
    for k in 0..m {
        let a = num.iter().map(|v| v[k]).sum::<C64>() / nf;
        let r = a / bp;
        let d: Vec<C64> = (0..n)
            .map(|i| num[i][k] / bp - a * (power as f64) * den[i] / (bp * b))
            .collect();
        let dm = d.iter().sum::<C64>() / nf;
        let var = if n > 1 {
            d.iter().map(|x| (x - dm).norm_sqr()).sum::<f64>() / (nf * (nf - 1.0))
        } else {
            0.0
        };
        est.push(r);
        err.push(var.sqrt());
    }
    (est, err)
}

fn wrap(index: u64, seed: u64) -> impl Fn(Error) -> Error {
    move |e| Error::Trajectory { index, seed, source: Box::new(e) }
}

struct TrajectoryStats {
    g1: Vec<C64>,
    g2: Vec<C64>,
    intensity: f64,
    final_phase: f64,
}

/// Ensemble-averaged g̃1 (or lab-frame g1) and g2 from density-matrix
/// trajectories under sampled drive paths.
pub fn mc_correlators(
    system: &TwoLevelSystem,
    field: &DrivingField,
    config: &EnsembleConfig,
    lab_frame: bool,
) -> Result<McCorrelators> {
    system.validate()?;
    field.validate()?;
    config.validate()?;
    let abs = abs_delays(&config.grid);
    let lay = layout(system, field, config);
    let tau_max = abs[abs.len() - 1];
    let extra: Vec<f64> = lay.anchors.iter().flat_map(|a| abs.iter().map(move |t| a + t)).collect();
    let horizon = lay.anchors[lay.anchors.len() - 1] + tau_max;
    let mesh = build_mesh(horizon, lay.step, &extra);
    let seed = config.master_seed;

    let stats: Vec<TrajectoryStats> = (0..config.n_traj as u64)
        .into_par_iter()
        .map(|i| -> Result<TrajectoryStats> {
            let tr = Trajectory::run(system, field, mesh.clone(), seed, i, true).map_err(wrap(i, seed))?;
            let mut g1 = vec![C64::new(0.0, 0.0); abs.len()];
            let mut g2 = vec![C64::new(0.0, 0.0); abs.len()];
            let mut intensity = 0.0;
            for &a in &lay.anchors {
                let ia = tr.index(a).map_err(wrap(i, seed))?;
                let rho = unvectorize(&tr.rho[ia]);
                intensity += rho[(1, 1)].re;
                let mut x1 = vectorize(&(sigma_minus() * rho));
                let mut x2 = vectorize(&(sigma_minus() * rho * sigma_plus()));
                let mut at = ia;
                for (k, &t) in abs.iter().enumerate() {
                    let j = tr.index(a + t).map_err(wrap(i, seed))?;
                    x1 = tr.advance(x1, at, j);
                    x2 = tr.advance(x2, at, j);
                    at = j;
                    let frame = if lab_frame {
                        C64::from_polar(1.0, tr.phase[j] - tr.phase[ia])
                    } else {
                        C64::new(1.0, 0.0)
                    };
                    g1[k] += x1[2] * frame;
                    g2[k] += C64::new(x2[3].re, 0.0);
                }
            }
            let w = 1.0 / lay.anchors.len() as f64;
            Ok(TrajectoryStats {
                g1: g1.into_iter().map(|z| z * w).collect(),
                g2: g2.into_iter().map(|z| z * w).collect(),
                intensity: intensity * w,
                final_phase: tr.phase[tr.phase.len() - 1],
            })
        })
        .collect::<Result<_>>()?;

    let den: Vec<f64> = stats.iter().map(|s| s.intensity).collect();
    if den.iter().sum::<f64>() <= 1e-15 * den.len() as f64 {
        return Err(Error::UndefinedNormalization("ensemble intensity is zero".into()));
    }
    let g1n: Vec<Vec<C64>> = stats.iter().map(|s| s.g1.clone()).collect();
    let g2n: Vec<Vec<C64>> = stats.iter().map(|s| s.g2.clone()).collect();
    let (g1e, g1s) = ratio_estimate(&g1n, &den, 1);
    let (g2e, g2s) = ratio_estimate(&g2n, &den, 2);
    let intensity = den.iter().sum::<f64>() / den.len() as f64;

    let grid = &config.grid;
    let pick = |vals: &[C64], conj: bool| -> Vec<C64> {
        grid.iter()
            .map(|&t| {
                let v = vals[abs_index(&abs, t)];
                if t < 0.0 && conj { v.conj() } else { v }
            })
            .collect()
    };
    let pick_err = |errs: &[f64]| -> Vec<f64> { grid.iter().map(|&t| errs[abs_index(&abs, t)]).collect() };
    let tag = |s: CorrelationSeries| {
        s.with_attr("method", "monte_carlo")
            .with_attr("n_traj", config.n_traj)
            .with_attr("master_seed", config.master_seed)
            .with_attr("t_samples", config.t_samples)
            .with_attr("mesh_step", lay.step)
    };
    let kind = if lab_frame { SeriesKind::G1Lab } else { SeriesKind::G1Rot };
    let mut g1 = tag(CorrelationSeries::new(grid.clone(), pick(&g1e, true), kind, true)?);
    g1.scale = intensity;
    let mut g2 = tag(CorrelationSeries::new(grid.clone(), pick(&g2e, false), SeriesKind::G2, true)?);
    g2.scale = intensity * intensity;
    let trajectories = stats
        .iter()
        .enumerate()
        .map(|(i, s)| TrajectorySummary { index: i as u64, intensity: s.intensity, final_phase: s.final_phase })
        .collect();
    Ok(McCorrelators {
        g1: EstimatedSeries { series: g1, stderr: pick_err(&g1s), n_effective: config.n_traj },
        g2: EstimatedSeries { series: g2, stderr: pick_err(&g2s), n_effective: config.n_traj },
        trajectories,
    })
}

/// Chronological events of the two-photon interference correlator
/// ⟨S̃+(0) S̃+(τ−Δt) S̃−(τ) S̃−(−Δt)⟩, relative to its earliest time.
#[derive(Clone, Copy)]
enum Event {
    /// S− applied from the left.
    Lower,
    /// S+ applied from the right.
    Raise,
}

fn apply(x: Vec4, e: Event) -> Vec4 {
    let m = unvectorize(&x);
    vectorize(&match e {
        Event::Lower => sigma_minus() * m,
        Event::Raise => m * sigma_plus(),
    })
}

/// Ensemble average of the two-photon interference term including the
/// realization's laser-phase factor, normalized by the mean intensity
/// squared. Supports |τ| ≤ Δt.
pub fn mc_hom_term(
    system: &TwoLevelSystem,
    field: &DrivingField,
    config: &EnsembleConfig,
    delta_t: f64,
) -> Result<EstimatedSeries> {
    system.validate()?;
    field.validate()?;
    config.validate()?;
    if !(delta_t > 0.0 && delta_t.is_finite()) {
        return Err(validation(format!("arm delay must be positive, got {delta_t}")));
    }
    if let Some(t) = config.grid.iter().find(|t| t.abs() > delta_t * (1.0 + 1e-12)) {
        return Err(Error::UnsupportedOrdering(format!(
            "delay {t} ns exceeds the arm delay {delta_t} ns"
        )));
    }
    let abs = abs_delays(&config.grid);
    let want_pos = config.grid.iter().any(|t| *t >= 0.0);
    let want_neg = config.grid.iter().any(|t| *t < 0.0);
    let lay = layout(system, field, config);
    let tau_max = abs[abs.len() - 1];
    let mut extra = Vec::new();
    for &s in &lay.anchors {
        for &u in &abs {
            extra.extend_from_slice(&[s + u, s + delta_t, s + delta_t + u]);
        }
    }
    let horizon = lay.anchors[lay.anchors.len() - 1] + delta_t + tau_max;
    let mesh = build_mesh(horizon, lay.step, &extra);
    let seed = config.master_seed;

    // τ ≥ 0: S−(−Δt), S+(τ−Δt), S+(0), S−(τ); τ < 0: S+(τ−Δt), S−(−Δt), S−(τ), S+(0)
    let orders = [
        (Event::Lower, Event::Raise, Event::Raise, 1usize),
        (Event::Raise, Event::Lower, Event::Lower, 2usize),
    ];

    let stats: Vec<(Vec<C64>, Vec<C64>, f64)> = (0..config.n_traj as u64)
        .into_par_iter()
        .map(|i| -> Result<(Vec<C64>, Vec<C64>, f64)> {
            let tr = Trajectory::run(system, field, mesh.clone(), seed, i, true).map_err(wrap(i, seed))?;
            let idx = |t: f64| tr.index(t).map_err(wrap(i, seed));
            let mut pos = vec![C64::new(0.0, 0.0); abs.len()];
            let mut neg = vec![C64::new(0.0, 0.0); abs.len()];
            let mut intensity = 0.0;
            for &s in &lay.anchors {
                let is = idx(s)?;
                intensity += tr.rho[is][3].re;
                let im = idx(s + delta_t)?;
                for (branch, &(first, second, third, read)) in orders.iter().enumerate() {
                    if (branch == 0 && !want_pos) || (branch == 1 && !want_neg) {
                        continue;
                    }
                    let mut x = apply(tr.rho[is], first);
                    let mut at = is;
                    for (k, &u) in abs.iter().enumerate() {
                        let iu = idx(s + u)?;
                        x = tr.advance(x, at, iu);
                        at = iu;
                        let y = apply(x, second);
                        let y = apply(tr.advance(y, iu, im), third);
                        let ie = idx(s + delta_t + u)?;
                        let y = tr.advance(y, im, ie);
                        let p = &tr.phase;
                        let (phase, out) = if branch == 0 {
                            (p[im] + p[iu] - p[ie] - p[is], &mut pos)
                        } else {
                            (p[ie] + p[is] - p[im] - p[iu], &mut neg)
                        };
                        out[k] += y[read] * C64::from_polar(1.0, phase);
                    }
                }
            }
            let w = 1.0 / lay.anchors.len() as f64;
            Ok((
                pos.into_iter().map(|z| z * w).collect(),
                neg.into_iter().map(|z| z * w).collect(),
                intensity * w,
            ))
        })
        .collect::<Result<_>>()?;

    let den: Vec<f64> = stats.iter().map(|s| s.2).collect();
    if den.iter().sum::<f64>() <= 1e-15 * den.len() as f64 {
        return Err(Error::UndefinedNormalization("ensemble intensity is zero".into()));
    }
    let pos: Vec<Vec<C64>> = stats.iter().map(|s| s.0.clone()).collect();
    let neg: Vec<Vec<C64>> = stats.iter().map(|s| s.1.clone()).collect();
    let (pe, ps) = ratio_estimate(&pos, &den, 2);
    let (ne, ns) = ratio_estimate(&neg, &den, 2);
    let mut values = Vec::with_capacity(config.grid.len());
    let mut stderr = Vec::with_capacity(config.grid.len());
    for &t in &config.grid {
        let k = abs_index(&abs, t);
        if t >= 0.0 {
            values.push(pe[k]);
            stderr.push(ps[k]);
        } else {
            values.push(ne[k]);
            stderr.push(ns[k]);
        }
    }
    let intensity = den.iter().sum::<f64>() / den.len() as f64;
    let mut series = CorrelationSeries::new(config.grid.clone(), values, SeriesKind::Auxiliary, true)?
        .with_attr("method", "monte_carlo")
        .with_attr("term", "two_photon_interference")
        .with_attr("delta_t", delta_t)
        .with_attr("n_traj", config.n_traj)
        .with_attr("master_seed", config.master_seed);
    series.scale = intensity * intensity;
    Ok(EstimatedSeries { series, stderr, n_effective: config.n_traj })
}

/// Ensemble average of the laser-phase factor alone: e^{iφ_{t→t+τ}} when
/// `delta_t` is `None`, otherwise the two-photon interference factor.
pub fn phase_factor_average(spec: &NoiseSpec, config: &EnsembleConfig, delta_t: Option<f64>) -> Result<EstimatedSeries> {
    spec.validate()?;
    config.validate()?;
    let abs = abs_delays(&config.grid);
    let dt = delta_t.unwrap_or(0.0);
    let h = spec.tau_c / 20.0;
    let spacing = config.anchor_spacing.unwrap_or(5.0 * spec.tau_c);
    let anchors: Vec<f64> = (0..config.t_samples).map(|j| j as f64 * spacing).collect();
    let mut extra = Vec::new();
    for &s in &anchors {
        for &u in &abs {
            extra.extend_from_slice(&[s + u, s + dt, s + dt + u]);
        }
    }
    let horizon = anchors[anchors.len() - 1] + dt + abs[abs.len() - 1];
    let mesh = build_mesh(horizon, h, &extra);
    let seed = config.master_seed;
    let per: Vec<Vec<C64>> = (0..config.n_traj as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<C64>> {
            let path = sample_path_with(spec, &mesh, seed, i, PhaseIntegration::Exact).map_err(wrap(i, seed))?;
            let tr = Trajectory { nodes: mesh.clone(), props: Vec::new(), rho: Vec::new(), phase: path.phase };
            let mut acc = vec![C64::new(0.0, 0.0); abs.len()];
            for &s in &anchors {
                let is = tr.index(s)?;
                for (k, &u) in abs.iter().enumerate() {
                    let iu = tr.index(s + u)?;
                    let p = &tr.phase;
                    let phase = match delta_t {
                        None => p[iu] - p[is],
                        Some(_) => {
                            let im = tr.index(s + dt)?;
                            let ie = tr.index(s + dt + u)?;
                            p[im] + p[iu] - p[ie] - p[is]
                        }
                    };
                    acc[k] += C64::from_polar(1.0, phase) / anchors.len() as f64;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let ones = vec![1.0; per.len()];
    let (est, err) = ratio_estimate(&per, &ones, 0);
    let values = config
        .grid
        .iter()
        .map(|&t| {
            let v = est[abs_index(&abs, t)];
            if t < 0.0 && delta_t.is_none() { v.conj() } else { v }
        })
        .collect();
    let stderr = config.grid.iter().map(|&t| err[abs_index(&abs, t)]).collect();
    let series = CorrelationSeries::new(config.grid.clone(), values, SeriesKind::Auxiliary, true)?
        .with_attr("method", "monte_carlo")
        .with_attr("term", if delta_t.is_some() { "interference_phase" } else { "two_time_phase" });
    Ok(EstimatedSeries { series, stderr, n_effective: config.n_traj })
}
