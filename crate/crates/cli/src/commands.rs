use crate::config::{ConfigError, Method, RunConfig};
use crate::manifest::{sha256_hex, RunManifest};
use ctw_core::averaging::{averaged_correlators, default_bunching_table};
use ctw_core::dynamics::{bpp_liouvillian, g1_lab, regime_classify, saturation, RegimeReport, Regression};
use ctw_core::figures::{hom_grids, reproduce, Artifact, Figure, ReproduceOptions, PRESET_VERSION};
use ctw_core::hom::{convolve_irf, ctw, g2x_bpp, g2x_weak_noisy, visibility};
use ctw_core::io::{atomic_write, ensemble_dump_csv, series_to_csv};
use ctw_core::montecarlo::{mc_correlators, EnsembleConfig};
use ctw_core::series::{CorrelationSeries, SeriesKind};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical failure: {0}")]
    Numerical(#[from] ctw_core::Error),
    #[error("refusing to run outside the validity regime ({reason}); pass --override-regime to force\n{report}")]
    Regime { reason: String, report: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Regime { .. } => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    G1,
    G2,
    Hom,
}

pub struct RunOptions {
    pub seed: Option<u64>,
    pub override_regime: bool,
    pub out_dir: PathBuf,
}

/// Collects output files and their digests.
struct Writer<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path, command: String) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Writer { dir, manifest: RunManifest::new(command) })
    }

    fn bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        atomic_write(&path, bytes).map_err(|e| match e {
            ctw_core::Error::Io(io) => CliError::Io(io),
            other => CliError::Numerical(other),
        })?;
        self.manifest.record(rel, bytes);
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn series(&mut self, rel: &str, s: &CorrelationSeries, stderr: Option<&[f64]>) -> Result<(), CliError> {
        let text = series_to_csv(s, stderr)?;
        self.bytes(rel, text.as_bytes())
    }

    fn finish(mut self, start: Instant) -> Result<RunManifest, CliError> {
        self.manifest.wall_clock_s = start.elapsed().as_secs_f64();
        self.manifest.write(self.dir)?;
        Ok(self.manifest)
    }
}

fn refuse(reason: impl Into<String>, report: &RegimeReport) -> CliError {
    CliError::Regime { reason: reason.into(), report: report.to_text() }
}

/// Resolves `method` against the regime report.
fn choose_method(cfg: &RunConfig, report: &RegimeReport, target: Target, opts: &RunOptions) -> Result<Method, CliError> {
    let auto = if report.bpp_ok {
        Method::Bpp
    } else if report.pseudo_adiabatic_ok {
        Method::PseudoAdiabatic
    } else {
        Method::MonteCarlo
    };
    let method = if cfg.method == Method::Auto { auto } else { cfg.method };
    let violation = match method {
        Method::Bpp if !report.bpp_ok => Some("bpp requested but the noise is not fast and weak"),
        Method::PseudoAdiabatic if !report.pseudo_adiabatic_ok => Some("pseudo-adiabatic requested but the noise is not slow"),
        _ => None,
    };
    if let Some(v) = violation {
        if !opts.override_regime {
            return Err(refuse(v, report));
        }
        log::warn!("{v}; continuing because of --override-regime");
    }
    if target == Target::Hom && method == Method::MonteCarlo {
        if !opts.override_regime {
            return Err(refuse("the interferometer assembly needs the bpp or pseudo-adiabatic regime", report));
        }
        log::warn!("no Monte Carlo interferometer assembly; using the weak-driving averaged form");
        return Ok(Method::PseudoAdiabatic);
    }
    Ok(method)
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Auto => "auto",
        Method::Bpp => "bpp",
        Method::PseudoAdiabatic => "pseudo_adiabatic",
        Method::MonteCarlo => "monte_carlo",
    }
}

pub fn simulate(config: &Path, target: Target, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let (cfg, text) = RunConfig::load(config)?;
    let system = cfg.system()?;
    let field = cfg.driving_field();
    if target == Target::Hom && cfg.hom.is_none() {
        return Err(ConfigError("hom: subtarget hom needs a [hom] table".into()).into());
    }
    let delay = cfg.hom.as_ref().map(|h| h.delay_ns);
    let report = regime_classify(&system, &field, delay, &cfg.thresholds());
    let method = choose_method(&cfg, &report, target, opts)?;
    let target_name = match target {
        Target::G1 => "g1",
        Target::G2 => "g2",
        Target::Hom => "hom",
    };
    let mut w = Writer::new(&opts.out_dir, format!("simulate {target_name}"))?;
    w.manifest.method = Some(method_name(method).to_string());
    w.manifest.config_sha256 = Some(sha256_hex(text.as_bytes()));

    match target {
        Target::G1 | Target::G2 => {
            let grid = cfg.grid()?;
            let spec = field.noise;
            match method {
                Method::MonteCarlo => {
                    let ens = cfg.ensemble_config(opts.seed, grid.clone());
                    ens.validate()?;
                    w.manifest.master_seed = Some(ens.master_seed);
                    let lab = mc_correlators(&system, &field, &ens, true)?;
                    if target == Target::G1 {
                        if cfg.wants(SeriesKind::G1Rot) {
                            let rot = mc_correlators(&system, &field, &ens, false)?;
                            w.series("g1_rot.csv", &rot.g1.series, Some(&rot.g1.stderr))?;
                        }
                        if cfg.wants(SeriesKind::G1Lab) {
                            w.series("g1_lab.csv", &lab.g1.series, Some(&lab.g1.stderr))?;
                        }
                    } else if cfg.wants(SeriesKind::G2) {
                        w.series("g2.csv", &lab.g2.series, Some(&lab.g2.stderr))?;
                    }
                    let dump = ensemble_dump_csv(&ensemble_header(&ens), &lab.trajectories)?;
                    w.bytes("trajectories.csv", dump.as_bytes())?;
                }
                Method::Bpp | Method::PseudoAdiabatic | Method::Auto => {
                    let (g1, g2) = if method == Method::Bpp {
                        let reg = Regression::new(bpp_liouvillian(&system, &field)?)?;
                        (reg.g1_series(&grid)?, reg.g2_series(&grid)?)
                    } else {
                        let avg = averaged_correlators(&system, &field, &grid, cfg.quadrature_order)?;
                        (avg.g1, avg.g2)
                    };
                    if target == Target::G1 {
                        if cfg.wants(SeriesKind::G1Rot) {
                            w.series("g1_rot.csv", &g1, None)?;
                        }
                        if cfg.wants(SeriesKind::G1Lab) {
                            w.series("g1_lab.csv", &g1_lab(&g1, &spec, cfg.field.carrier_rad_per_ns)?, None)?;
                        }
                    } else if cfg.wants(SeriesKind::G2) {
                        w.series("g2.csv", &g2, None)?;
                    }
                }
            }
        }
        Target::Hom => {
            let setup = cfg.hom_setup();
            let hom = cfg.hom.as_ref().expect("checked above");
            let (out_grid, wide) = hom_grids(&system, setup.delay);
            let crossed = setup.crossed();
            let (par, perp) = if method == Method::Bpp {
                let reg = Regression::new(bpp_liouvillian(&system, &field)?)?;
                let (g1, g2) = (reg.g1_series(&out_grid)?, reg.g2_series(&wide)?);
                (g2x_bpp(&g2, &g1, &setup)?, g2x_bpp(&g2, &g1, &crossed)?)
            } else {
                let s = saturation(&system, &field);
                if s >= 1.0 && !opts.override_regime {
                    return Err(refuse(format!("weak-driving averaged form needs s < 1, got s = {s:.3}"), &report));
                }
                let reg = Regression::noise_free(&system, field.rabi_mean, field.detuning)?;
                let (g1, g2) = (reg.g1_series(&out_grid)?, reg.g2_series(&wide)?);
                let model = default_bunching_table().model(field.noise.var_de_rel, field.noise.tau_c)?;
                (
                    g2x_weak_noisy(&g2, &g1, &setup, &field.noise, &model)?,
                    g2x_weak_noisy(&g2, &g1, &crossed, &field.noise, &model)?,
                )
            };
            let (par, perp) = match setup.irf_fwhm {
                Some(f) if f > 0.0 => (convolve_irf(&par, f)?, convolve_irf(&perp, f)?),
                _ => (par, perp),
            };
            let v = visibility(&par, &perp)?;
            let c = ctw(&v, hom.ctw_window_ns.map(|[a, b]| (a, b)))?;
            w.manifest.results.insert("ctw_ns".into(), c.ctw);
            w.manifest.results.insert("ctw_truncation_residual_ns".into(), c.truncation_residual);
            w.manifest.results.insert("ctw_window_lo_ns".into(), c.window.0);
            w.manifest.results.insert("ctw_window_hi_ns".into(), c.window.1);
            w.manifest.results.insert("gamma_l_per_ns".into(), setup.gamma_l);
            if cfg.wants(SeriesKind::G2xPar) {
                w.series("g2x_par.csv", &par, None)?;
            }
            if cfg.wants(SeriesKind::G2xPerp) {
                w.series("g2x_perp.csv", &perp, None)?;
            }
            if cfg.wants(SeriesKind::Visibility) {
                w.series("visibility.csv", &v, None)?;
            }
        }
    }
    w.manifest.regime = Some(report);
    w.manifest.config = Some(cfg);
    w.finish(start)
}

fn ensemble_header(ens: &EnsembleConfig) -> BTreeMap<String, String> {
    let mut h = BTreeMap::new();
    h.insert("master_seed".into(), ens.master_seed.to_string());
    h.insert("n_traj".into(), ens.n_traj.to_string());
    h.insert("t_samples".into(), ens.t_samples.to_string());
    h
}

pub fn regimes(config: &Path) -> Result<String, CliError> {
    let (cfg, _) = RunConfig::load(config)?;
    let system = cfg.system()?;
    let field = cfg.driving_field();
    let delay = cfg.hom.as_ref().map(|h| h.delay_ns);
    let report = regime_classify(&system, &field, delay, &cfg.thresholds());
    let mut text = report.to_text();
    text.push_str(&format!("saturation={}\n", saturation(&system, &field)));
    Ok(text)
}

pub fn reproduce_figure(figure: Figure, ro: &ReproduceOptions, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let dir = opts.out_dir.join(figure.name());
    let mut w = Writer::new(&dir, format!("reproduce {figure}"))?;
    let data = reproduce(figure, ro)?;
    for (stem, artifact) in &data.outputs {
        let rel = format!("{stem}.csv");
        match artifact {
            Artifact::Series { series, stderr } => {
                let s = series.clone().with_attr("figure", figure).with_attr("preset_version", PRESET_VERSION);
                w.series(&rel, &s, stderr.as_deref())?;
            }
            Artifact::Table(t) => {
                let text = format!("# figure={figure}\n# preset_version={PRESET_VERSION}\n{t}");
                w.bytes(&rel, text.as_bytes())?;
            }
        }
    }
    w.manifest.preset_version = Some(PRESET_VERSION);
    w.manifest.preset = toml::Value::try_from(figure.preset()).ok();
    if ro.mc_trajectories > 0 {
        w.manifest.master_seed = Some(ro.seed);
    }
    w.finish(start)
}
