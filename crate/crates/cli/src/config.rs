//! Run configuration file. Every physical field carries its unit in the name.

use ctw_core::dynamics::{DrivingField, RegimeThresholds, TwoLevelSystem};
use ctw_core::hom::HomSetup;
use ctw_core::montecarlo::{EnsembleConfig, DEFAULT_T_SAMPLES};
use ctw_core::noise::NoiseSpec;
use ctw_core::series::{check_increasing, symmetric_grid, uniform_grid, SeriesKind};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub t1_ns: f64,
    pub t2_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub rabi_rad_per_ns: f64,
    #[serde(default)]
    pub detuning_rad_per_ns: f64,
    /// Mean laser frequency offset applied to lab-frame g1.
    #[serde(default)]
    pub carrier_rad_per_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub tau_c_ns: f64,
    #[serde(default)]
    pub var_domega_rad2_per_ns2: f64,
    /// Q⁻², the relative amplitude variance.
    #[serde(default)]
    pub var_de_rel: f64,
    #[serde(default)]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub tau_max_ns: Option<f64>,
    pub step_ns: Option<f64>,
    /// Include negative delays.
    #[serde(default)]
    pub symmetric: bool,
    /// Explicit increasing delay list; exclusive with `tau_max_ns`/`step_ns`.
    pub delays_ns: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: usize,
    pub master_seed: Option<u64>,
    pub t_samples: Option<usize>,
    pub equilibration_ns: Option<f64>,
    pub anchor_spacing_ns: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomConfig {
    pub delay_ns: f64,
    #[serde(default = "half")]
    pub r_int: f64,
    #[serde(default)]
    pub pol_angle_rad: f64,
    /// Laser coherence time T_L; defaults to 1/(var(δω)·τC).
    pub laser_coherence_time_ns: Option<f64>,
    pub irf_fwhm_ns: Option<f64>,
    pub ctw_window_ns: Option<[f64; 2]>,
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Pick from the regime report.
    #[default]
    Auto,
    Bpp,
    PseudoAdiabatic,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub method: Method,
    /// Gauss-Hermite order for pseudo-adiabatic averaging.
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    /// Series kinds to write; empty writes everything the subtarget produces.
    #[serde(default)]
    pub outputs: Vec<String>,
    pub system: SystemConfig,
    pub field: FieldConfig,
    pub noise: NoiseConfig,
    pub grid: Option<GridConfig>,
    pub ensemble: Option<EnsembleSection>,
    pub hom: Option<HomConfig>,
    pub thresholds: Option<RegimeThresholds>,
}

fn default_order() -> usize {
    12
}

pub const DEFAULT_N_TRAJ: usize = 400;
pub const DEFAULT_SEED: u64 = 1;

/// Config problems, reported with the offending field.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn field_err(field: &str, e: impl std::fmt::Display) -> ConfigError {
    ConfigError(format!("{field}: {e}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.system().map_err(|e| field_err("system", e))?;
        self.driving_field().validate().map_err(|e| field_err("field/noise", e))?;
        if self.quadrature_order < 2 {
            return Err(field_err("quadrature_order", "must be at least 2"));
        }
        for o in &self.outputs {
            o.parse::<SeriesKind>().map_err(|e| field_err("outputs", e))?;
        }
        if let Some(g) = &self.grid {
            self.grid_from(g).map_err(|e| field_err("grid", e))?;
        }
        if let Some(e) = &self.ensemble {
            self.ensemble_config(None, vec![0.0]).validate().map_err(|err| field_err("ensemble", err))?;
            if e.n_traj == 0 {
                return Err(field_err("ensemble.n_traj", "must be at least 1"));
            }
        }
        if let Some(h) = &self.hom {
            self.hom_setup().validate().map_err(|e| field_err("hom", e))?;
            if let Some(t) = h.laser_coherence_time_ns {
                if !(t >= 0.0) {
                    return Err(field_err("hom.laser_coherence_time_ns", format!("must be >= 0, got {t}")));
                }
            }
            if let Some([lo, hi]) = h.ctw_window_ns {
                if !(lo < hi) {
                    return Err(field_err("hom.ctw_window_ns", "lower bound must be below upper bound"));
                }
            }
        }
        Ok(())
    }

    pub fn system(&self) -> ctw_core::Result<TwoLevelSystem> {
        TwoLevelSystem::new(self.system.t1_ns, self.system.t2_ns)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            tau_c: self.noise.tau_c_ns,
            var_domega: self.noise.var_domega_rad2_per_ns2,
            var_de_rel: self.noise.var_de_rel,
            epsilon: self.noise.epsilon,
        }
    }

    pub fn driving_field(&self) -> DrivingField {
        DrivingField {
            rabi_mean: self.field.rabi_rad_per_ns,
            detuning: self.field.detuning_rad_per_ns,
            noise: self.noise_spec(),
        }
    }

    pub fn thresholds(&self) -> RegimeThresholds {
        self.thresholds.unwrap_or_default()
    }

    fn grid_from(&self, g: &GridConfig) -> ctw_core::Result<Vec<f64>> {
        let grid = match (&g.delays_ns, g.tau_max_ns, g.step_ns) {
            (Some(d), None, None) if !d.is_empty() => d.clone(),
            (None, Some(t), Some(h)) if t > 0.0 && h > 0.0 && t.is_finite() => {
                if g.symmetric {
                    symmetric_grid(t, h)
                } else {
                    uniform_grid(t, h)
                }
            }
            (None, Some(_), Some(_)) => {
                return Err(ctw_core::Error::Validation("tau_max_ns and step_ns must be positive".into()))
            }
            _ => {
                return Err(ctw_core::Error::Validation(
                    "give either delays_ns or both tau_max_ns and step_ns".into(),
                ))
            }
        };
        check_increasing(&grid)?;
        Ok(grid)
    }

    /// Delay grid for g1/g2; defaults to [0, 20] ns in steps of T2/10.
    pub fn grid(&self) -> ctw_core::Result<Vec<f64>> {
        match &self.grid {
            Some(g) => self.grid_from(g),
            None => Ok(uniform_grid(20.0, self.system.t2_ns / 10.0)),
        }
    }

    pub fn ensemble_config(&self, seed: Option<u64>, grid: Vec<f64>) -> EnsembleConfig {
        let e = self.ensemble.as_ref();
        let mut cfg = EnsembleConfig::new(
            e.map_or(DEFAULT_N_TRAJ, |e| e.n_traj),
            seed.or(e.and_then(|e| e.master_seed)).unwrap_or(DEFAULT_SEED),
            grid,
        );
        if let Some(e) = e {
            cfg.t_samples = e.t_samples.unwrap_or(DEFAULT_T_SAMPLES);
            cfg.equilibration = e.equilibration_ns;
            cfg.anchor_spacing = e.anchor_spacing_ns;
        }
        cfg
    }

    /// Interferometer setup; panics if the config has no `[hom]` table.
    pub fn hom_setup(&self) -> HomSetup {
        let h = self.hom.as_ref().expect("hom section");
        let gamma = match h.laser_coherence_time_ns {
            Some(t) => 1.0 / t,
            None => self.noise_spec().gamma_l(),
        };
        HomSetup {
            r_int: h.r_int,
            t_int: 1.0 - h.r_int,
            delay: h.delay_ns,
            pol_angle: h.pol_angle_rad,
            gamma_l: gamma,
            irf_fwhm: h.irf_fwhm_ns,
        }
    }

    pub fn wants(&self, kind: SeriesKind) -> bool {
        self.outputs.is_empty() || self.outputs.iter().any(|o| o == kind.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = include_str!("../examples/fig2.toml");

    #[test]
    fn annotated_example_parses() {
        let cfg = RunConfig::parse(FIG2).unwrap();
        assert_eq!(cfg.system.t1_ns, 0.34);
        assert_eq!(cfg.noise_spec().var_de_rel, 1.0);
        assert_eq!(cfg.grid().unwrap().len(), 101);
        assert_eq!(cfg.ensemble_config(Some(9), vec![0.0]).master_seed, 9);
        assert_eq!(cfg.ensemble_config(None, vec![0.0]).master_seed, 2024);
    }

    #[test]
    fn unknown_field_reports_line() {
        let text = "[system]\nt1_ns = 0.34\nt2_ns = 0.5\nt3_ns = 1\n";
        let msg = RunConfig::parse(text).unwrap_err().to_string();
        assert!(msg.contains("line 4"), "{msg}");
        assert!(msg.contains("t3_ns"), "{msg}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let bad = FIG2.replace("t2_ns = 0.5", "t2_ns = 0.9");
        let msg = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(msg.starts_with("system:"), "{msg}");
        let bad = FIG2.replace("epsilon = 0.0", "epsilon = 1.5");
        assert!(RunConfig::parse(&bad).unwrap_err().to_string().starts_with("field/noise:"));
        let bad = format!("{FIG2}\noutputs = [\"g3\"]\n");
        assert!(RunConfig::parse(&bad).is_err());
    }

    #[test]
    fn grid_forms() {
        let mut cfg = RunConfig::parse(FIG2).unwrap();
        cfg.grid = Some(GridConfig { tau_max_ns: Some(1.0), step_ns: Some(0.5), symmetric: true, delays_ns: None });
        assert_eq!(cfg.grid().unwrap(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        cfg.grid = Some(GridConfig { tau_max_ns: None, step_ns: None, symmetric: false, delays_ns: Some(vec![0.0, 2.0, 1.0]) });
        assert!(cfg.validate().is_err());
        cfg.grid = Some(GridConfig { tau_max_ns: None, step_ns: None, symmetric: false, delays_ns: Some(vec![]) });
        assert!(cfg.grid().is_err());
        cfg.grid = Some(GridConfig { tau_max_ns: Some(1.0), step_ns: None, symmetric: false, delays_ns: None });
        assert!(cfg.grid().is_err());
        cfg.grid = None;
        assert_eq!(cfg.grid().unwrap()[1], 0.05);
    }
}
