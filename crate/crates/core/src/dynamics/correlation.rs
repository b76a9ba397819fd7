use super::{static_liouvillian, TwoLevelSystem};
use crate::error::{validation, Error, Result};
use crate::noise::NoiseSpec;
use crate::qcore::{
    sigma_minus, sigma_plus, steady_state, unvectorize, vectorize, DensityState, Liouvillian, Mat4,
    Vec4, C64,
};
use crate::series::{check_increasing, CorrelationSeries, SeriesKind};

/// Smallest steady-state population accepted as a normalizer.
const MIN_INTENSITY: f64 = 1e-15;

/// Regression-theorem evaluation for one generator and its steady state.
#[derive(Debug, Clone)]
pub struct Regression {
    pub liouvillian: Liouvillian,
    pub steady: DensityState,
}

impl Regression {
    pub fn new(liouvillian: Liouvillian) -> Result<Self> {
        let steady = steady_state(&liouvillian)?;
        Ok(Regression { liouvillian, steady })
    }

    pub fn noise_free(system: &TwoLevelSystem, rabi: f64, detuning: f64) -> Result<Self> {
        Self::new(static_liouvillian(system, rabi, detuning)?)
    }

    /// Steady-state intensity ⟨S+S−⟩.
    pub fn intensity(&self) -> f64 {
        self.steady.excited_population()
    }

    /// Unnormalized G̃1 at non-negative increasing delays.
    pub fn g1_raw(&self, taus: &[f64]) -> Vec<C64> {
        let x0 = vectorize(&(sigma_minus() * self.steady.matrix()));
        propagate_chain(&self.liouvillian, x0, taus)
            .iter()
            .map(|v| unvectorize(v)[(0, 1)])
            .collect()
    }

    /// Unnormalized G̃2 at non-negative increasing delays.
    pub fn g2_raw(&self, taus: &[f64]) -> Vec<f64> {
        let x0 = vectorize(&(sigma_minus() * self.steady.matrix() * sigma_plus()));
        propagate_chain(&self.liouvillian, x0, taus).iter().map(|v| v[3].re).collect()
    }

    fn intensity_checked(&self) -> Result<f64> {
        let i = self.intensity();
        if i <= MIN_INTENSITY {
            return Err(Error::UndefinedNormalization(format!(
                "steady-state intensity {i:e} is zero"
            )));
        }
        Ok(i)
    }

    pub fn g1_series(&self, grid: &[f64]) -> Result<CorrelationSeries> {
        let i = self.intensity_checked()?;
        let values = on_signed_grid(grid, |t| self.g1_raw(t), true)?;
        let mut s = CorrelationSeries::new(
            grid.to_vec(),
            values.into_iter().map(|z| z / i).collect(),
            SeriesKind::G1Rot,
            true,
        )?;
        s.scale = i;
        Ok(s)
    }

    pub fn g2_series(&self, grid: &[f64]) -> Result<CorrelationSeries> {
        let i = self.intensity_checked()?;
        let values = on_signed_grid(
            grid,
            |t| self.g2_raw(t).into_iter().map(|v| C64::new(v, 0.0)).collect(),
            false,
        )?;
        let mut s = CorrelationSeries::new(
            grid.to_vec(),
            values.into_iter().map(|z| C64::new((z.re / (i * i)).max(0.0), 0.0)).collect(),
            SeriesKind::G2,
            true,
        )?;
        s.scale = i * i;
        Ok(s)
    }
}

/// `exp(L·τ_k)·x0` for increasing `τ_k ≥ 0`, stepping between successive
/// delays and reusing the step propagator while the spacing is constant.
pub(crate) fn propagate_chain(l: &Liouvillian, x0: Vec4, taus: &[f64]) -> Vec<Vec4> {
    let mut out = Vec::with_capacity(taus.len());
    let mut x = x0;
    let mut t = 0.0;
    let mut cached: Option<(f64, Mat4)> = None;
    for &tau in taus {
        let dt = tau - t;
        if dt > 0.0 {
            let p = match cached {
                Some((h, p)) if (h - dt).abs() <= 1e-11 * h => p,
                _ => {
                    let p = l.exp(dt);
                    cached = Some((dt, p));
                    p
                }
            };
            x = p * x;
            t = tau;
        }
        out.push(x);
    }
    out
}

/// Evaluates `f` on the sorted absolute delays and maps back, conjugating
/// at negative delays when `conj_negative`.
pub(crate) fn on_signed_grid<F>(grid: &[f64], f: F, conj_negative: bool) -> Result<Vec<C64>>
where
    F: Fn(&[f64]) -> Vec<C64>,
{
    check_increasing(grid)?;
    let mut abs: Vec<f64> = grid.iter().map(|t| t.abs()).collect();
    abs.sort_by(f64::total_cmp);
    abs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
    let vals = f(&abs);
    grid.iter()
        .map(|&t| {
            let a = t.abs();
            let k = abs.partition_point(|&x| x < a - 1e-12 * a.max(1.0));
            let v = vals[k.min(vals.len() - 1)];
            Ok(if t < 0.0 && conj_negative { v.conj() } else { v })
        })
        .collect()
}

/// Normalized rotating-frame g̃1 of the noise-free emitter.
pub fn g1_rotating(system: &TwoLevelSystem, rabi: f64, detuning: f64, grid: &[f64]) -> Result<CorrelationSeries> {
    Regression::noise_free(system, rabi, detuning)?.g1_series(grid)
}

/// Normalized g2 of the noise-free emitter.
pub fn g2_rotating(system: &TwoLevelSystem, rabi: f64, detuning: f64, grid: &[f64]) -> Result<CorrelationSeries> {
    Regression::noise_free(system, rabi, detuning)?.g2_series(grid)
}

/// Laboratory-frame g1: Brownian blurring envelope and optional carrier.
pub fn g1_lab(series: &CorrelationSeries, spec: &NoiseSpec, carrier: f64) -> Result<CorrelationSeries> {
    if series.kind != SeriesKind::G1Rot {
        return Err(validation(format!("g1_lab expects a g1_rot series, got {}", series.kind)));
    }
    let gamma = spec.gamma_l();
    Ok(series
        .map(SeriesKind::G1Lab, |tau, v| {
            v * (-gamma * tau.abs()).exp() * C64::from_polar(1.0, carrier * tau)
        })
        .with_attr("gamma_l", gamma)
        .with_attr("carrier", carrier))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{bpp_liouvillian, rabi_for_saturation, DrivingField};
    use crate::qcore::{evolve_timedep, OdeOptions, OperatorMatrix};
    use crate::series::{symmetric_grid, uniform_grid};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sys() -> TwoLevelSystem {
        TwoLevelSystem::new(0.34, 0.5).unwrap()
    }

    #[test]
    fn g1_normalization_and_symmetry() {
        let grid = symmetric_grid(5.0, 0.05);
        let g1 = g1_rotating(&sys(), 1.0, 0.4, &grid).unwrap();
        g1.check().unwrap();
        let k0 = g1.find(0.0).unwrap();
        assert_relative_eq!(g1.values[k0].re, 1.0, epsilon = 1e-12);
        for (k, t) in grid.iter().enumerate() {
            let j = g1.find(-t).unwrap();
            assert!((g1.values[k] - g1.values[j].conj()).norm() < 1e-14);
        }
    }

    #[test]
    fn elastic_plateau() {
        let s = sys();
        for &sat in &[1e-3, 0.1, 0.68] {
            let rabi = rabi_for_saturation(&s, sat, 0.0);
            let g1 = g1_rotating(&s, rabi, 0.0, &[0.0, 30.0]).unwrap();
            let plateau = s.t2 / (2.0 * s.t1 * (1.0 + sat));
            assert_relative_eq!(g1.values[1].norm(), plateau, max_relative = 1e-8);
        }
        // radiative limit: elastic fraction tends to 1 as s → 0
        let ideal = TwoLevelSystem::new(0.34, 0.68).unwrap();
        let rabi = rabi_for_saturation(&ideal, 1e-5, 0.0);
        let g1 = g1_rotating(&ideal, rabi, 0.0, &[0.0, 30.0]).unwrap();
        assert!((g1.values[1].norm() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn dephasing_eigenvalue_present() {
        let s = sys();
        let l = static_liouvillian(&s, 0.0, 0.3).unwrap();
        let ev = l.eigenvalues();
        assert!(ev.iter().any(|z| (z.re + 1.0 / s.t2).abs() < 1e-10 && (z.im.abs() - 0.3).abs() < 1e-10));
    }

    #[test]
    fn undriven_normalization_fails() {
        assert!(matches!(
            g1_rotating(&sys(), 0.0, 0.0, &[0.0, 1.0]),
            Err(Error::UndefinedNormalization(_))
        ));
        assert!(matches!(
            g2_rotating(&sys(), 0.0, 0.0, &[0.0, 1.0]),
            Err(Error::UndefinedNormalization(_))
        ));
    }

    // oracle: integrate the master equation from the post-detection state
    #[test]
    fn g2_rabi_oscillation_matches_direct_integration() {
        let s = sys();
        let grid = uniform_grid(5.0, 0.02);
        let g2 = g2_rotating(&s, 2.0, 0.0, &grid).unwrap();
        assert!(g2.values[0].re < 1e-12);
        let ops = s.relaxation_ops();
        let states = evolve_timedep(
            |_| OperatorMatrix::driven(2.0, 0.0),
            &ops,
            &DensityState::ground(),
            &grid,
            &OdeOptions::default(),
        )
        .unwrap();
        let ss = 0.68 / (2.0 * 1.68);
        for (v, rho) in g2.values.iter().zip(&states) {
            assert!((v.re - rho.excited_population() / ss).abs() < 1e-6);
        }
        let first_max = g2.real().iter().cloned().fold(0.0, f64::max);
        assert!(first_max > 1.0);
        let tail = g2_rotating(&s, 2.0, 0.0, &[0.0, 40.0]).unwrap();
        assert_relative_eq!(tail.values[1].re, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn g1_lab_envelope() {
        let grid = symmetric_grid(30.0, 0.5);
        let g1 = g1_rotating(&sys(), 0.1, 0.0, &grid).unwrap();
        let quiet = NoiseSpec::quiet(4.0);
        assert_eq!(g1_lab(&g1, &quiet, 0.0).unwrap().values, g1.values);
        let spec = NoiseSpec { tau_c: 4.0, var_domega: 0.0125, var_de_rel: 0.0, epsilon: 0.0 };
        let lab = g1_lab(&g1, &spec, 0.3).unwrap();
        for k in 0..grid.len() {
            let env = (-0.05 * grid[k].abs()).exp();
            assert_relative_eq!(lab.values[k].norm(), env * g1.values[k].norm(), max_relative = 1e-12);
        }
        let k = lab.find(20.0).unwrap();
        assert_relative_eq!(lab.values[k].norm() / g1.values[k].norm(), (-1.0f64).exp(), max_relative = 1e-12);
        assert!(g1_lab(&lab, &spec, 0.0).is_err());
    }

    fn one_over_e_time(g1: &CorrelationSeries) -> f64 {
        let k = g1.values.iter().position(|z| z.norm() < (-1.0f64).exp()).unwrap();
        g1.delays[k]
    }

    #[test]
    fn bpp_dephasing_shortens_coherence() {
        let s = sys();
        // strong enough drive that the elastic plateau lies below 1/e
        let rabi = 3.0;
        let grid = uniform_grid(10.0, 0.005);
        let base = g1_rotating(&s, rabi, 0.0, &grid).unwrap();
        let noise = NoiseSpec { tau_c: 0.05, var_domega: 1.0, var_de_rel: 0.0, epsilon: 0.0 };
        let field = DrivingField { rabi_mean: rabi, detuning: 0.0, noise };
        let noisy = Regression::new(bpp_liouvillian(&s, &field).unwrap()).unwrap().g1_series(&grid).unwrap();
        assert!(one_over_e_time(&noisy) < one_over_e_time(&base));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn structural_invariants(rabi in 0.01..5.0f64, det in -2.0..2.0f64, t1 in 0.1..2.0f64, ratio in 0.1..1.0f64) {
            let s = TwoLevelSystem::new(t1, 2.0 * t1 * ratio).unwrap();
            let grid = symmetric_grid(4.0 * t1, t1 / 10.0);
            let g2 = g2_rotating(&s, rabi, det, &grid).unwrap();
            prop_assert!(g2.check().is_ok());
            let k0 = g2.find(0.0).unwrap();
            prop_assert!(g2.values[k0].re <= 1e-6);
            let g1 = g1_rotating(&s, rabi, det, &grid).unwrap();
            prop_assert!(g1.check().is_ok());
        }
    }
}
