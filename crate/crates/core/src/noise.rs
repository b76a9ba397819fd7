//! Correlated Ornstein-Uhlenbeck fluctuations of the drive.
//!
//! Internally the pair is handled in reduced units: `x = δω/σω`,
//! `y = (δE/Ē)/Q⁻¹` and time in units of τC, so both components are
//! stationary standard normals with correlation ε. Conversion to physical
//! units happens at the API boundary.

use crate::error::{validation, Result};
use crate::qcore::{dopri5_dense, OdeOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Correlation time (ns).
    pub tau_c: f64,
    /// Stationary variance of δω (rad²/ns²).
    pub var_domega: f64,
    /// Stationary variance of δE/Ē, i.e. Q⁻².
    pub var_de_rel: f64,
    pub epsilon: f64,
}

impl NoiseSpec {
    pub fn quiet(tau_c: f64) -> Self {
        NoiseSpec { tau_c, var_domega: 0.0, var_de_rel: 0.0, epsilon: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(validation(format!("tau_c must be positive, got {}", self.tau_c)));
        }
        if !(self.var_domega >= 0.0 && self.var_domega.is_finite()) {
            return Err(validation(format!("var_domega must be >= 0, got {}", self.var_domega)));
        }
        if !(self.var_de_rel >= 0.0 && self.var_de_rel.is_finite()) {
            return Err(validation(format!("var_de_rel must be >= 0, got {}", self.var_de_rel)));
        }
        if !(-1.0..=1.0).contains(&self.epsilon) {
            return Err(validation(format!("epsilon must lie in [-1, 1], got {}", self.epsilon)));
        }
        Ok(())
    }

    pub fn sigma_domega(&self) -> f64 {
        self.var_domega.sqrt()
    }

    /// Q⁻¹, the relative amplitude standard deviation.
    pub fn sigma_de_rel(&self) -> f64 {
        self.var_de_rel.sqrt()
    }

    /// Covariance of δω and δE/Ē.
    pub fn covariance(&self) -> f64 {
        self.epsilon * self.sigma_domega() * self.sigma_de_rel()
    }

    /// Brownian-limit blurring rate Γ_L = var(δω)·τC.
    pub fn gamma_l(&self) -> f64 {
        self.var_domega * self.tau_c
    }

    pub fn is_quiet(&self) -> bool {
        self.var_domega == 0.0 && self.var_de_rel == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub grid: Vec<f64>,
    /// δω (rad/ns).
    pub domega: Vec<f64>,
    /// δE/Ē.
    pub de_rel: Vec<f64>,
    /// ∫δω dt from the first grid point (rad).
    pub phase: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseIntegration {
    /// Joint law of the OU value and its integral over each step.
    Exact,
    /// Trapezoid rule on the sampled values; biased at O(Δ²).
    Trapezoid,
}

/// Conditional variance of the step integral given the end value, in
/// reduced units.
fn integral_residual_variance(h: f64) -> f64 {
    if h < 1e-2 {
        let h2 = h * h;
        return h2 * h * (1.0 / 6.0 - h2 / 60.0 + 17.0 * h2 * h2 / 10080.0);
    }
    let b = -(-h).exp_m1();
    let a = 1.0 - b;
    (2.0 * (h - b) - b * b - b * b * b / (1.0 + a)).max(0.0)
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(validation("time grid has non-finite entries"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(validation("time grid must be strictly increasing"));
    }
    Ok(())
}

/// Generator for path `index` of an ensemble keyed by `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn sample_path(spec: &NoiseSpec, grid: &[f64], seed: u64) -> Result<NoisePath> {
    sample_path_with(spec, grid, seed, 0, PhaseIntegration::Exact)
}

pub fn sample_path_with(
    spec: &NoiseSpec,
    grid: &[f64],
    seed: u64,
    index: u64,
    integration: PhaseIntegration,
) -> Result<NoisePath> {
    spec.validate()?;
    check_grid(grid)?;
    let n = grid.len();
    let mut path = NoisePath {
        grid: grid.to_vec(),
        domega: Vec::with_capacity(n),
        de_rel: Vec::with_capacity(n),
        phase: Vec::with_capacity(n),
    };
    if n == 0 {
        return Ok(path);
    }
    let mut rng = path_rng(seed, index);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let eps = spec.epsilon;
    let perp = (1.0 - eps * eps).max(0.0).sqrt();
    let sw = spec.sigma_domega();
    let se = spec.sigma_de_rel();

    let mut x = normal();
    let mut y = eps * x + perp * normal();
    let mut phi = 0.0;
    path.domega.push(sw * x);
    path.de_rel.push(se * y);
    path.phase.push(0.0);

    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / spec.tau_c;
        let b = -(-h).exp_m1();
        let a = 1.0 - b;
        let sd = (b * (1.0 + a)).sqrt();
        let z1 = normal();
        let z2 = normal();
        let ux = sd * z1;
        let uy = eps * ux + perp * sd * z2;
        let x_new = a * x + ux;
        let integral = match integration {
            PhaseIntegration::Exact => {
                let z3 = normal();
                let regress = if sd > 0.0 { b * b / sd } else { 0.0 };
                x * b + regress * z1 + integral_residual_variance(h).sqrt() * z3
            }
            PhaseIntegration::Trapezoid => 0.5 * h * (x + x_new),
        };
        x = x_new;
        y = a * y + uy;
        phi += sw * spec.tau_c * integral;
        path.domega.push(sw * x);
        path.de_rel.push(se * y);
        path.phase.push(phi);
    }
    Ok(path)
}

/// Variance of the accumulated phase over a window of length `t`.
pub fn phase_variance(spec: &NoiseSpec, t: f64) -> f64 {
    let tc = spec.tau_c;
    // t + τC(e^{−t/τC} − 1), written to avoid cancellation at small t
    let u = t / tc;
    let core = if u < 1e-4 { tc * u * u * (0.5 - u / 6.0) } else { t + tc * (-u).exp_m1() };
    2.0 * spec.var_domega * tc * core
}

pub fn blurring_factor(spec: &NoiseSpec, t: f64, exact: bool) -> f64 {
    if exact {
        (-0.5 * phase_variance(spec, t)).exp()
    } else {
        (-spec.gamma_l() * t).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointGaussian {
    pub mean: [f64; 2],
    pub covariance: [[f64; 2]; 2],
}

/// Conditional mean map `(δω, δE/Ē) ↦ factor·(δω, δE/Ē)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanMap {
    pub factor: f64,
}

impl MeanMap {
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.factor * v[0], self.factor * v[1]]
    }
}

/// Law of `(δω, δE/Ē)` after `dt` given its current value: mean from the
/// returned map, fluctuation from the zero-mean Gaussian.
pub fn joint_propagator(spec: &NoiseSpec, dt: f64) -> Result<(MeanMap, JointGaussian)> {
    if !(dt >= 0.0) {
        return Err(validation(format!("duration must be non-negative, got {dt}")));
    }
    let a = (-dt / spec.tau_c).exp();
    let spread = -(-2.0 * dt / spec.tau_c).exp_m1();
    let c = spec.covariance() * spread;
    Ok((
        MeanMap { factor: a },
        JointGaussian {
            mean: [0.0, 0.0],
            covariance: [[spec.var_domega * spread, c], [c, spec.var_de_rel * spread]],
        },
    ))
}

/// First and second moments of the reduced pair `(x, y)`; the second
/// moments are raw, `⟨x²⟩`, `⟨y²⟩`, `⟨xy⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub second_x: f64,
    pub second_y: f64,
    pub cross: f64,
}

impl Moments {
    pub fn stationary(epsilon: f64) -> Self {
        Moments { mean_x: 0.0, mean_y: 0.0, second_x: 1.0, second_y: 1.0, cross: epsilon }
    }
}

/// Integrates the linear moment equations over a physical duration `t`.
pub fn moment_flow(initial: &Moments, t: f64, spec: &NoiseSpec) -> Result<Moments> {
    spec.validate()?;
    if !(t >= 0.0) {
        return Err(validation(format!("duration must be non-negative, got {t}")));
    }
    let eps = spec.epsilon;
    let y0 = [initial.mean_x, initial.mean_y, initial.second_x, initial.second_y, initial.cross];
    let u = t / spec.tau_c;
    let rhs = |_: f64, m: &[f64; 5]| {
        [-m[0], -m[1], -2.0 * m[2] + 2.0, -2.0 * m[3] + 2.0, -2.0 * m[4] + 2.0 * eps]
    };
    let opts = OdeOptions { rtol: 1e-11, atol: 1e-13, ..OdeOptions::default() };
    let out = dopri5_dense(rhs, 0.0, y0, &[0.0, u], &opts)?;
    let m = out[out.len() - 1];
    Ok(Moments { mean_x: m[0], mean_y: m[1], second_x: m[2], second_y: m[3], cross: m[4] })
}
