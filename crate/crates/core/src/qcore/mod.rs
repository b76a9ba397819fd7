//! Dense 2×2 / 4×4 complex algebra for a single two-level emitter.
//!
//! Basis order is `[|g⟩, |e⟩]`, so `S+ = |e⟩⟨g|` has its single nonzero
//! entry at `(1, 0)`. Spin operators follow the spin-½ convention
//! `Sx = (S+ + S−)/2`, `Sz = S+S− − ½·1`; every collapse-operator rate in
//! the crate is expressed against these matrices.
//!
//! Density states are vectorized by stacking columns:
//! `vec(ρ) = [ρ_gg, ρ_eg, ρ_ge, ρ_ee]`, so `vec(AρB) = (Bᵀ ⊗ A)·vec(ρ)`.
//! Times are in ns and angular frequencies in rad/ns throughout.

mod liouvillian;
mod ode;

pub use liouvillian::{build_liouvillian, propagate, steady_state, Liouvillian};
pub(crate) use liouvillian::{dissipator_part, hamiltonian_part};
pub use ode::{dopri5_dense, evolve_timedep, OdeOptions};

use crate::error::{validation, Result};
use nalgebra::{Matrix2, Matrix4, Vector4};

pub type C64 = nalgebra::Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;
pub type Vec4 = Vector4<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;

pub fn sigma_plus() -> Mat2 {
    Mat2::new(ZERO, ZERO, ONE, ZERO)
}

pub fn sigma_minus() -> Mat2 {
    Mat2::new(ZERO, ONE, ZERO, ZERO)
}

/// `S+S−`, the excited-state projector.
pub fn excited_projector() -> Mat2 {
    Mat2::new(ZERO, ZERO, ZERO, ONE)
}

pub fn spin_x() -> Mat2 {
    (sigma_plus() + sigma_minus()) * C64::new(0.5, 0.0)
}

pub fn spin_z() -> Mat2 {
    excited_projector() - Mat2::identity() * C64::new(0.5, 0.0)
}

pub(crate) fn dagger(m: &Mat2) -> Mat2 {
    m.adjoint()
}

pub(crate) fn max_abs(m: &Mat2) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn is_hermitian(m: &Mat2, tol: f64) -> bool {
    max_abs(&(m - m.adjoint())) <= tol
}

pub fn vectorize(m: &Mat2) -> Vec4 {
    Vec4::new(m[(0, 0)], m[(1, 0)], m[(0, 1)], m[(1, 1)])
}

pub fn unvectorize(v: &Vec4) -> Mat2 {
    Mat2::new(v[0], v[2], v[1], v[3])
}

/// Trace of the matrix stored in a vectorized state.
pub(crate) fn vec_trace(v: &Vec4) -> C64 {
    v[0] + v[3]
}

/// Kronecker product of two 2×2 matrices.
pub(crate) fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// A 2×2 operator on the emitter (Hamiltonian pieces, spin operators).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorMatrix(pub Mat2);

impl OperatorMatrix {
    pub fn zero() -> Self {
        OperatorMatrix(Mat2::zeros())
    }

    /// Rotating-frame driving Hamiltonian `Δω·S+S− + Ω1·Sx` (ħ = 1).
    pub fn driven(rabi: f64, detuning: f64) -> Self {
        OperatorMatrix(
            excited_projector() * C64::new(detuning, 0.0) + spin_x() * C64::new(rabi, 0.0),
        )
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }
}

impl std::ops::Add for OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: Self) -> Self {
        OperatorMatrix(self.0 + rhs.0)
    }
}

/// Lindblad jump operator; the rate is folded into the matrix scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseOperator(pub Mat2);

impl CollapseOperator {
    /// `sqrt(rate)·op`. Panics are avoided by treating tiny negative rates
    /// (rounding) as zero; callers validate real domain errors beforehand.
    pub fn scaled(op: Mat2, rate: f64) -> Self {
        CollapseOperator(op * C64::new(rate.max(0.0).sqrt(), 0.0))
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        max_abs(&self.0) == 0.0
    }
}

/// Hermitian, unit-trace, positive 2×2 density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityState(Mat2);

impl DensityState {
    pub fn new(m: Mat2) -> Result<Self> {
        let state = DensityState(m);
        state.check()?;
        Ok(state)
    }

    /// Wraps a numerically produced state, symmetrizing away rounding in the
    /// off-diagonal pair.
    pub(crate) fn from_numeric(m: Mat2) -> Self {
        DensityState((m + m.adjoint()) * C64::new(0.5, 0.0))
    }

    pub(crate) fn from_vec(v: &Vec4) -> Self {
        Self::from_numeric(unvectorize(v))
    }

    pub fn ground() -> Self {
        DensityState(Mat2::new(ONE, ZERO, ZERO, ZERO))
    }

    pub fn excited() -> Self {
        DensityState(excited_projector())
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.0
    }

    pub fn to_vec(&self) -> Vec4 {
        vectorize(&self.0)
    }

    pub fn excited_population(&self) -> f64 {
        self.0[(1, 1)].re
    }

    /// `⟨S−⟩ = ρ_eg`.
    pub fn coherence(&self) -> C64 {
        self.0[(1, 0)]
    }

    pub fn trace(&self) -> C64 {
        self.0[(0, 0)] + self.0[(1, 1)]
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let a = self.0[(0, 0)].re;
        let d = self.0[(1, 1)].re;
        let b = 0.5 * (self.0[(0, 1)] + self.0[(1, 0)].conj());
        let mean = 0.5 * (a + d);
        let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        [mean - radius, mean + radius]
    }

    pub fn check(&self) -> Result<()> {
        if self.0.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(validation("density state has non-finite entries"));
        }
        if !is_hermitian(&self.0, HERMITIAN_TOL) {
            return Err(validation("density state is not Hermitian"));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(validation(format!("density state trace {tr} differs from 1")));
        }
        let [lo, _] = self.eigenvalues();
        if lo < -POSITIVITY_TOL {
            return Err(validation(format!("density state has negative eigenvalue {lo}")));
        }
        Ok(())
    }
}
