use super::{
    dagger, is_hermitian, kron, max_abs, CollapseOperator, DensityState, Mat2, Mat4,
    OperatorMatrix, Vec4, I, ONE, ZERO,
};
use crate::error::{validation, Error, Result};

const NULL_RELATIVE: f64 = 1e-13;
const CONDITION_LIMIT: f64 = 1e10;

/// 4×4 generator acting on column-stacked density states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Liouvillian(pub Mat4);

impl Liouvillian {
    pub fn zero() -> Self {
        Liouvillian(Mat4::zeros())
    }

    pub fn generator(&self) -> &Mat4 {
        &self.0
    }

    pub fn apply(&self, rho: &Mat2) -> Mat2 {
        super::unvectorize(&(self.0 * super::vectorize(rho)))
    }

    /// Largest entry of the trace functional row `row0 + row3`.
    pub fn trace_row_residual(&self) -> f64 {
        (0..4)
            .map(|c| (self.0[(0, c)] + self.0[(3, c)]).norm())
            .fold(0.0, f64::max)
    }

    /// `exp(L·τ)` as a dense matrix.
    pub fn exp(&self, tau: f64) -> Mat4 {
        if tau == 0.0 {
            return Mat4::identity();
        }
        (self.0 * super::C64::new(tau, 0.0)).exp()
    }

    pub fn eigenvalues(&self) -> Vec<super::C64> {
        self.0.schur().eigenvalues().map(|v| v.iter().copied().collect()).unwrap_or_default()
    }
}

impl std::ops::Add for Liouvillian {
    type Output = Liouvillian;
    fn add(self, rhs: Self) -> Self {
        Liouvillian(self.0 + rhs.0)
    }
}

pub(crate) fn hamiltonian_part(h: &Mat2) -> Mat4 {
    let id = Mat2::identity();
    (kron(&id, h) - kron(&h.transpose(), &id)) * (-I)
}

pub(crate) fn dissipator_part(collapses: &[CollapseOperator]) -> Mat4 {
    let id = Mat2::identity();
    let half = super::C64::new(0.5, 0.0);
    let mut out = Mat4::zeros();
    for c in collapses.iter().filter(|c| !c.is_zero()) {
        let l = c.matrix();
        let ldl = dagger(l) * l;
        out += kron(&l.conjugate(), l) - kron(&id, &ldl) * half - kron(&ldl.transpose(), &id) * half;
    }
    out
}

fn check_collapses(collapses: &[CollapseOperator]) -> Result<()> {
    for c in collapses {
        if c.matrix().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(validation("collapse operator has non-finite entries"));
        }
    }
    Ok(())
}

pub fn build_liouvillian(
    hamiltonian: &OperatorMatrix,
    collapses: &[CollapseOperator],
) -> Result<Liouvillian> {
    let h = hamiltonian.matrix();
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(validation("hamiltonian has non-finite entries"));
    }
    if !is_hermitian(h, 1e-12 * max_abs(h).max(1.0)) {
        return Err(validation("hamiltonian is not Hermitian"));
    }
    check_collapses(collapses)?;
    Ok(Liouvillian(hamiltonian_part(h) + dissipator_part(collapses)))
}

/// Null vector of the generator, normalized to unit trace.
pub fn steady_state(l: &Liouvillian) -> Result<DensityState> {
    let m = l.0;
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::AmbiguousSteadyState { dimension: 4 });
    }
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

    let dimension = s.iter().filter(|&&x| x <= NULL_RELATIVE * s[0]).count();
    if dimension > 1 {
        return Err(Error::AmbiguousSteadyState { dimension });
    }
    if s[0] / s[2] > CONDITION_LIMIT {
        log::debug!("ill-conditioned generator, steady state by long-time propagation");
        return relax(l, s[2]);
    }
    let row = v_t.row(order[3]);
    let v = Vec4::new(row[0].conj(), row[1].conj(), row[2].conj(), row[3].conj());
    let tr = super::vec_trace(&v);
    if tr.norm() < 1e-14 {
        return relax(l, s[2]);
    }
    let state = DensityState::from_vec(&(v / tr));
    state.check()?;
    Ok(state)
}

fn relax(l: &Liouvillian, slowest: f64) -> Result<DensityState> {
    let mixed = Mat2::new(ONE * 0.5, ZERO, ZERO, ONE * 0.5);
    let v = l.exp(50.0 / slowest) * super::vectorize(&mixed);
    let tr = super::vec_trace(&v);
    let state = DensityState::from_vec(&(v / tr));
    state.check()?;
    Ok(state)
}

pub fn propagate(l: &Liouvillian, rho0: &DensityState, tau: f64) -> Result<DensityState> {
    if !(tau >= 0.0) {
        return Err(validation(format!("propagation time must be non-negative, got {tau}")));
    }
    Ok(DensityState::from_vec(&(l.exp(tau) * rho0.to_vec())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{excited_projector, sigma_minus, spin_z, C64};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn decay(t1: f64) -> CollapseOperator {
        CollapseOperator::scaled(sigma_minus(), 1.0 / t1)
    }

    fn driven(rabi: f64, det: f64, t1: f64, t2: f64) -> Liouvillian {
        let gphi = 1.0 / t2 - 0.5 / t1;
        build_liouvillian(
            &OperatorMatrix::driven(rabi, det),
            &[decay(t1), CollapseOperator::scaled(spin_z(), 2.0 * gphi)],
        )
        .unwrap()
    }

    #[test]
    fn empty_generator_is_zero() {
        let l = build_liouvillian(&OperatorMatrix::zero(), &[]).unwrap();
        assert_eq!(l, Liouvillian::zero());
    }

    #[test]
    fn free_precession_sign() {
        let det = 0.7;
        let l = build_liouvillian(&OperatorMatrix::driven(0.0, det), &[]).unwrap();
        // element carrying <S+> is rho[(0,1)]
        let rho = Mat2::new(ZERO, ONE, ZERO, ZERO);
        let out = l.apply(&rho);
        assert_relative_eq!(out[(0, 1)].im, det, epsilon = 1e-15);
        assert_relative_eq!(out[(0, 1)].re, 0.0);
        let rho = Mat2::new(ZERO, ZERO, ONE, ZERO);
        assert_relative_eq!(l.apply(&rho)[(1, 0)].im, -det, epsilon = 1e-15);
    }

    #[test]
    fn non_hermitian_hamiltonian_rejected() {
        let h = OperatorMatrix(sigma_minus());
        assert!(matches!(build_liouvillian(&h, &[]), Err(Error::Validation(_))));
    }

    #[test]
    fn t1_decay_is_exponential() {
        let t1 = 0.34;
        let l = build_liouvillian(&OperatorMatrix::zero(), &[decay(t1)]).unwrap();
        for &t in &[0.1, 0.34, 1.0, 3.0] {
            let rho = propagate(&l, &DensityState::excited(), t).unwrap();
            assert_relative_eq!(rho.excited_population(), (-t / t1).exp(), epsilon = 1e-12);
        }
    }

    #[test]
    fn pure_dephasing_decay() {
        let t2 = 0.5;
        let l = build_liouvillian(
            &OperatorMatrix::zero(),
            &[CollapseOperator::scaled(spin_z(), 2.0 / t2)],
        )
        .unwrap();
        let half = C64::new(0.5, 0.0);
        let rho = DensityState::new(Mat2::new(half, half, half, half)).unwrap();
        let out = propagate(&l, &rho, t2).unwrap();
        assert_relative_eq!(out.coherence().re, 0.5 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_eq!(propagate(&l, &rho, 0.0).unwrap(), rho);
        assert!(propagate(&l, &rho, -1.0).is_err());
    }

    #[test]
    fn steady_state_cases() {
        let l = build_liouvillian(&OperatorMatrix::zero(), &[decay(0.34)]).unwrap();
        let ss = steady_state(&l).unwrap();
        assert_relative_eq!(ss.excited_population(), 0.0, epsilon = 1e-12);

        // resonant drive at s = 0.68; oracle is long-time propagation
        let l = driven(2.0, 0.0, 0.34, 0.5);
        let ss = steady_state(&l).unwrap();
        let s = 0.68;
        assert_relative_eq!(ss.excited_population(), s / (2.0 * (1.0 + s)), epsilon = 1e-10);
        let long = propagate(&l, &DensityState::ground(), 200.0).unwrap();
        assert_relative_eq!(long.excited_population(), ss.excited_population(), epsilon = 1e-10);
        assert!((l.0 * ss.to_vec()).norm() < 1e-10);

        let l = driven(1e4, 0.0, 0.34, 0.5);
        assert_relative_eq!(steady_state(&l).unwrap().excited_population(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn ambiguous_steady_state_reported() {
        let l = build_liouvillian(&OperatorMatrix::zero(), &[]).unwrap();
        assert!(matches!(steady_state(&l), Err(Error::AmbiguousSteadyState { dimension: 4 })));
        let l = build_liouvillian(
            &OperatorMatrix::driven(0.0, 0.3),
            &[CollapseOperator::scaled(spin_z(), 1.0)],
        )
        .unwrap();
        assert!(matches!(steady_state(&l), Err(Error::AmbiguousSteadyState { dimension: 2 })));
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let l = driven(0.8, 0.3, 0.34, 0.5);
        let ss = steady_state(&l).unwrap();
        for &t in &[0.5, 5.0, 50.0] {
            let out = propagate(&l, &ss, t).unwrap();
            assert!((out.matrix() - ss.matrix()).norm() < 1e-9);
        }
    }

    #[test]
    fn excited_projector_hamiltonian_linearity() {
        let h1 = OperatorMatrix(excited_projector() * C64::new(0.4, 0.0));
        let h2 = OperatorMatrix::driven(1.3, 0.0);
        let a = build_liouvillian(&(h1 + h2), &[]).unwrap();
        let b = build_liouvillian(&h1, &[]).unwrap() + build_liouvillian(&h2, &[]).unwrap();
        assert!((a.0 - b.0).iter().all(|z| z.norm() < 1e-12));
    }

    proptest! {
        #[test]
        fn trace_preserving_and_semigroup(
            rabi in 0.0..3.0f64, det in -2.0..2.0f64,
            t1 in 0.1..2.0f64, ratio in 0.05..1.0f64,
            a in 0.0..3.0f64, b in 0.0..3.0f64,
        ) {
            let t2 = 2.0 * t1 * ratio;
            let l = driven(rabi, det, t1, t2);
            prop_assert!(l.trace_row_residual() < 1e-12);
            let rho = DensityState::ground();
            let direct = propagate(&l, &rho, a + b).unwrap();
            let split = propagate(&l, &propagate(&l, &rho, a).unwrap(), b).unwrap();
            prop_assert!((direct.matrix() - split.matrix()).norm() < 1e-9);
            prop_assert!(direct.check().is_ok());
            let ss = steady_state(&l).unwrap();
            prop_assert!(ss.check().is_ok());
            prop_assert!((l.0 * ss.to_vec()).norm() < 1e-10);
        }
    }
}
