use super::liouvillian::dissipator_part;
use super::{CollapseOperator, DensityState, Mat2, OperatorMatrix, Vec4, C64};
use crate::error::{validation, Error, Result};

/// Step-size control for the Dormand–Prince 5(4) integrator.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    /// Upper bound on the step, useful when the right-hand side has structure
    /// finer than the output grid.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-8,
            atol: 1e-10,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for i in 0..N {
                out[i] += h * c * k[i];
            }
        }
    }
    out
}

fn err_norm<const N: usize>(y: &[f64; N], y_new: &[f64; N], e: &[f64; N], o: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * y[i].abs().max(y_new[i].abs());
        acc += (e[i] / sc).powi(2);
    }
    (acc / N as f64).sqrt()
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the solution at
/// every point of `grid` (increasing, all ≥ `t0`) via the method's continuous
/// extension.
pub fn dopri5_dense<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<[f64; N]>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(validation("time grid must be strictly increasing"));
    }
    let mut out = Vec::with_capacity(grid.len());
    let mut next = 0;
    while next < grid.len() && grid[next] <= t0 {
        if grid[next] < t0 {
            return Err(validation("time grid starts before the initial time"));
        }
        out.push(y0);
        next += 1;
    }
    if next == grid.len() {
        return Ok(out);
    }
    let t_end = *grid.last().unwrap();

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = opts.h_init.unwrap_or_else(|| {
        let rate: f64 = k1.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let size: f64 = y.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
        let span = t_end - t0;
        if rate > 0.0 {
            (0.01 * size / rate).min(span)
        } else {
            span
        }
    });
    h = h.min(opts.h_max);
    let mut steps = 0usize;

    while next < grid.len() {
        if steps >= opts.max_steps {
            return Err(Error::Integration { t, reason: "step budget exhausted".into() });
        }
        steps += 1;
        h = h.min(t_end - t).min(opts.h_max);
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(Error::Integration { t, reason: "step size underflow".into() });
        }

        let k2 = f(t + C2 * h, &axpy(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y_new = axpy(
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let k7 = f(t + h, &y_new);
        let e = axpy(
            &[0.0; N],
            h,
            &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
        );
        let err = err_norm(&y, &y_new, &e, opts);
        if !err.is_finite() {
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            let t_new = t + h;
            if next < grid.len() && grid[next] <= t_new {
                let mut r2 = [0.0; N];
                let mut r3 = [0.0; N];
                let mut r4 = [0.0; N];
                let mut r5 = [0.0; N];
                for i in 0..N {
                    let dy = y_new[i] - y[i];
                    let bspl = h * k1[i] - dy;
                    r2[i] = dy;
                    r3[i] = bspl;
                    r4[i] = dy - h * k7[i] - bspl;
                    r5[i] = h
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                while next < grid.len() && grid[next] <= t_new {
                    let th = (grid[next] - t) / h;
                    let th1 = 1.0 - th;
                    let mut v = [0.0; N];
                    for i in 0..N {
                        v[i] = y[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
                    }
                    if grid[next] == t_new {
                        v = y_new;
                    }
                    out.push(v);
                    next += 1;
                }
            }
            t = t_new;
            y = y_new;
            k1 = k7;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(out)
}

fn pack(m: &Mat2) -> [f64; 8] {
    let v = super::vectorize(m);
    let mut out = [0.0; 8];
    for i in 0..4 {
        out[2 * i] = v[i].re;
        out[2 * i + 1] = v[i].im;
    }
    out
}

fn unpack(y: &[f64; 8]) -> Vec4 {
    Vec4::from_fn(|i, _| C64::new(y[2 * i], y[2 * i + 1]))
}

/// Integrates `dρ/dt = −i[H(t), ρ] + D[ρ]` and returns the state at each
/// grid point; the first grid point is the initial time.
pub fn evolve_timedep<H>(
    hamiltonian_path: H,
    collapses: &[CollapseOperator],
    rho0: &DensityState,
    grid: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<DensityState>>
where
    H: Fn(f64) -> OperatorMatrix,
{
    if grid.is_empty() {
        return Ok(Vec::new());
    }
    let dissipator = dissipator_part(collapses);
    let minus_i = C64::new(0.0, -1.0);
    let rhs = |t: f64, y: &[f64; 8]| {
        let v = unpack(y);
        let rho = super::unvectorize(&v);
        let h = *hamiltonian_path(t).matrix();
        let comm = (h * rho - rho * h) * minus_i;
        let d = super::unvectorize(&(dissipator * v));
        pack(&(comm + d))
    };
    let states = dopri5_dense(rhs, grid[0], pack(rho0.matrix()), grid, opts)?;
    Ok(states.iter().map(|y| DensityState::from_vec(&unpack(y))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{build_liouvillian, propagate, sigma_minus, spin_z};
    use approx::assert_relative_eq;

    fn relaxation(t1: f64, t2: f64) -> Vec<CollapseOperator> {
        vec![
            CollapseOperator::scaled(sigma_minus(), 1.0 / t1),
            CollapseOperator::scaled(spin_z(), 2.0 * (1.0 / t2 - 0.5 / t1)),
        ]
    }

    #[test]
    fn scalar_exponential_and_oscillator() {
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.25).collect();
        let ys = dopri5_dense(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], &grid, &OdeOptions::default())
            .unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert_relative_eq!(y[0], (-t).exp(), max_relative = 1e-7);
        }
        let ys = dopri5_dense(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [0.0, 1.0],
            &grid,
            &OdeOptions::default(),
        )
        .unwrap();
        for (t, y) in grid.iter().zip(&ys) {
            assert_relative_eq!(y[0], t.sin(), epsilon = 1e-7);
        }
    }

    #[test]
    fn constant_path_matches_propagate() {
        let h = OperatorMatrix::driven(2.0, 0.3);
        let c = relaxation(0.34, 0.5);
        let l = build_liouvillian(&h, &c).unwrap();
        let grid: Vec<f64> = (0..=50).map(|k| k as f64 * 0.1).collect();
        let states = evolve_timedep(|_| h, &c, &DensityState::ground(), &grid, &OdeOptions::default())
            .unwrap();
        for (t, rho) in grid.iter().zip(&states) {
            let exact = propagate(&l, &DensityState::ground(), *t).unwrap();
            assert!((rho.matrix() - exact.matrix()).norm() < 1e-8);
            assert!((rho.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn free_state_is_constant() {
        let rho = DensityState::new(Mat2::new(
            C64::new(0.6, 0.0),
            C64::new(0.2, 0.1),
            C64::new(0.2, -0.1),
            C64::new(0.4, 0.0),
        ))
        .unwrap();
        let grid = [0.0, 1.0, 10.0];
        let out =
            evolve_timedep(|_| OperatorMatrix::zero(), &[], &rho, &grid, &OdeOptions::default())
                .unwrap();
        for s in out {
            assert_eq!(s, rho);
        }
    }

    #[test]
    fn weak_detuning_modulation_is_perturbative() {
        let (t1, t2) = (0.34, 0.5);
        let c = relaxation(t1, t2);
        let amp = 0.01;
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.05).collect();
        let stat = evolve_timedep(
            |_| OperatorMatrix::driven(1.0, 0.0),
            &c,
            &DensityState::ground(),
            &grid,
            &OdeOptions::default(),
        )
        .unwrap();
        let modu = evolve_timedep(
            |t| OperatorMatrix::driven(1.0, amp * (3.0 * t).sin()),
            &c,
            &DensityState::ground(),
            &grid,
            &OdeOptions::default(),
        )
        .unwrap();
        for (a, b) in stat.iter().zip(&modu) {
            assert!((a.excited_population() - b.excited_population()).abs() <= amp * t2);
            assert!((b.trace().re - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn long_run_trace_drift() {
        let c = relaxation(0.34, 0.5);
        let grid: Vec<f64> = (0..=100).map(|k| k as f64 * 0.5).collect();
        let out = evolve_timedep(
            |t| OperatorMatrix::driven(2.0, 0.5 * (0.7 * t).cos()),
            &c,
            &DensityState::excited(),
            &grid,
            &OdeOptions::default(),
        )
        .unwrap();
        for s in &out {
            assert!((s.trace().re - 1.0).abs() < 1e-8);
            assert!(s.check().is_ok());
        }
    }

    #[test]
    fn underflow_is_reported() {
        let opts = OdeOptions { rtol: 1e-8, atol: 1e-10, h_init: None, h_max: f64::INFINITY, max_steps: 10 };
        let r = dopri5_dense(|_, y: &[f64; 1]| [-1e3 * y[0]], 0.0, [1.0], &[0.0, 100.0], &opts);
        assert!(matches!(r, Err(Error::Integration { .. })));
        let r = dopri5_dense(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], &[1.0, 0.5], &OdeOptions::default());
        assert!(r.is_err());
    }
}
