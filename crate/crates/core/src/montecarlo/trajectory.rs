use crate::dynamics::{DrivingField, TwoLevelSystem};
use crate::error::{validation, Result};
use crate::noise::{sample_path_with, PhaseIntegration};
use crate::qcore::{dissipator_part, hamiltonian_part, steady_state, Liouvillian, Mat4, OperatorMatrix, Vec4};

/// Relative tolerance for matching requested times to path nodes.
const NODE_TOL: f64 = 1e-9;

/// One noise realization with the emitter state and the step propagators
/// on a common time mesh.
pub(crate) struct Trajectory {
    pub nodes: Vec<f64>,
    /// Propagator over `[nodes[k], nodes[k+1]]`.
    pub props: Vec<Mat4>,
    /// Emitter state at each node.
    pub rho: Vec<Vec4>,
    /// Accumulated laser phase at each node (rad).
    pub phase: Vec<f64>,
}

/// Base mesh `0, h, …` to `horizon`, merged with `extra` times.
pub(crate) fn build_mesh(horizon: f64, step: f64, extra: &[f64]) -> Vec<f64> {
    let n = (horizon / step).ceil() as usize;
    let mut t: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    t.extend_from_slice(extra);
    t.sort_by(f64::total_cmp);
    t.dedup_by(|a, b| (*a - *b).abs() <= NODE_TOL * b.abs().max(1.0));
    t
}

impl Trajectory {
    /// Piecewise-constant drive on each mesh interval: mean amplitude of the
    /// two end points and a detuning equal to the exact phase increment over
    /// the interval divided by its length.
    pub fn run(
        system: &TwoLevelSystem,
        field: &DrivingField,
        nodes: Vec<f64>,
        seed: u64,
        index: u64,
        with_state: bool,
    ) -> Result<Self> {
        let path = sample_path_with(&field.noise, &nodes, seed, index, PhaseIntegration::Exact)?;
        let dissipator = dissipator_part(&system.relaxation_ops());
        let mut props = Vec::new();
        let mut rho = Vec::new();
        if with_state {
            props.reserve(nodes.len().saturating_sub(1));
            let mean = Liouvillian(hamiltonian_part(field.hamiltonian().matrix()) + dissipator);
            let mut x = steady_state(&mean)?.to_vec();
            rho.reserve(nodes.len());
            rho.push(x);
            for k in 0..nodes.len() - 1 {
                let dt = nodes[k + 1] - nodes[k];
                let e_rel = 1.0 + 0.5 * (path.de_rel[k] + path.de_rel[k + 1]);
                let detuning = field.detuning + (path.phase[k + 1] - path.phase[k]) / dt;
                let h = OperatorMatrix::driven(field.rabi_mean * e_rel, detuning);
                let p = Liouvillian(hamiltonian_part(h.matrix()) + dissipator).exp(dt);
                x = p * x;
                if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                    return Err(crate::error::Error::Integration {
                        t: nodes[k + 1],
                        reason: "non-finite state".into(),
                    });
                }
                props.push(p);
                rho.push(x);
            }
        }
        Ok(Trajectory { nodes, props, rho, phase: path.phase })
    }

    pub fn index(&self, t: f64) -> Result<usize> {
        let tol = NODE_TOL * t.abs().max(1.0);
        let k = self.nodes.partition_point(|&x| x < t - tol);
        if k < self.nodes.len() && (self.nodes[k] - t).abs() <= tol {
            Ok(k)
        } else {
            Err(validation(format!("time {t} is not a node of the trajectory mesh")))
        }
    }

    /// Carries `x` from node `from` to node `to ≥ from`.
    pub fn advance(&self, mut x: Vec4, from: usize, to: usize) -> Vec4 {
        for p in &self.props[from..to] {
            x = p * x;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_merges_requested_times() {
        let m = build_mesh(1.0, 0.25, &[0.5, 0.6, 0.5 + 1e-13]);
        assert_eq!(m, vec![0.0, 0.25, 0.5, 0.6, 0.75, 1.0]);
    }
}
