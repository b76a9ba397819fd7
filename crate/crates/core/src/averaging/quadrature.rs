use crate::error::{validation, Result};
use gauss_quad::GaussHermite;
use std::num::NonZeroUsize;

/// Gauss-Hermite rule for a standard normal variable.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl NormalRule {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 {
            return Err(validation(format!("quadrature order must be at least 2, got {order}")));
        }
        let rule = GaussHermite::new(NonZeroUsize::new(order).expect("order >= 2"));
        let norm = std::f64::consts::PI.sqrt();
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (std::f64::consts::SQRT_2 * x, w / norm))
            .unzip();
        Ok(NormalRule { nodes, weights })
    }

    /// A single node at zero, for axes carrying no variance.
    pub fn degenerate() -> Self {
        NormalRule { nodes: vec![0.0], weights: vec![1.0] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}
