//! Resonance fluorescence of a two-level emitter under a noisy cw drive:
//! correlation functions, Hong-Ou-Mandel interferograms and the coalescence
//! time window.

pub mod averaging;
pub mod dynamics;
pub mod error;
pub mod figures;
pub mod hom;
pub mod io;
pub mod montecarlo;
pub mod noise;
pub mod qcore;
pub mod series;

pub use error::{Error, Result};
pub use qcore::{
    build_liouvillian, evolve_timedep, propagate, steady_state, CollapseOperator, DensityState,
    Liouvillian, OdeOptions, OperatorMatrix, C64,
};
