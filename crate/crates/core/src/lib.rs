//! Lévy-driven Ornstein–Uhlenbeck processes `dX = −QX dt + √ε dξ`: transition
//! and invariant laws through their characteristic functions, exact and
//! Euler samplers, total-variation distances, and numerical verification of
//! cut-off times, windows and profile functions.

pub mod char_engine;
pub mod cutoff_lab;
pub mod ensembles;
pub mod error;
pub mod levy_models;
pub mod matrix_dynamics;
pub mod quadrature;
pub mod report;
pub mod sampler;
pub mod stats;
pub mod tv_metrics;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
