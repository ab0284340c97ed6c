//! Scrambling, chaos, thermalization and entanglement diagnostics for the
//! Dicke model: exact dynamics, multiple-quantum intensities, mean-field
//! Lyapunov analysis, truncated-Wigner ensembles and spectral statistics.

pub mod classical;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod model;
pub mod mqc;
pub mod propagate;
pub mod runner;
pub mod spectrum;
pub mod twa;

pub use error::{Error, Result};
