//! Numerical laboratory for two-phase free-boundary minimizers with a
//! logarithmic nonlinearity on the unit disk.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod harmonic;
pub mod moduli;
pub mod numeric;
pub mod radial;
pub mod scaling;
pub mod solver;

pub use error::{Error, Result};
