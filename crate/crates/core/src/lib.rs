//! Spectral laboratory for Cahn-Hilliard relaxation towards planar kinks on
//! the strip `Q^(d-1) x R`.

pub mod checkpoint;
pub mod config;
pub mod duhamel;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod kink;
pub mod rates;
pub mod sampling;
pub mod thresholds;

pub use error::{Error, Result};
