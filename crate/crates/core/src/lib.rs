//! Scattering states, generalized Fourier transforms and solvability checks
//! for Schrödinger-type equations whose operators fail the Fredholm property.

pub mod error;
pub mod fft;
pub mod grid;
pub mod quadrature;

pub use error::{Error, Result};
pub use num_complex::Complex64;
pub mod potential;
pub mod source;
pub mod scattering;
pub mod genfourier;
pub mod helmholtz;
pub mod channel;
pub mod separable;
pub mod io;
pub mod config;
pub mod cli;
