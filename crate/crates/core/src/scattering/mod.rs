//! Scattering states of the Lippmann-Schwinger equation in R^3.

pub mod kernel;
pub mod operator;
pub mod state;

pub use kernel::{KernelKind, TruncatedConvolver};
pub use operator::{apply_q, neumann_sum, neumann_terms_needed, plane_wave, sup_norm, LsOperator, NeumannOutcome, QuadratureMode};
pub use state::{grad_scattering_state, scattering_state, scattering_state_with, GradState, ScatteringState};
