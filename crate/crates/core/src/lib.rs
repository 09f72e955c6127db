//! Cucker-Smale flocking at three scales: the N-agent ODE system, a
//! weighted-sample mean-field solver, and hydrodynamic moments deposited
//! from the kinetic ensemble, together with the decay envelopes each scale
//! is checked against.

pub mod diagnostics;
pub mod error;
pub mod fastmath;
pub mod harness;
pub mod hydro;
pub mod io;
pub mod kernels;
pub mod kinetic;
pub mod pairwise;
pub mod particle;
pub mod quadrature;

mod integrate;

pub use error::{FlockError, Result};
pub use kernels::{InteractionKernel, Kernel};
pub use particle::{ParticleState, SimConfig};
