//! Geometric Langevin Algorithm: exact Ornstein–Uhlenbeck momentum refresh
//! composed with a symplectic integrator, plus the tools to measure its
//! sampling error.

pub mod analysis;
pub mod error;
pub mod gla;
pub mod integrators;
pub mod model;
pub mod noise;
pub mod ou;

pub use analysis::{GaussianMeasure, MomentEstimate};
pub use error::{GlaError, Result};
pub use gla::{ChainConfig, ChainResult, Kernel, Observable, SplittingMethod};
pub use integrators::{IntegratorScheme, SplittingCoefficients, Stepper};
pub use model::{DoubleWell, Harmonic, HamiltonianSystem, MassMatrix, PhaseState, Polynomial, Potential};
pub use noise::NoiseStream;
pub use ou::{build_ou_operator, OUOperator};
