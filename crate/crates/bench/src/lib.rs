//! Benchmark fixtures shared by the criterion targets.

use gla_core::gla::SplittingMethod;
use gla_core::integrators::IntegratorScheme;

/// The splittings worth timing: the three shipped schemes and the exact one.
pub fn methods() -> Vec<SplittingMethod> {
    IntegratorScheme::shipped().into_iter().map(SplittingMethod::Gla).chain([SplittingMethod::ExactHarmonic]).collect()
}
