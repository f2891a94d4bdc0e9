//! The geometric Langevin chain `X_{k+1} = θ_h ∘ ψ_h (X_k)`: an exact OU
//! momentum refresh followed by a symplectic step.

mod chain;
mod refine;

pub use chain::{
    run_chain, run_chain_observed, run_chains, ChainConfig, ChainResult, Observable,
    DIVERGENCE_THRESHOLD,
};
pub use refine::{
    refine_noise, strong_error_experiment, RefinableNoise, StrongErrorConfig, StrongErrorReport,
    StrongErrorRow,
};

use crate::error::{GlaError, Result};
use crate::integrators::{rotate_harmonic, IntegratorScheme, Stepper};
use crate::model::{HamiltonianSystem, PhaseState};
use crate::noise::NormalCursor;
use crate::ou::{ou_step, OUOperator};

/// Deterministic factor of a Langevin splitting.
#[derive(Debug, Clone, PartialEq)]
pub enum SplittingMethod {
    /// GLA: a symplectic integrator after the OU step.
    Gla(IntegratorScheme),
    /// Exact splitting for harmonic systems: the exact rotation after the OU
    /// step.
    ExactHarmonic,
}

impl SplittingMethod {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "exact" | "exact-splitting" => Ok(Self::ExactHarmonic),
            other => IntegratorScheme::from_name(other).map(Self::Gla),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gla(s) => s.name(),
            Self::ExactHarmonic => "exact",
        }
    }
}

impl From<IntegratorScheme> for SplittingMethod {
    fn from(s: IntegratorScheme) -> Self {
        Self::Gla(s)
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Propagator {
    Variational(Stepper),
    Harmonic { omega: f64, sin: f64, cos: f64 },
}

/// Per-chain workspace that applies one splitting step in place.
#[derive(Debug, Clone)]
pub struct Kernel {
    propagator: Propagator,
    ou: OUOperator,
    xi: Vec<f64>,
    scratch: Vec<f64>,
}

impl Kernel {
    pub fn new(method: &SplittingMethod, sys: &HamiltonianSystem, ou: &OUOperator) -> Result<Self> {
        GlaError::check_dim(sys.dim(), ou.dim())?;
        let h = ou.step_size();
        let propagator = match method {
            SplittingMethod::Gla(scheme) => Propagator::Variational(Stepper::new(scheme, sys, h)?),
            SplittingMethod::ExactHarmonic => {
                let omega = sys.harmonic_frequency().ok_or_else(|| {
                    GlaError::Unsupported(
                        "exact splitting needs a harmonic potential with scalar mass".into(),
                    )
                })?;
                let (sin, cos) = (omega * h).sin_cos();
                Propagator::Harmonic { omega, sin, cos }
            }
        };
        let n = sys.dim();
        Ok(Self { propagator, ou: ou.clone(), xi: vec![0.0; n], scratch: vec![0.0; n] })
    }

    pub fn ou(&self) -> &OUOperator {
        &self.ou
    }

    #[inline]
    fn propagate(&mut self, x: &mut PhaseState) {
        match &mut self.propagator {
            Propagator::Variational(stepper) => stepper.advance(x),
            Propagator::Harmonic { omega, sin, cos } => {
                rotate_harmonic(x, *omega, *sin, *cos)
            }
        }
    }

    /// One step with standard normals drawn from `cursor`.
    #[inline]
    pub fn step(&mut self, x: &mut PhaseState, cursor: &mut NormalCursor) {
        cursor.fill(&mut self.xi);
        self.ou.apply_noise(&mut x.p, &self.xi, &mut self.scratch);
        self.propagate(x);
    }

    /// One step with explicit standard normals `xi`.
    pub fn step_with(&mut self, x: &mut PhaseState, xi: &[f64]) {
        self.ou.apply_noise(&mut x.p, xi, &mut self.scratch);
        self.propagate(x);
    }

    /// One step with a pre-correlated OU increment `eta` in place of `A_h ξ`.
    pub fn step_with_increment(&mut self, x: &mut PhaseState, eta: &[f64]) {
        self.ou.apply_increment(&mut x.p, eta, &mut self.scratch);
        self.propagate(x);
    }

    /// Forget cached forces after an external change of `q`.
    pub fn reset(&mut self) {
        if let Propagator::Variational(s) = &mut self.propagator {
            s.invalidate();
        }
    }
}

/// `θ_h(ψ_h(x, ξ))` with `h` taken from the OU operator.
pub fn gla_step(
    scheme: &IntegratorScheme,
    sys: &HamiltonianSystem,
    ou_op: &OUOperator,
    x: &PhaseState,
    xi: &[f64],
) -> Result<PhaseState> {
    sys.check_state(x)?;
    GlaError::check_dim(sys.dim(), xi.len())?;
    if !x.is_finite() {
        return Err(GlaError::NonFiniteState { step: Some(0) });
    }
    let mut kernel = Kernel::new(&SplittingMethod::Gla(scheme.clone()), sys, ou_op)?;
    let mut out = x.clone();
    kernel.step_with(&mut out, xi);
    if !out.is_finite() {
        return Err(GlaError::NonFiniteState { step: Some(1) });
    }
    Ok(out)
}

/// Exact splitting for `U = ½|q|²`, `M = I/ω²`: the harmonic rotation applied
/// after `ψ_h`.
pub fn exact_splitting_step_linear(
    ou_op: &OUOperator,
    omega: f64,
    x: &PhaseState,
    xi: &[f64],
) -> Result<PhaseState> {
    let refreshed = ou_step(ou_op, x, xi)?;
    let out = crate::integrators::exact_harmonic_flow(ou_op.step_size(), &refreshed, omega)?;
    if !out.is_finite() {
        return Err(GlaError::NonFiniteState { step: Some(1) });
    }
    Ok(out)
}

/// Runs `f` on a dedicated pool with `workers` threads (0 = all cores).
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| GlaError::Numeric(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::variational_step;
    use crate::model::MassMatrix;
    use crate::noise::NoiseStream;
    use crate::ou::build_ou_operator;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn noiseless_verlet_step() {
        let sys = HamiltonianSystem::harmonic(1);
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.4).unwrap();
        let out = gla_step(&IntegratorScheme::StormerVerlet, &sys, &op, &PhaseState::scalar(1.0, 0.0), &[0.0])
            .unwrap();
        assert_abs_diff_eq!(out.q[0], 0.92, epsilon = 1e-15);
        assert_abs_diff_eq!(out.p[0], -0.384, epsilon = 1e-15);
    }

    #[test]
    fn vanishing_friction_reduces_to_the_symplectic_step() {
        let sys = HamiltonianSystem::double_well();
        let op = build_ou_operator(1e-12, 2.0, &MassMatrix::identity(1), 0.1).unwrap();
        let x = PhaseState::scalar(0.6, -0.9);
        for scheme in IntegratorScheme::shipped() {
            let a = gla_step(&scheme, &sys, &op, &x, &[0.0]).unwrap();
            let b = variational_step(&scheme, &sys, 0.1, &x).unwrap();
            assert_abs_diff_eq!(a.q[0], b.q[0], epsilon = 1e-9);
            assert_abs_diff_eq!(a.p[0], b.p[0], epsilon = 1e-9);
        }
    }

    /// Straight-line transcription of the noisy Störmer–Verlet update.
    fn literal_verlet(q: f64, p: f64, xi: f64, h: f64, decay: f64, amplitude: f64) -> (f64, f64) {
        let du = |q: f64| q * q * q - q;
        let p_hat = decay * p + amplitude * xi;
        let p_half = p_hat - h / 2.0 * du(q);
        let q1 = q + h * p_half;
        let p1 = p_half - h / 2.0 * du(q1);
        (q1, p1)
    }

    #[test]
    fn noisy_verlet_matches_literal_formula_bitwise() {
        let (gamma, beta, h) = (1.0, 2.0, 0.1);
        let sys = HamiltonianSystem::double_well();
        let op = build_ou_operator(gamma, beta, &MassMatrix::identity(1), h).unwrap();
        let decay = op.decay_matrix()[(0, 0)];
        let amplitude = op.chol_matrix()[(0, 0)];
        // Amplitude agrees with √((1 − e^{−2γh})/β) up to rounding.
        let literal_amp = ((1.0 - (-2.0 * gamma * h).exp()) / beta).sqrt();
        assert!((amplitude - literal_amp).abs() <= 4.0 * f64::EPSILON * literal_amp);
        assert_eq!(decay, (-gamma * h).exp());
        let noise = NoiseStream::new(99, 0);
        for i in 0..100u64 {
            let q = 3.0 * noise.normal(3 * i);
            let p = 3.0 * noise.normal(3 * i + 1);
            let xi = noise.normal(3 * i + 2);
            let out = gla_step(&IntegratorScheme::StormerVerlet, &sys, &op, &PhaseState::scalar(q, p), &[xi])
                .unwrap();
            let (q1, p1) = literal_verlet(q, p, xi, h, decay, amplitude);
            assert_eq!(out.q[0].to_bits(), q1.to_bits());
            assert_eq!(out.p[0].to_bits(), p1.to_bits());
        }
    }

    #[test]
    fn ou_factor_never_moves_positions() {
        let sys = HamiltonianSystem::harmonic(1);
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.2).unwrap();
        let x = PhaseState::scalar(0.4, 1.0);
        let refreshed = ou_step(&op, &x, &[0.7]).unwrap();
        assert_eq!(refreshed.q, x.q);
        let full = gla_step(&IntegratorScheme::SymplecticEuler, &sys, &op, &x, &[0.7]).unwrap();
        assert_eq!(full.q[0], x.q[0] + 0.2 * refreshed.p[0]);
    }

    #[test]
    fn exact_splitting_rotates_decayed_momentum() {
        let gamma = 3.0;
        let op = build_ou_operator(gamma, 2.0, &MassMatrix::identity(1), FRAC_PI_2).unwrap();
        let out = exact_splitting_step_linear(&op, 1.0, &PhaseState::scalar(0.0, 1.5), &[0.0]).unwrap();
        assert_abs_diff_eq!(out.q[0], (-gamma * FRAC_PI_2).exp() * 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(out.p[0], 0.0, epsilon = 1e-15);

        let sys = HamiltonianSystem::harmonic(1);
        let mut kernel = Kernel::new(&SplittingMethod::ExactHarmonic, &sys, &op).unwrap();
        let mut x = PhaseState::scalar(0.3, -0.2);
        let expected = exact_splitting_step_linear(&op, 1.0, &x, &[0.4]).unwrap();
        kernel.step_with(&mut x, &[0.4]);
        assert_abs_diff_eq!(x.q[0], expected.q[0], epsilon = 1e-15);
        assert_abs_diff_eq!(x.p[0], expected.p[0], epsilon = 1e-15);
    }

    #[test]
    fn exact_splitting_requires_harmonic_system() {
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.1).unwrap();
        let err = Kernel::new(&SplittingMethod::ExactHarmonic, &HamiltonianSystem::double_well(), &op);
        assert!(matches!(err, Err(GlaError::Unsupported(_))));
    }

    #[test]
    fn method_names() {
        assert_eq!(SplittingMethod::from_name("exact").unwrap(), SplittingMethod::ExactHarmonic);
        assert_eq!(
            SplittingMethod::from_name("neri4").unwrap(),
            SplittingMethod::Gla(IntegratorScheme::Neri4)
        );
        assert!(SplittingMethod::from_name("bogus").is_err());
    }
}
