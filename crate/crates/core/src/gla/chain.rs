use std::fmt;

use rayon::prelude::*;

use super::{with_workers, Kernel, SplittingMethod};
use crate::analysis::stats::{BatchAccumulator, MomentEstimate};
use crate::error::{GlaError, Result};
use crate::model::{HamiltonianSystem, PhaseState};
use crate::noise::NoiseStream;
use crate::ou::OUOperator;

/// A chain diverges once `|x|` exceeds this or any component is non-finite.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// Scalar functions of the state averaged along a chain.
#[derive(Clone, Copy)]
pub enum Observable {
    /// `|q|²`
    PositionSquared,
    /// `|p|²`
    MomentumSquared,
    /// `q·p`
    PositionMomentum,
    /// `Σ q_i⁴`
    PositionFourth,
    /// `|q|`
    AbsPosition,
    Custom { name: &'static str, f: fn(&PhaseState) -> f64 },
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PartialEq for Observable {
    fn eq(&self, other: &Self) -> bool {
        self.name() == other.name()
    }
}

impl Observable {
    pub fn name(&self) -> &'static str {
        match self {
            Self::PositionSquared => "q2",
            Self::MomentumSquared => "p2",
            Self::PositionMomentum => "qp",
            Self::PositionFourth => "q4",
            Self::AbsPosition => "absq",
            Self::Custom { name, .. } => name,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "q2" => Ok(Self::PositionSquared),
            "p2" => Ok(Self::MomentumSquared),
            "qp" => Ok(Self::PositionMomentum),
            "q4" => Ok(Self::PositionFourth),
            "absq" => Ok(Self::AbsPosition),
            other => Err(GlaError::invalid(format!("unknown observable '{other}'"))),
        }
    }

    #[inline]
    pub fn eval(&self, x: &PhaseState) -> f64 {
        match self {
            Self::PositionSquared => x.q.iter().map(|v| v * v).sum(),
            Self::MomentumSquared => x.p.iter().map(|v| v * v).sum(),
            Self::PositionMomentum => x.q.iter().zip(&x.p).map(|(a, b)| a * b).sum(),
            Self::PositionFourth => x.q.iter().map(|v| v * v * v * v).sum(),
            Self::AbsPosition => x.q.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Self::Custom { f, .. } => f(x),
        }
    }
}

/// Length, burn-in and batching of a single chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    /// Total number of steps, including burn-in.
    pub steps: u64,
    pub burn_in: u64,
    pub batches: usize,
}

impl ChainConfig {
    pub const DEFAULT_BATCHES: usize = 64;
    pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

    /// `steps` total with 10% burn-in and 64 batches.
    pub fn with_defaults(steps: u64) -> Self {
        Self::with_burn_in_fraction(steps, Self::DEFAULT_BURN_IN_FRACTION, Self::DEFAULT_BATCHES)
    }

    pub fn with_burn_in_fraction(steps: u64, fraction: f64, batches: usize) -> Self {
        let burn_in = (steps as f64 * fraction).floor() as u64;
        Self { steps, burn_in, batches }
    }

    pub fn samples(&self) -> u64 {
        self.steps.saturating_sub(self.burn_in)
    }
}

/// Outcome of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub final_state: PhaseState,
    pub observables: Vec<Observable>,
    /// One entry per observable; `None` when the estimate is invalid
    /// (divergence or too few samples).
    pub estimates: Vec<Option<MomentEstimate>>,
    /// Step index (1-based) at which the chain left the finite region.
    pub diverged_at: Option<u64>,
    pub steps_completed: u64,
    pub chain: u32,
}

impl ChainResult {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn estimate(&self, observable: Observable) -> Option<MomentEstimate> {
        let i = self.observables.iter().position(|o| *o == observable)?;
        self.estimates[i]
    }
}

#[inline]
pub(super) fn out_of_bounds(x: &PhaseState) -> bool {
    let norm2: f64 = x.q.iter().chain(&x.p).map(|v| v * v).sum();
    norm2.is_nan() || norm2 > DIVERGENCE_THRESHOLD * DIVERGENCE_THRESHOLD
}

/// Iterates the splitting from `x0` and time-averages `observables` over
/// the post-burn-in states. Divergence is recorded in the result.
pub fn run_chain(
    method: &SplittingMethod,
    sys: &HamiltonianSystem,
    ou_op: &OUOperator,
    x0: &PhaseState,
    config: ChainConfig,
    observables: &[Observable],
    stream: NoiseStream,
) -> Result<ChainResult> {
    run_chain_observed(method, sys, ou_op, x0, config, observables, stream, |_, _| {})
}

/// [`run_chain`] with a callback receiving `(step, state)` after every step.
#[allow(clippy::too_many_arguments)]
pub fn run_chain_observed(
    method: &SplittingMethod,
    sys: &HamiltonianSystem,
    ou_op: &OUOperator,
    x0: &PhaseState,
    config: ChainConfig,
    observables: &[Observable],
    stream: NoiseStream,
    mut on_step: impl FnMut(u64, &PhaseState),
) -> Result<ChainResult> {
    // burn_in == steps is accepted and yields invalid (empty) estimates.
    if config.burn_in > config.steps {
        return Err(GlaError::invalid("burn-in exceeds chain length"));
    }
    sys.check_state(x0)?;
    if !x0.is_finite() {
        return Err(GlaError::NonFiniteState { step: Some(0) });
    }
    let mut kernel = Kernel::new(method, sys, ou_op)?;
    let mut cursor = stream.cursor();
    let mut x = x0.clone();
    let samples = config.samples();
    let mut accumulators: Vec<BatchAccumulator> =
        observables.iter().map(|_| BatchAccumulator::new(samples, config.batches)).collect();

    let mut diverged_at = None;
    let mut completed = 0;
    for step in 1..=config.steps {
        kernel.step(&mut x, &mut cursor);
        completed = step;
        if out_of_bounds(&x) {
            diverged_at = Some(step);
            break;
        }
        on_step(step, &x);
        if step > config.burn_in {
            for (acc, obs) in accumulators.iter_mut().zip(observables) {
                acc.push(obs.eval(&x));
            }
        }
    }

    let estimates = if diverged_at.is_some() {
        vec![None; observables.len()]
    } else {
        accumulators.iter().map(|a| a.finish().ok()).collect()
    };
    Ok(ChainResult {
        final_state: x,
        observables: observables.to_vec(),
        estimates,
        diverged_at,
        steps_completed: completed,
        chain: stream.chain(),
    })
}

/// Runs `chains` independent chains (stream `(seed, i)` for chain `i`) on
/// `workers` threads. Results come back in chain order regardless of
/// scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_chains(
    method: &SplittingMethod,
    sys: &HamiltonianSystem,
    ou_op: &OUOperator,
    x0: &PhaseState,
    config: ChainConfig,
    observables: &[Observable],
    seed: u64,
    chains: u32,
    workers: usize,
) -> Result<Vec<ChainResult>> {
    with_workers(workers, || {
        (0..chains)
            .into_par_iter()
            .map(|c| {
                run_chain(method, sys, ou_op, x0, config, observables, NoiseStream::new(seed, c))
            })
            .collect::<Result<Vec<_>>>()
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::IntegratorScheme;
    use crate::model::MassMatrix;
    use crate::ou::build_ou_operator;

    fn verlet() -> SplittingMethod {
        SplittingMethod::Gla(IntegratorScheme::StormerVerlet)
    }

    #[test]
    fn empty_average_is_invalid() {
        let sys = HamiltonianSystem::harmonic(1);
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.4).unwrap();
        let cfg = ChainConfig { steps: 100, burn_in: 100, batches: 4 };
        let res = run_chain(&verlet(), &sys, &op, &PhaseState::zeros(1), cfg, &[Observable::PositionSquared], NoiseStream::new(1, 0))
            .unwrap();
        assert_eq!(res.estimates, vec![None]);
        assert!(!res.diverged());
        assert_eq!(res.steps_completed, 100);
    }

    #[test]
    fn runs_are_deterministic() {
        let sys = HamiltonianSystem::double_well();
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.1).unwrap();
        let cfg = ChainConfig::with_defaults(20_000);
        let obs = [Observable::PositionSquared, Observable::MomentumSquared];
        let run = || run_chain(&verlet(), &sys, &op, &PhaseState::scalar(1.0, 0.0), cfg, &obs, NoiseStream::new(3, 1)).unwrap();
        assert_eq!(run(), run());
    }

    #[test]
    fn chain_uses_stream_in_step_order() {
        // Replaying the stream by index reproduces the driver.
        let sys = HamiltonianSystem::double_well();
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.1).unwrap();
        let stream = NoiseStream::new(8, 2);
        let cfg = ChainConfig { steps: 50, burn_in: 0, batches: 2 };
        let res = run_chain(&verlet(), &sys, &op, &PhaseState::scalar(0.5, 0.0), cfg, &[], stream).unwrap();
        let mut x = PhaseState::scalar(0.5, 0.0);
        for k in 0..50 {
            x = super::super::gla_step(&IntegratorScheme::StormerVerlet, &sys, &op, &x, &[stream.normal(k)]).unwrap();
        }
        assert_eq!(res.final_state, x);
    }

    #[test]
    fn divergence_is_recorded_not_thrown() {
        // Euler on the quartic well with a large step and hot start blows up.
        let sys = HamiltonianSystem::double_well();
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 1.0).unwrap();
        let cfg = ChainConfig::with_defaults(1000);
        let res = run_chain(
            &SplittingMethod::Gla(IntegratorScheme::SymplecticEuler),
            &sys,
            &op,
            &PhaseState::scalar(5.0, 5.0),
            cfg,
            &[Observable::PositionSquared],
            NoiseStream::new(1, 0),
        )
        .unwrap();
        assert!(res.diverged());
        assert_eq!(res.estimates, vec![None]);
        assert!(res.steps_completed < 1000);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sys = HamiltonianSystem::double_well();
        let op = build_ou_operator(1.0, 2.0, &MassMatrix::identity(1), 0.2).unwrap();
        let cfg = ChainConfig::with_defaults(5_000);
        let obs = [Observable::PositionSquared];
        let a = run_chains(&verlet(), &sys, &op, &PhaseState::zeros(1), cfg, &obs, 17, 6, 1).unwrap();
        let b = run_chains(&verlet(), &sys, &op, &PhaseState::zeros(1), cfg, &obs, 17, 6, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.chain).collect::<Vec<_>>(), (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn observables() {
        let x = PhaseState::new(vec![1.0, -2.0], vec![0.5, 3.0]).unwrap();
        assert_eq!(Observable::PositionSquared.eval(&x), 5.0);
        assert_eq!(Observable::MomentumSquared.eval(&x), 9.25);
        assert_eq!(Observable::PositionMomentum.eval(&x), -5.5);
        assert_eq!(Observable::PositionFourth.eval(&x), 17.0);
        assert_eq!(Observable::from_name("qp").unwrap(), Observable::PositionMomentum);
        let custom = Observable::Custom { name: "p0", f: |x| x.p[0] };
        assert_eq!(custom.eval(&x), 0.5);
    }
}
