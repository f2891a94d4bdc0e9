//! Convergence-order studies: Monte Carlo time averages against a reference
//! value, exact linear-oscillator errors, and local/global integrator errors.

use rayon::prelude::*;

use super::linear::{moment_error, stationary_covariance, GaussianMeasure};
use super::quadrature::gaussian_tv_quadrature;
use super::stats::{pool_estimates, MomentEstimate};
use crate::error::{require_positive, GlaError, Result};
use crate::gla::{run_chain, with_workers, ChainConfig, Observable, SplittingMethod};
use crate::integrators::{exact_harmonic_flow, variational_step, IntegratorScheme, Stepper};
use crate::model::{HamiltonianSystem, PhaseState};
use crate::noise::NoiseStream;
use crate::ou::build_ou_operator;

/// Observed order between a row and its predecessor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObservedOrder {
    /// Coarsest row: nothing to compare against.
    First,
    Value(f64),
    /// One of the two errors is within three standard errors of zero.
    StatisticalFloor,
    /// A level produced no valid estimate.
    Unavailable,
}

impl ObservedOrder {
    pub fn value(&self) -> Option<f64> {
        match self {
            Self::Value(v) => Some(*v),
            _ => None,
        }
    }
}

/// Multiple of the standard error an error must exceed to count as resolved.
pub const FLOOR_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h: f64,
    /// Total steps over all chains at this level.
    pub steps: u64,
    pub estimate: Option<MomentEstimate>,
    /// `|estimate − reference|`; NaN without a valid estimate.
    pub error: f64,
    pub stderr: f64,
    pub order: ObservedOrder,
    pub diverged_chains: u32,
    /// `(chain, step)` of the lowest-indexed diverged chain.
    pub first_divergence: Option<(u32, u64)>,
}

impl ConvergenceRow {
    pub fn resolved(&self) -> bool {
        self.error.is_finite() && self.error > FLOOR_FACTOR * self.stderr
    }
}

#[derive(Debug, Clone)]
pub struct ConvergenceConfig {
    pub gamma: f64,
    pub beta: f64,
    pub h0: f64,
    /// Total steps at `h0`; doubled at every halving of `h`.
    pub n0: u64,
    pub levels: usize,
    /// Each level's steps are split evenly over this many chains.
    pub chains: u32,
    pub burn_in_fraction: f64,
    pub batches: usize,
    pub x0: PhaseState,
    pub observable: Observable,
    pub reference: f64,
    pub workers: usize,
}

/// Chain index of chain `c` at level `level`; keeps every stream distinct.
pub fn study_chain_index(level: usize, c: u32) -> u32 {
    ((level as u32) << 16) | c
}

/// Time-average errors at `h0, h0/2, …` with `n0, 2n0, …` steps.
pub fn convergence_study(
    method: &SplittingMethod,
    sys: &HamiltonianSystem,
    config: &ConvergenceConfig,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    require_positive("h0", config.h0)?;
    if config.levels == 0 || config.levels > 32 {
        return Err(GlaError::invalid("levels must lie in 1..=32"));
    }
    if config.chains == 0 || config.chains > 1 << 16 {
        return Err(GlaError::invalid("chains must lie in 1..=65536"));
    }
    if !(0.0..1.0).contains(&config.burn_in_fraction) {
        return Err(GlaError::invalid("burn-in fraction must lie in [0, 1)"));
    }
    if !config.reference.is_finite() {
        return Err(GlaError::invalid("reference value must be finite"));
    }
    let ops = (0..config.levels)
        .map(|l| build_ou_operator(config.gamma, config.beta, sys.mass(), config.h0 / (1u64 << l) as f64))
        .collect::<Result<Vec<_>>>()?;
    let per_chain = |l: usize| (config.n0 << l) / u64::from(config.chains);
    if per_chain(0) == 0 {
        return Err(GlaError::invalid("fewer steps than chains"));
    }

    // Longest tasks first so the pool stays busy to the end.
    let mut tasks: Vec<(usize, u32)> =
        (0..config.levels).rev().flat_map(|l| (0..config.chains).map(move |c| (l, c))).collect();
    tasks.sort_by_key(|&(l, c)| (std::cmp::Reverse(l), c));
    let results = with_workers(config.workers, || {
        tasks
            .par_iter()
            .map(|&(l, c)| {
                let cfg = ChainConfig::with_burn_in_fraction(per_chain(l), config.burn_in_fraction, config.batches);
                let stream = NoiseStream::new(seed, study_chain_index(l, c));
                run_chain(method, sys, &ops[l], &config.x0, cfg, &[config.observable], stream)
                    .map(|r| (l, c, r))
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(config.levels);
    for (l, op) in ops.iter().enumerate() {
        let mut level: Vec<_> = results.iter().filter(|(rl, _, _)| *rl == l).collect();
        level.sort_by_key(|(_, c, _)| *c);
        let diverged = level.iter().filter(|(_, _, r)| r.diverged()).count() as u32;
        let first_divergence = level.iter().find_map(|(_, c, r)| r.diverged_at.map(|s| (*c, s)));
        let parts: Vec<MomentEstimate> = level.iter().filter_map(|(_, _, r)| r.estimates[0]).collect();
        let estimate = if diverged == 0 && parts.len() == level.len() { pool_estimates(&parts) } else { None };
        let (error, stderr) = match estimate {
            Some(e) => ((e.mean - config.reference).abs(), e.stderr),
            None => (f64::NAN, f64::NAN),
        };
        let mut row = ConvergenceRow {
            h: op.step_size(),
            steps: per_chain(l) * u64::from(config.chains),
            estimate,
            error,
            stderr,
            order: ObservedOrder::First,
            diverged_chains: diverged,
            first_divergence,
        };
        if let Some(prev) = rows.last() {
            row.order = pair_order(prev, &row);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn pair_order(coarse: &ConvergenceRow, fine: &ConvergenceRow) -> ObservedOrder {
    if !(coarse.error.is_finite() && fine.error.is_finite()) {
        ObservedOrder::Unavailable
    } else if coarse.resolved() && fine.resolved() {
        ObservedOrder::Value((coarse.error / fine.error).log2() / (coarse.h / fine.h).log2())
    } else {
        ObservedOrder::StatisticalFloor
    }
}

/// Least-squares slope of `log error` against `log h` over the leading run of
/// resolved rows. `None` when fewer than two rows are resolved.
pub fn fitted_order(rows: &[ConvergenceRow]) -> Option<f64> {
    let run: Vec<(f64, f64)> =
        rows.iter().take_while(|r| r.resolved()).map(|r| (r.h, r.error)).collect();
    if run.len() < 2 {
        return None;
    }
    let (hs, errs): (Vec<f64>, Vec<f64>) = run.into_iter().unzip();
    Some(loglog_slope(&hs, &errs))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `log2(v_k / v_{k+1})` for a sequence computed at dyadic step sizes.
pub fn log2_slopes(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Exact stationary errors of a splitting on the unit oscillator at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub h: f64,
    pub sigma_q2: f64,
    pub sigma_p2: f64,
    pub kappa: f64,
    /// `|σ_q² − 1/β| + |σ_p² − 1/β| + |κ|`.
    pub moment_error: f64,
    /// Total variation to the Gibbs law `N(0, β⁻¹I)`.
    pub tv: f64,
}

/// Noise-free error curve on the linear oscillator from the stationary
/// covariance of each step size.
pub fn linear_convergence_study(
    method: &SplittingMethod,
    steps: &[f64],
    gamma: f64,
    beta: f64,
) -> Result<Vec<LinearRow>> {
    let gibbs = GaussianMeasure::oscillator_gibbs(beta)?;
    steps
        .iter()
        .map(|&h| {
            let sigma = stationary_covariance(method, h, gamma, beta)?;
            let tv = gaussian_tv_quadrature(&GaussianMeasure::centered(sigma)?, &gibbs)?;
            Ok(LinearRow {
                h,
                sigma_q2: sigma[(0, 0)],
                sigma_p2: sigma[(1, 1)],
                kappa: sigma[(0, 1)],
                moment_error: moment_error(&sigma, beta),
                tv,
            })
        })
        .collect()
}

/// One-step error of a scheme on a harmonic system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalErrorRow {
    pub h: f64,
    /// `|H(θ_h x) − H(x)|`.
    pub energy_error: f64,
    /// `|θ_h x − φ_h x|` against the exact flow.
    pub state_error: f64,
}

pub fn local_error_curve(
    scheme: &IntegratorScheme,
    sys: &HamiltonianSystem,
    steps: &[f64],
    x: &PhaseState,
) -> Result<Vec<LocalErrorRow>> {
    let omega = sys
        .harmonic_frequency()
        .ok_or_else(|| GlaError::Unsupported("local errors need a harmonic system".into()))?;
    let h0 = sys.hamiltonian_energy(x)?;
    steps
        .iter()
        .map(|&h| {
            let y = variational_step(scheme, sys, h, x)?;
            let exact = exact_harmonic_flow(h, x, omega)?;
            Ok(LocalErrorRow {
                h,
                energy_error: (sys.hamiltonian_energy(&y)? - h0).abs(),
                state_error: distance(&y, &exact),
            })
        })
        .collect()
}

/// `|Θ_h^{T/h} x − φ_T x|` at each step, against the exact harmonic flow.
pub fn global_error_curve(
    scheme: &IntegratorScheme,
    sys: &HamiltonianSystem,
    steps: &[f64],
    horizon: f64,
    x: &PhaseState,
) -> Result<Vec<(f64, f64)>> {
    let omega = sys
        .harmonic_frequency()
        .ok_or_else(|| GlaError::Unsupported("global errors need a harmonic system".into()))?;
    let exact = exact_harmonic_flow(horizon, x, omega)?;
    steps
        .iter()
        .map(|&h| {
            let n = (horizon / h).round();
            if (n * h - horizon).abs() > 1e-9 * horizon || n < 1.0 {
                return Err(GlaError::invalid(format!("horizon {horizon} is not a multiple of h = {h}")));
            }
            let mut stepper = Stepper::new(scheme, sys, h)?;
            let mut y = x.clone();
            for _ in 0..n as u64 {
                stepper.advance(&mut y);
            }
            Ok((h, distance(&y, &exact)))
        })
        .collect()
}

fn distance(a: &PhaseState, b: &PhaseState) -> f64 {
    let qa = a.q.iter().zip(&b.q).map(|(x, y)| (x - y).powi(2));
    let pa = a.p.iter().zip(&b.p).map(|(x, y)| (x - y).powi(2));
    qa.chain(pa).sum::<f64>().sqrt()
}
