//! Dyadically refinable OU noise and the pathwise (strong) convergence
//! experiment built on it.
//!
//! The OU noise on an interval of length `h` is `η = ∫ e^{−γM⁻¹(h−s)} √(2γ/β) dW(s)`.
//! Splitting the interval in two gives the exact aggregation identity
//! `η_{[0,h]} = e^{−γM⁻¹h/2} η_{[0,h/2]} + η_{[h/2,h]}` with independent
//! halves, so a finer level can be sampled conditionally on a coarser one
//! (a Gaussian bridge). All levels then share one Brownian path.

use rayon::prelude::*;

use super::chain::out_of_bounds;
use super::{with_workers, Kernel, SplittingMethod};
use crate::error::{require_positive, GlaError, Result};
use crate::integrators::IntegratorScheme;
use crate::model::{HamiltonianSystem, MassMatrix, PhaseState};
use crate::noise::NoiseStream;
use crate::ou::build_ou_operator;

/// OU noise increments on a uniform grid, refinable by halving.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinableNoise {
    level: u32,
    interval: f64,
    gamma: f64,
    beta: f64,
    masses: Vec<f64>,
    stream: NoiseStream,
    /// `steps × n`, row-major by interval.
    increments: Vec<f64>,
}

/// Variance of the OU noise over an interval of length `t` for mass `m`.
fn ou_variance(gamma: f64, beta: f64, m: f64, t: f64) -> f64 {
    -(-2.0 * gamma * t / m).exp_m1() * m / beta
}

impl RefinableNoise {
    /// Level-0 noise on `steps` intervals of length `h`.
    pub fn sample(
        gamma: f64,
        beta: f64,
        mass: &MassMatrix,
        h: f64,
        steps: usize,
        stream: NoiseStream,
    ) -> Result<Self> {
        let mut noise = Self::zeros(gamma, beta, mass, h, steps, stream)?;
        let n = noise.dim();
        let sd: Vec<f64> =
            noise.masses.iter().map(|&m| ou_variance(gamma, beta, m, h).sqrt()).collect();
        let mut cursor = stream.cursor();
        for row in noise.increments.chunks_mut(n) {
            for (eta, s) in row.iter_mut().zip(&sd) {
                *eta = s * cursor.next_normal();
            }
        }
        Ok(noise)
    }

    /// All-zero increments (the deterministic limit).
    pub fn zeros(
        gamma: f64,
        beta: f64,
        mass: &MassMatrix,
        h: f64,
        steps: usize,
        stream: NoiseStream,
    ) -> Result<Self> {
        require_positive("gamma", gamma)?;
        require_positive("beta", beta)?;
        require_positive("step size h", h)?;
        let masses = mass.diagonal_entries().ok_or_else(|| {
            GlaError::Unsupported("noise refinement needs a scalar or diagonal mass".into())
        })?;
        let n = masses.len();
        Ok(Self {
            level: 0,
            interval: h,
            gamma,
            beta,
            masses,
            stream,
            increments: vec![0.0; steps * n],
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Length of one interval at this level.
    pub fn interval(&self) -> f64 {
        self.interval
    }

    pub fn dim(&self) -> usize {
        self.masses.len()
    }

    pub fn steps(&self) -> usize {
        self.increments.len() / self.dim()
    }

    /// Noise increment of interval `k`.
    pub fn increment(&self, k: usize) -> &[f64] {
        let n = self.dim();
        &self.increments[k * n..(k + 1) * n]
    }

    /// Per-coordinate variance of one increment at this level.
    pub fn increment_variance(&self) -> Vec<f64> {
        self.masses
            .iter()
            .map(|&m| ou_variance(self.gamma, self.beta, m, self.interval))
            .collect()
    }

    /// Coarsens by one level through the aggregation identity.
    pub fn aggregate(&self) -> Result<Self> {
        if self.level == 0 {
            return Err(GlaError::invalid("level-0 noise cannot be aggregated"));
        }
        let n = self.dim();
        let alpha = self.child_decay();
        let mut increments = Vec::with_capacity(self.increments.len() / 2);
        for pair in self.increments.chunks(2 * n) {
            let (first, second) = pair.split_at(n);
            for i in 0..n {
                increments.push(alpha[i] * first[i] + second[i]);
            }
        }
        Ok(Self { level: self.level - 1, interval: 2.0 * self.interval, increments, ..self.clone() })
    }

    /// `e^{−γ h_child / m}` per coordinate at this level.
    fn child_decay(&self) -> Vec<f64> {
        self.masses.iter().map(|&m| (-self.gamma * self.interval / m).exp()).collect()
    }
}

/// Halves every interval, sampling each pair of children from its Gaussian
/// bridge given the parent increment. Fresh variates come from the stream
/// tagged with the new level, so refinement never disturbs coarser draws.
pub fn refine_noise(coarse: &RefinableNoise) -> Result<RefinableNoise> {
    if coarse.level >= 30 {
        return Err(GlaError::invalid("refinement depth is limited to 30 levels"));
    }
    let n = coarse.dim();
    let child_interval = coarse.interval / 2.0;
    let stream = coarse.stream.substream(coarse.stream.tag() + coarse.level + 1);
    let mut increments = Vec::with_capacity(2 * coarse.increments.len());
    // Per coordinate: S = αX + Y with X, Y ~ N(0, v) independent gives
    // X | S ~ N(αS/(1+α²), v/(1+α²)).
    let params: Vec<(f64, f64)> = coarse
        .masses
        .iter()
        .map(|&m| {
            let alpha = (-coarse.gamma * child_interval / m).exp();
            let v = ou_variance(coarse.gamma, coarse.beta, m, child_interval);
            (alpha, (v / (1.0 + alpha * alpha)).sqrt())
        })
        .collect();
    let mut cursor = stream.cursor();
    let mut second = vec![0.0; n];
    for parent in coarse.increments.chunks(n) {
        for (i, (&s, &(alpha, sd))) in parent.iter().zip(&params).enumerate() {
            let x = alpha * s / (1.0 + alpha * alpha) + sd * cursor.next_normal();
            increments.push(x);
            second[i] = s - alpha * x;
        }
        increments.extend_from_slice(&second);
    }
    Ok(RefinableNoise {
        level: coarse.level + 1,
        interval: child_interval,
        increments,
        ..coarse.clone()
    })
}

/// Parameters of the strong-order experiment.
#[derive(Debug, Clone)]
pub struct StrongErrorConfig {
    pub gamma: f64,
    pub beta: f64,
    /// Coarsest step.
    pub h0: f64,
    /// Number of reported step sizes `h0, h0/2, …`.
    pub levels: usize,
    /// Final time `T`.
    pub horizon: f64,
    pub replicas: u32,
    /// The reference path is computed this many halvings below the finest
    /// reported level.
    pub reference_extra: u32,
    /// Drop the noise entirely (deterministic damped dynamics).
    pub zero_noise: bool,
    pub x0: PhaseState,
    pub workers: usize,
}

impl StrongErrorConfig {
    pub const DEFAULT_REFERENCE_EXTRA: u32 = 4;
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorRow {
    pub h: f64,
    pub steps: u64,
    /// `(E|X_h(T) − X_ref(T)|²)^{1/2}` over the retained replicas.
    pub rms_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorReport {
    pub rows: Vec<StrongErrorRow>,
    pub reference_h: f64,
    pub replicas_used: u32,
    pub discarded: u32,
}

impl StrongErrorReport {
    /// `log2(gap_k / gap_{k+1})` between consecutive rows.
    pub fn slopes(&self) -> Vec<f64> {
        self.rows.windows(2).map(|w| (w[0].rms_gap / w[1].rms_gap).log2()).collect()
    }
}

/// Runs GLA at `h0, h0/2, …` on one shared Brownian path per replica and
/// reports the RMS gap at time `T` to a much finer reference run on the
/// same path. Replicas that diverge at any level are discarded and counted.
pub fn strong_error_experiment(
    scheme: &IntegratorScheme,
    sys: &HamiltonianSystem,
    config: &StrongErrorConfig,
    seed: u64,
) -> Result<StrongErrorReport> {
    let StrongErrorConfig { gamma, beta, h0, levels, horizon, replicas, .. } = *config;
    require_positive("h0", h0)?;
    require_positive("horizon", horizon)?;
    if levels == 0 || replicas == 0 {
        return Err(GlaError::invalid("strong-order experiment needs levels >= 1 and replicas >= 1"));
    }
    sys.check_state(&config.x0)?;
    let coarse_steps = (horizon / h0).round();
    if coarse_steps < 1.0 || (coarse_steps * h0 - horizon).abs() > 1e-9 * horizon {
        return Err(GlaError::invalid(format!("horizon {horizon} is not a multiple of h0 = {h0}")));
    }
    let coarse_steps = coarse_steps as usize;
    let depth = levels - 1 + config.reference_extra as usize;
    if depth >= 30 {
        return Err(GlaError::invalid("refinement depth is limited to 30 levels"));
    }
    let method = SplittingMethod::Gla(scheme.clone());
    let kernels: Vec<Kernel> = (0..=depth)
        .map(|l| {
            let h = h0 / (1u64 << l) as f64;
            let op = build_ou_operator(gamma, beta, sys.mass(), h)?;
            Kernel::new(&method, sys, &op)
        })
        .collect::<Result<_>>()?;
    let reported: Vec<usize> = (0..levels).collect();

    let run_replica = |r: u32| -> Result<Option<Vec<f64>>> {
        let stream = NoiseStream::new(seed, r);
        let mut noise = if config.zero_noise {
            RefinableNoise::zeros(gamma, beta, sys.mass(), h0, coarse_steps, stream)?
        } else {
            RefinableNoise::sample(gamma, beta, sys.mass(), h0, coarse_steps, stream)?
        };
        let mut endpoints = Vec::with_capacity(depth + 1);
        for (l, template) in kernels.iter().enumerate() {
            if l > 0 {
                noise = refine_noise(&noise)?;
            }
            let mut kernel = template.clone();
            let mut x = config.x0.clone();
            for k in 0..noise.steps() {
                kernel.step_with_increment(&mut x, noise.increment(k));
            }
            if out_of_bounds(&x) {
                return Ok(None);
            }
            endpoints.push(x.to_vec());
        }
        let reference = &endpoints[depth];
        Ok(Some(
            reported
                .iter()
                .map(|&l| endpoints[l].iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect(),
        ))
    };

    let per_replica = with_workers(config.workers, || {
        (0..replicas).into_par_iter().map(run_replica).collect::<Result<Vec<_>>>()
    })??;

    let mut sums = vec![0.0; levels];
    let mut used = 0u32;
    for gaps in per_replica.iter().flatten() {
        used += 1;
        for (s, g) in sums.iter_mut().zip(gaps) {
            *s += g;
        }
    }
    if used == 0 {
        return Err(GlaError::NonFiniteState { step: None });
    }
    let rows = sums
        .iter()
        .enumerate()
        .map(|(l, s)| StrongErrorRow {
            h: h0 / (1u64 << l) as f64,
            steps: (coarse_steps as u64) << l,
            rms_gap: (s / used as f64).sqrt(),
        })
        .collect();
    Ok(StrongErrorReport {
        rows,
        reference_h: h0 / (1u64 << depth) as f64,
        replicas_used: used,
        discarded: replicas - used,
    })
}
