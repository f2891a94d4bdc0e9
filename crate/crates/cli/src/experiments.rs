//! Experiment drivers. Each produces one result table.

use std::fmt;

use anyhow::Context;

use gla_core::analysis::{
    convergence_study, global_error_curve, gibbs_moment_quadrature, linear_convergence_study, local_error_curve,
    log2_slopes, pool_estimates, stationary_covariance, ConvergenceConfig, GibbsObservable, ObservedOrder,
};
use gla_core::gla::{
    run_chain_observed, run_chains, strong_error_experiment, ChainConfig, Observable, SplittingMethod,
    StrongErrorConfig,
};
use gla_core::integrators::IntegratorScheme;
use gla_core::model::{potential_by_name, HamiltonianSystem, MassMatrix, PhaseState};
use gla_core::noise::NoiseStream;
use gla_core::ou::build_ou_operator;

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{write_table, Cell, Table};

/// A chain left the finite region.
#[derive(Debug, Clone, PartialEq)]
pub struct Diverged {
    pub scheme: String,
    pub h: f64,
    pub chain: u32,
    pub step: u64,
}

impl fmt::Display for Diverged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "divergence: scheme {}, h = {}, chain {}, step {}", self.scheme, self.h, self.chain, self.step)
    }
}

impl std::error::Error for Diverged {}

/// Result of one experiment: its table and the first divergence, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub divergence: Option<Diverged>,
}

fn system(config: &ExperimentConfig) -> anyhow::Result<HamiltonianSystem> {
    let potential = potential_by_name(&config.potential, &config.potential_params)?;
    Ok(HamiltonianSystem::new(MassMatrix::identity(1), potential)?)
}

fn method(name: &str) -> anyhow::Result<SplittingMethod> {
    Ok(SplittingMethod::from_name(name)?)
}

fn scheme(name: &str) -> anyhow::Result<IntegratorScheme> {
    Ok(IntegratorScheme::from_name(name)?)
}

fn order_cells(order: ObservedOrder) -> [Cell; 2] {
    let status = match order {
        ObservedOrder::First => "first",
        ObservedOrder::Value(_) => "value",
        ObservedOrder::StatisticalFloor => "statistical-floor",
        ObservedOrder::Unavailable => "unavailable",
    };
    [order.value().into(), status.into()]
}

/// Pairwise log2 slopes aligned with their finer row; NaN for the first.
fn aligned_slopes(values: &[f64]) -> Vec<f64> {
    std::iter::once(f64::NAN).chain(log2_slopes(values)).collect()
}

/// Runs the configured experiment without writing anything.
pub fn compute(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    match config.experiment {
        Experiment::HarmonicCovariance => harmonic_covariance(config),
        Experiment::Table1 => table1(config),
        Experiment::StrongOrder => strong_order(config),
        Experiment::EnergyOrder => energy_order(config),
        Experiment::TvCurve => tv_curve(config),
        Experiment::Sample => sample(config),
    }
}

/// Runs the experiment and writes its CSV, also when a chain diverged.
/// Returns the [`Diverged`] error after writing in that case.
pub fn run_experiment(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let outcome = compute(config)?;
    write_table(&config.output, config, &outcome.table)?;
    if let Some(d) = &outcome.divergence {
        return Err(d.clone()).context(format!("partial results written to {}", config.output.display()));
    }
    Ok(outcome)
}

fn harmonic_covariance(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sys = system(config)?;
    let mut table = Table::new(&[
        "scheme", "h", "lyapunov_qq", "lyapunov_pp", "lyapunov_qp", "mc_qq", "mc_qq_stderr", "mc_pp",
        "mc_pp_stderr", "mc_qp", "mc_qp_stderr",
    ]);
    let observables = [Observable::PositionSquared, Observable::MomentumSquared, Observable::PositionMomentum];
    let op = build_ou_operator(config.gamma, config.beta, sys.mass(), config.h0)?;
    let chain_config =
        ChainConfig::with_burn_in_fraction(config.steps / u64::from(config.chains), config.burn_in, config.batches);
    let x0 = PhaseState::scalar(config.q0, config.p0);
    let mut divergence = None;
    for name in &config.schemes {
        let m = method(name)?;
        let sigma = stationary_covariance(&m, config.h0, config.gamma, config.beta)?;
        let results = run_chains(&m, &sys, &op, &x0, chain_config, &observables, config.seed, config.chains, config.workers)?;
        if let Some(r) = results.iter().find(|r| r.diverged()) {
            divergence.get_or_insert(Diverged {
                scheme: name.clone(),
                h: config.h0,
                chain: r.chain,
                step: r.diverged_at.unwrap_or_default(),
            });
        }
        let mut row: Vec<Cell> = vec![name.as_str().into(), config.h0.into()];
        row.extend([sigma[(0, 0)], sigma[(1, 1)], sigma[(0, 1)]].map(Cell::from));
        for i in 0..observables.len() {
            let parts: Option<Vec<_>> = results.iter().map(|r| r.estimates[i]).collect();
            let pooled = parts.and_then(|p| pool_estimates(&p));
            row.push(pooled.map(|e| e.mean).into());
            row.push(pooled.map(|e| e.stderr).into());
        }
        table.push(row);
    }
    Ok(Outcome { table, divergence })
}

fn table1(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sys = system(config)?;
    let reference = match config.reference {
        Some(r) => r,
        None => gibbs_moment_quadrature(sys.potential(), config.beta, GibbsObservable::QSquared)
            .context("computing the reference value by quadrature")?,
    };
    let mut table = Table::new(&[
        "scheme", "h", "steps", "estimate", "stderr", "error", "observed_order", "order_status", "diverged_chains",
    ]);
    table.notes.push(format!("reference q2 = {}", crate::output::format_real(reference)));
    let mut divergence = None;
    for name in &config.schemes {
        let study = ConvergenceConfig {
            gamma: config.gamma,
            beta: config.beta,
            h0: config.h0,
            n0: config.steps,
            levels: config.levels,
            chains: config.chains,
            burn_in_fraction: config.burn_in,
            batches: config.batches,
            x0: PhaseState::scalar(config.q0, config.p0),
            observable: Observable::PositionSquared,
            reference,
            workers: config.workers,
        };
        let rows = convergence_study(&method(name)?, &sys, &study, config.seed)?;
        for row in rows {
            if let (None, Some((chain, step))) = (&divergence, row.first_divergence) {
                divergence = Some(Diverged { scheme: name.clone(), h: row.h, chain, step });
            }
            let [order, status] = order_cells(row.order);
            table.push(vec![
                name.as_str().into(),
                row.h.into(),
                row.steps.into(),
                row.estimate.map(|e| e.mean).into(),
                row.stderr.into(),
                row.error.into(),
                order,
                status,
                row.diverged_chains.into(),
            ]);
        }
    }
    Ok(Outcome { table, divergence })
}

fn strong_order(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sys = system(config)?;
    let mut table = Table::new(&["scheme", "h", "steps", "rms_gap", "observed_order"]);
    for name in &config.schemes {
        let strong = StrongErrorConfig {
            gamma: config.gamma,
            beta: config.beta,
            h0: config.h0,
            levels: config.levels,
            horizon: config.horizon,
            replicas: config.replicas,
            reference_extra: config.reference_extra,
            zero_noise: false,
            x0: PhaseState::scalar(config.q0, config.p0),
            workers: config.workers,
        };
        let report = strong_error_experiment(&scheme(name)?, &sys, &strong, config.seed)?;
        table.notes.push(format!(
            "{name}: reference h = {}, replicas used = {}, discarded = {}",
            report.reference_h, report.replicas_used, report.discarded
        ));
        let gaps: Vec<f64> = report.rows.iter().map(|r| r.rms_gap).collect();
        for (row, order) in report.rows.iter().zip(aligned_slopes(&gaps)) {
            table.push(vec![name.as_str().into(), row.h.into(), row.steps.into(), row.rms_gap.into(), order.into()]);
        }
    }
    Ok(Outcome { table, divergence: None })
}

fn energy_order(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sys = system(config)?;
    let mut table = Table::new(&[
        "scheme", "h", "energy_error", "local_state_error", "global_error", "energy_order", "global_order",
    ]);
    let x0 = if config.q0 == 0.0 && config.p0 == 0.0 {
        // The origin is a fixed point of every scheme.
        PhaseState::scalar(1.0, 0.5)
    } else {
        PhaseState::scalar(config.q0, config.p0)
    };
    let hs = config.step_sizes();
    for name in &config.schemes {
        let s = scheme(name)?;
        let local = local_error_curve(&s, &sys, &hs, &x0)?;
        let global = global_error_curve(&s, &sys, &hs, config.horizon, &x0)?;
        let energy: Vec<f64> = local.iter().map(|r| r.energy_error).collect();
        let glob: Vec<f64> = global.iter().map(|r| r.1).collect();
        for (i, (l, g)) in local.iter().zip(&global).enumerate() {
            table.push(vec![
                name.as_str().into(),
                l.h.into(),
                l.energy_error.into(),
                l.state_error.into(),
                g.1.into(),
                aligned_slopes(&energy)[i].into(),
                aligned_slopes(&glob)[i].into(),
            ]);
        }
    }
    Ok(Outcome { table, divergence: None })
}

fn tv_curve(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let mut table = Table::new(&[
        "scheme", "h", "tv", "observed_order", "moment_error", "moment_order", "sigma_qq", "sigma_pp", "sigma_qp",
    ]);
    for name in &config.schemes {
        let rows = linear_convergence_study(&method(name)?, &config.step_sizes(), config.gamma, config.beta)?;
        let tv: Vec<f64> = rows.iter().map(|r| r.tv).collect();
        let moment: Vec<f64> = rows.iter().map(|r| r.moment_error).collect();
        for (i, r) in rows.iter().enumerate() {
            table.push(vec![
                name.as_str().into(),
                r.h.into(),
                r.tv.into(),
                aligned_slopes(&tv)[i].into(),
                r.moment_error.into(),
                aligned_slopes(&moment)[i].into(),
                r.sigma_q2.into(),
                r.sigma_p2.into(),
                r.kappa.into(),
            ]);
        }
    }
    Ok(Outcome { table, divergence: None })
}

fn sample(config: &ExperimentConfig) -> anyhow::Result<Outcome> {
    let sys = system(config)?;
    let name = &config.schemes[0];
    let op = build_ou_operator(config.gamma, config.beta, sys.mass(), config.h0)?;
    let mut table = Table::new(&["step", "q", "p"]);
    let chain_config = ChainConfig { steps: config.steps, burn_in: config.steps, batches: config.batches };
    let result = run_chain_observed(
        &method(name)?,
        &sys,
        &op,
        &PhaseState::scalar(config.q0, config.p0),
        chain_config,
        &[],
        NoiseStream::new(config.seed, 0),
        |step, x| {
            if step % config.stride == 0 {
                table.push(vec![step.into(), x.q[0].into(), x.p[0].into()]);
            }
        },
    )?;
    let divergence = result.diverged_at.map(|step| Diverged { scheme: name.clone(), h: config.h0, chain: 0, step });
    Ok(Outcome { table, divergence })
}
