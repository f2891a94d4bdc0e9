//! Experiment configuration: a flat JSON object whose keys are mirrored
//! one-to-one by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use gla_core::gla::{ChainConfig, SplittingMethod};
use gla_core::model::potential_by_name;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "GLA_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    HarmonicCovariance,
    Table1,
    StrongOrder,
    EnergyOrder,
    TvCurve,
    Sample,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Self::HarmonicCovariance => "harmonic-covariance",
            Self::Table1 => "table1",
            Self::StrongOrder => "strong-order",
            Self::EnergyOrder => "energy-order",
            Self::TvCurve => "tv-curve",
            Self::Sample => "sample",
        }
    }

    fn stochastic(&self) -> bool {
        !matches!(self, Self::EnergyOrder | Self::TvCurve)
    }

    fn harmonic_only(&self) -> bool {
        matches!(self, Self::HarmonicCovariance | Self::StrongOrder | Self::EnergyOrder | Self::TvCurve)
    }
}

/// Every key is optional here; [`ExperimentConfig::resolve`] fills defaults
/// and validates.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Set by the subcommand.
    #[arg(skip)]
    pub experiment: Option<Experiment>,
    /// Scheme name (euler, verlet, neri4, exact) or "all".
    #[arg(long)]
    pub scheme: Option<String>,
    /// harmonic, double-well or polynomial.
    #[arg(long)]
    pub potential: Option<String>,
    /// Polynomial coefficients `c0, c1, …`.
    #[arg(long, value_delimiter = ',')]
    pub potential_params: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Coarsest step size.
    #[arg(long, allow_negative_numbers = true)]
    pub h0: Option<f64>,
    /// Steps (at `h0` for table1).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Coupled replicas of the strong-order experiment.
    #[arg(long)]
    pub replicas: Option<u32>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Independent chains per level; results do not depend on `workers`.
    #[arg(long)]
    pub chains: Option<u32>,
    #[arg(long, allow_negative_numbers = true)]
    pub burn_in: Option<f64>,
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Thinning stride of the sample experiment.
    #[arg(long)]
    pub stride: Option<u64>,
    /// Final time of the strong- and energy-order experiments.
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub reference_extra: Option<u32>,
    /// Reference value of table1; computed by quadrature when absent.
    #[arg(long, allow_negative_numbers = true)]
    pub reference: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q0: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p0: Option<f64>,
}

impl RawConfig {
    pub fn from_json_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| {
            ConfigError(vec![format!(
                "{}: line {}, column {}: {e}",
                path.display(),
                e.line(),
                e.column()
            )])
            .into()
        })
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overridden_by(self, flags: RawConfig) -> RawConfig {
        macro_rules! pick {
            ($($f:ident),*) => { RawConfig { $($f: flags.$f.or(self.$f)),* } };
        }
        pick!(
            experiment, scheme, potential, potential_params, gamma, beta, h0, steps, replicas, levels, chains,
            burn_in, batches, seed, workers, output, stride, horizon, reference_extra, reference, q0, p0
        )
    }
}

/// Every violated constraint of a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration:")?;
        for p in &self.0 {
            writeln!(f, "  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub schemes: Vec<String>,
    pub potential: String,
    pub potential_params: Vec<f64>,
    pub gamma: f64,
    pub beta: f64,
    pub h0: f64,
    pub steps: u64,
    pub replicas: u32,
    pub levels: usize,
    pub chains: u32,
    pub burn_in: f64,
    pub batches: usize,
    pub seed: u64,
    pub stride: u64,
    pub horizon: f64,
    pub reference_extra: u32,
    pub reference: Option<f64>,
    pub q0: f64,
    pub p0: f64,
    #[serde(skip)]
    pub workers: usize,
    #[serde(skip)]
    pub output: PathBuf,
}

const SHIPPED: [&str; 3] = ["euler", "verlet", "neri4"];

impl ExperimentConfig {
    pub fn resolve(raw: RawConfig) -> Result<Self, ConfigError> {
        let mut problems = Vec::new();
        let Some(experiment) = raw.experiment else {
            return Err(ConfigError(vec!["experiment: missing".into()]));
        };
        use Experiment::*;

        let scheme = raw.scheme.clone().unwrap_or_else(|| "all".into());
        let schemes: Vec<String> = if scheme == "all" {
            let mut s: Vec<String> = SHIPPED.iter().map(|s| s.to_string()).collect();
            if experiment == HarmonicCovariance {
                s.push("exact".into());
            }
            s
        } else {
            vec![scheme.clone()]
        };
        for s in &schemes {
            match SplittingMethod::from_name(s) {
                Err(_) => problems.push(format!("scheme: unknown scheme {s:?}")),
                Ok(SplittingMethod::ExactHarmonic) if !matches!(experiment, HarmonicCovariance | TvCurve | Sample) => {
                    problems.push(format!("scheme: \"exact\" is not available for {}", experiment.name()))
                }
                Ok(_) => {}
            }
        }
        if experiment == Sample && schemes.len() != 1 {
            problems.push("scheme: sample needs a single scheme".into());
        }

        let potential = raw
            .potential
            .clone()
            .unwrap_or_else(|| if experiment == Table1 { "double-well" } else { "harmonic" }.into());
        let potential_params = raw.potential_params.clone().unwrap_or_default();
        match potential_by_name(&potential, &potential_params) {
            Err(e) => problems.push(format!("potential: {e}")),
            Ok(p) if experiment.harmonic_only() && p.harmonic_stiffness().is_none() => {
                problems.push(format!("potential: {} needs the harmonic potential", experiment.name()))
            }
            Ok(_) => {}
        }
        if schemes.iter().any(|s| s == "exact") && potential != "harmonic" {
            problems.push("scheme: \"exact\" needs the harmonic potential".into());
        }

        let positive = |problems: &mut Vec<String>, name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                problems.push(format!("{name}: must be positive and finite, got {v}"));
            }
        };
        let gamma = raw.gamma.unwrap_or(1.0);
        let beta = raw.beta.unwrap_or(2.0);
        let h0 = raw.h0.unwrap_or(if matches!(experiment, StrongOrder | EnergyOrder) { 0.2 } else { 0.4 });
        positive(&mut problems, "gamma", gamma);
        positive(&mut problems, "beta", beta);
        positive(&mut problems, "h0", h0);

        let steps = raw.steps.unwrap_or(match experiment {
            Table1 => 10_000_000,
            HarmonicCovariance => 1_000_000,
            _ => 10_000,
        });
        if steps == 0 {
            problems.push("steps: must be at least 1".into());
        }
        let replicas = raw.replicas.unwrap_or(10_000);
        if replicas == 0 {
            problems.push("replicas: must be at least 1".into());
        }
        let levels = raw.levels.unwrap_or(4);
        if !(1..=20).contains(&levels) {
            problems.push(format!("levels: must lie in 1..=20, got {levels}"));
        }
        let chains = raw.chains.unwrap_or(4);
        if !(1..=1 << 16).contains(&chains) {
            problems.push(format!("chains: must lie in 1..=65536, got {chains}"));
        }
        let burn_in = raw.burn_in.unwrap_or(ChainConfig::DEFAULT_BURN_IN_FRACTION);
        if !(0.0..1.0).contains(&burn_in) {
            problems.push(format!("burn_in: must lie in [0, 1), got {burn_in}"));
        }
        let batches = raw.batches.unwrap_or(ChainConfig::DEFAULT_BATCHES);
        if batches < 2 {
            problems.push(format!("batches: must be at least 2, got {batches}"));
        }
        if matches!(experiment, Table1 | HarmonicCovariance) && chains > 0 && batches >= 2 {
            let per_chain = steps / u64::from(chains);
            let samples = per_chain - (burn_in.clamp(0.0, 1.0) * per_chain as f64).round() as u64;
            if samples < 2 * batches as u64 {
                problems.push(format!(
                    "steps: {steps} steps over {chains} chains leave {samples} samples per chain, fewer than 2 x {batches} batches"
                ));
            }
        }
        let seed = raw.seed.unwrap_or_else(|| {
            if experiment.stochastic() {
                problems.push("seed: missing (required for stochastic experiments)".into());
            }
            0
        });
        let stride = raw.stride.unwrap_or(1);
        if stride == 0 {
            problems.push("stride: must be at least 1".into());
        }
        let horizon = raw.horizon.unwrap_or(1.0);
        positive(&mut problems, "horizon", horizon);
        if matches!(experiment, StrongOrder | EnergyOrder) && h0 > 0.0 && horizon > 0.0 {
            let n = (horizon / h0).round();
            if n < 1.0 || (n * h0 - horizon).abs() > 1e-9 * horizon {
                problems.push(format!("horizon: {horizon} is not a multiple of h0 = {h0}"));
            }
        }
        let reference_extra = raw.reference_extra.unwrap_or(4);
        if experiment == StrongOrder && levels + reference_extra as usize > 28 {
            problems.push("reference_extra: levels + reference_extra must not exceed 28".into());
        }
        if let Some(r) = raw.reference {
            if !r.is_finite() {
                problems.push("reference: must be finite".into());
            }
        }
        let workers = match raw.workers {
            Some(0) => {
                problems.push("workers: must be at least 1".into());
                1
            }
            Some(w) => w,
            None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        };
        let (q0, p0) = (raw.q0.unwrap_or(0.0), raw.p0.unwrap_or(0.0));
        if !(q0.is_finite() && p0.is_finite()) {
            problems.push("q0/p0: must be finite".into());
        }
        let output = raw.output.clone().unwrap_or_else(|| {
            let dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
            dir.join(format!("{}.csv", experiment.name()))
        });

        if !problems.is_empty() {
            return Err(ConfigError(problems));
        }
        Ok(Self {
            experiment,
            schemes,
            potential,
            potential_params,
            gamma,
            beta,
            h0,
            steps,
            replicas,
            levels,
            chains,
            burn_in,
            batches,
            seed,
            stride,
            horizon,
            reference_extra,
            reference: raw.reference,
            q0,
            p0,
            workers,
            output,
        })
    }

    /// Step sizes `h0, h0/2, …` of the level sweep.
    pub fn step_sizes(&self) -> Vec<f64> {
        (0..self.levels).map(|l| self.h0 / (1u64 << l) as f64).collect()
    }
}

/// Reads `file` (if any), applies `flags` on top and validates.
pub fn parse_config(file: Option<&Path>, flags: RawConfig) -> anyhow::Result<ExperimentConfig> {
    let base = match file {
        Some(path) => RawConfig::from_json_file(path)?,
        None => RawConfig::default(),
    };
    Ok(ExperimentConfig::resolve(base.overridden_by(flags))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> RawConfig {
        RawConfig {
            experiment: Some(Experiment::Table1),
            h0: Some(0.4),
            levels: Some(4),
            beta: Some(2.0),
            gamma: Some(1.0),
            seed: Some(1),
            ..Default::default()
        }
    }

    #[test]
    fn standard_level_sweep_is_accepted() {
        let cfg = ExperimentConfig::resolve(table1()).unwrap();
        assert_eq!(cfg.schemes, ["euler", "verlet", "neri4"]);
        assert_eq!(cfg.potential, "double-well");
        assert_eq!((cfg.burn_in, cfg.batches), (0.1, 64));
        assert_eq!(cfg.step_sizes(), [0.4, 0.2, 0.1, 0.05]);
        assert!(cfg.workers >= 1);
    }

    #[test]
    fn missing_seed_is_named() {
        let err = ExperimentConfig::resolve(RawConfig { seed: None, ..table1() }).unwrap_err();
        assert!(err.0.iter().any(|p| p.starts_with("seed")), "{err}");
    }

    #[test]
    fn every_violation_is_reported() {
        let raw = RawConfig { gamma: Some(-1.0), beta: Some(0.0), batches: Some(1), seed: None, ..table1() };
        let err = ExperimentConfig::resolve(raw).unwrap_err();
        for key in ["gamma", "beta", "batches", "seed"] {
            assert!(err.0.iter().any(|p| p.starts_with(key)), "{key} missing from {err}");
        }
    }

    #[test]
    fn flags_override_file_values() {
        let file = RawConfig { scheme: Some("euler".into()), gamma: Some(0.5), ..table1() };
        let flags = RawConfig { scheme: Some("verlet".into()), ..Default::default() };
        let cfg = ExperimentConfig::resolve(file.overridden_by(flags)).unwrap();
        assert_eq!(cfg.schemes, ["verlet"]);
        assert_eq!(cfg.gamma, 0.5);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RawConfig>(r#"{"experiment": "table1", "gama": 1}"#).is_err());
        let raw: RawConfig = serde_json::from_str(r#"{"experiment": "tv-curve", "burn_in": 0.2}"#).unwrap();
        assert_eq!(raw.burn_in, Some(0.2));
    }

    #[test]
    fn harmonic_experiments_reject_other_potentials() {
        let raw = RawConfig {
            experiment: Some(Experiment::TvCurve),
            potential: Some("double-well".into()),
            ..Default::default()
        };
        assert!(ExperimentConfig::resolve(raw).is_err());
    }
}
