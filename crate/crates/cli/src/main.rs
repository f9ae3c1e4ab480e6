//! `aoisched`: capacity checks, relaxation solves, simulations, figure sweeps
//! and Monte Carlo validations from the command line.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 infeasible targets,
//! 3 failed validation.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aoi_core::capacity::{check_sources, pick_probabilities};
use aoi_core::experiments::sweep::{run_sweep, sweep_custom, SweepName, SweepOptions, SweepSpec, SweptParameter};
use aoi_core::experiments::validate::{validate_epsilon_moment, validate_wald};
use aoi_core::experiments::{format_float, load_config, pick_plan, simulate, simulation_table, ExperimentError, Table};
use aoi_core::model::SystemConfig;
use aoi_core::policies::PolicyKind;
use aoi_core::solver::solve_relaxation;

const EXIT_USAGE: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "aoisched", version, about = "Age-of-information scheduling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the alpha targets of a config against the capacity conditions.
    Feasibility {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
    /// Solve the weighted-sum relaxation.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated weights overriding the config.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<f64>>,
        #[command(flatten)]
        output: Output,
    },
    /// Simulate a policy and report per-source statistics.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// randomized | marked | round-robin | threshold-wait(θ) | zero-wait
        #[arg(long, default_value = "randomized")]
        policy: PolicyKind,
        #[command(flatten)]
        run: RunOverrides,
        #[command(flatten)]
        output: Output,
    },
    /// Run a predefined figure sweep or a custom one-parameter sweep.
    Sweep {
        #[arg(long)]
        sweep: SweepName,
        /// Base config (custom sweeps only).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Swept field, e.g. `alpha:1` (custom sweeps only).
        #[arg(long)]
        param: Option<SweptParameter>,
        /// Comma-separated increasing values (custom sweeps only).
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = "randomized")]
        policy: PolicyKind,
        #[command(flatten)]
        run: RunOverrides,
        /// Horizon of each threshold-grid candidate (fig5).
        #[arg(long)]
        search_horizon: Option<f64>,
        #[command(flatten)]
        output: Output,
    },
    /// Monte Carlo checks of auxiliary identities.
    Validate {
        #[command(subcommand)]
        which: Validation,
    },
}

#[derive(Debug, Subcommand)]
enum Validation {
    /// Squared distance from a fixed instant to the nearest Poisson point.
    Epsilon {
        #[arg(long, default_value_t = 4.0)]
        mu: f64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Mean time between picks of the randomized policy.
    Wald {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Debug, Args)]
struct RunOverrides {
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    replications: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunOverrides {
    fn apply(&self, cfg: &mut SystemConfig) {
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(r) = self.replications {
            cfg.replications = r;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
    }
}

#[derive(Debug, Args)]
struct Output {
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Output {
    fn write(&self, table: &Table) -> Result<(), CliError> {
        match &self.out {
            Some(path) => {
                let file = File::create(path).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
                let mut w = BufWriter::new(file);
                table.write_csv(&mut w)?;
                w.flush().map_err(csv::Error::from)?;
            }
            None => table.write_csv(io::stdout().lock())?,
        }
        Ok(())
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Experiment(ExperimentError),
    Csv(csv::Error),
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Csv(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Experiment(e) => write!(f, "{e}"),
            CliError::Csv(e) => write!(f, "writing csv: {e}"),
        }
    }
}

/// Revalidates a config after command-line overrides.
fn checked(cfg: SystemConfig) -> Result<SystemConfig, CliError> {
    aoi_core::model::validate_config(cfg)
        .map_err(|r| CliError::Experiment(ExperimentError::Config(r.into())))
}

fn feasibility(config: &PathBuf, output: &Output) -> Result<u8, CliError> {
    let cfg = load_config(config).map_err(ExperimentError::from)?;
    let report = check_sources(&cfg.sources).map_err(ExperimentError::from)?;
    let p = report.t_max_values().map(|t| pick_probabilities(&t));
    let mut table = Table::new(["source", "mu", "gamma", "alpha", "margin", "t_max", "p", "load", "feasible"]);
    for (i, s) in cfg.sources.iter().enumerate() {
        table.push(vec![
            (i + 1).into(),
            s.mu.into(),
            s.gamma().into(),
            s.alpha.unwrap_or(f64::NAN).into(),
            report.per_source_margin[i].into(),
            report.t_max[i].unwrap_or(f64::NAN).into(),
            p.as_ref().map_or(f64::NAN, |p| p[i]).into(),
            report.load.into(),
            report.feasible.to_string().into(),
        ]);
    }
    output.write(&table)?;
    eprintln!(
        "{} (load {})",
        if report.feasible { "feasible" } else { "infeasible" },
        format_float(report.load)
    );
    Ok(if report.feasible { 0 } else { EXIT_INFEASIBLE })
}

fn solve(config: &PathBuf, weights: Option<&[f64]>, output: &Output) -> Result<u8, CliError> {
    let cfg = load_config(config).map_err(ExperimentError::from)?;
    let weights = weights.map_or_else(|| cfg.weights(), <[f64]>::to_vec);
    let sol = solve_relaxation(&cfg.sources, &weights).map_err(ExperimentError::from)?;
    let mut table = Table::new([
        "source", "mu", "gamma", "weight", "t_o", "alpha_o", "p_o", "multiplier", "objective", "load",
    ]);
    for (i, s) in cfg.sources.iter().enumerate() {
        table.push(vec![
            (i + 1).into(),
            s.mu.into(),
            s.gamma().into(),
            weights[i].into(),
            sol.t_o[i].into(),
            sol.alpha_o[i].into(),
            sol.p_o[i].into(),
            sol.multiplier.into(),
            sol.objective.into(),
            sol.load.into(),
        ]);
    }
    output.write(&table)?;
    eprintln!("objective {} (multiplier {})", format_float(sol.objective), format_float(sol.multiplier));
    Ok(0)
}

fn simulate_cmd(config: &PathBuf, policy: PolicyKind, run: &RunOverrides, output: &Output) -> Result<u8, CliError> {
    let mut cfg = load_config(config).map_err(ExperimentError::from)?;
    run.apply(&mut cfg);
    let cfg = checked(cfg)?;
    let summary = simulate(&cfg, policy)?;
    output.write(&simulation_table(&cfg, policy, &summary))?;
    eprintln!(
        "{policy}: WSAAoI {} (se {}) over {} replications",
        format_float(summary.wsaaoi.mean),
        format_float(summary.wsaaoi.std_error),
        cfg.replications
    );
    Ok(0)
}

struct SweepArgs<'a> {
    sweep: SweepName,
    config: Option<&'a PathBuf>,
    param: Option<SweptParameter>,
    values: Option<&'a [f64]>,
    policy: PolicyKind,
    run: &'a RunOverrides,
    search_horizon: Option<f64>,
}

fn sweep_cmd(args: SweepArgs<'_>, output: &Output) -> Result<u8, CliError> {
    let table = if args.sweep == SweepName::Custom {
        let (Some(config), Some(param), Some(values)) = (args.config, args.param, args.values) else {
            return Err(CliError::Usage("custom sweeps need --config, --param and --values".into()));
        };
        let mut base = load_config(config).map_err(ExperimentError::from)?;
        args.run.apply(&mut base);
        let spec = SweepSpec::custom(param, values.to_vec(), checked(base)?)?;
        sweep_custom(&spec, args.policy)?
    } else {
        if args.config.is_some() || args.param.is_some() || args.values.is_some() {
            return Err(CliError::Usage(format!("--config/--param/--values only apply to custom sweeps, not {}", args.sweep)));
        }
        let defaults = SweepOptions::default();
        let opts = SweepOptions {
            horizon: args.run.horizon.unwrap_or(defaults.horizon),
            replications: args.run.replications.unwrap_or(defaults.replications),
            seed: args.run.seed.unwrap_or(defaults.seed),
            search_horizon: args.search_horizon,
        };
        if !(opts.horizon > 0.0 && opts.horizon.is_finite()) || opts.replications == 0 {
            return Err(CliError::Usage("horizon must be positive and replications at least 1".into()));
        }
        run_sweep(args.sweep, &opts)?
    };
    output.write(&table)?;
    eprintln!("{}: {} rows", args.sweep, table.rows.len());
    Ok(0)
}

fn validate_cmd(which: &Validation) -> Result<u8, CliError> {
    match which {
        Validation::Epsilon { mu, samples, seed, output } => {
            let r = validate_epsilon_moment(*mu, *samples, *seed)?;
            let mut table = Table::new(["quantity", "e", "empirical", "expected", "std_error"]);
            table.push(vec!["mean_sq".into(), f64::NAN.into(), r.mean_sq.into(), r.expected_mean_sq.into(), r.mean_sq_se.into()]);
            for t in &r.tail {
                table.push(vec!["tail".into(), t.e.into(), t.empirical.into(), t.expected.into(), f64::NAN.into()]);
            }
            output.write(&table)?;
            eprintln!(
                "E[eps^2] {} vs {}: {}",
                format_float(r.mean_sq),
                format_float(r.expected_mean_sq),
                if r.passed { "pass" } else { "FAIL" }
            );
            Ok(if r.passed { 0 } else { EXIT_VALIDATION })
        }
        Validation::Wald { config, horizon, seed, output } => {
            let cfg = load_config(config).map_err(ExperimentError::from)?;
            let p = pick_plan(&cfg)?.p;
            let r = validate_wald(&cfg, &p, horizon.unwrap_or(cfg.horizon), seed.unwrap_or(cfg.seed))?;
            let mut table = Table::new(["source", "p", "picks", "mean_inter_pick", "std_error", "expected", "relative_error"]);
            for (i, s) in r.sources.iter().enumerate() {
                table.push(vec![
                    (i + 1).into(),
                    p[i].into(),
                    s.picks.into(),
                    s.mean_inter_pick.into(),
                    s.std_error.into(),
                    s.expected.into(),
                    s.relative_error().into(),
                ]);
            }
            output.write(&table)?;
            eprintln!("inter-pick identity: {}", if r.passed { "pass" } else { "FAIL" });
            Ok(if r.passed { 0 } else { EXIT_VALIDATION })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, CliError> {
    match &cli.command {
        Command::Feasibility { config, output } => feasibility(config, output),
        Command::Solve { config, weights, output } => solve(config, weights.as_deref(), output),
        Command::Simulate { config, policy, run, output } => simulate_cmd(config, *policy, run, output),
        Command::Sweep { sweep, config, param, values, policy, run, search_horizon, output } => sweep_cmd(
            SweepArgs {
                sweep: *sweep,
                config: config.as_ref(),
                param: *param,
                values: values.as_deref(),
                policy: *policy,
                run,
                search_horizon: *search_horizon,
            },
            output,
        ),
        Command::Validate { which } => validate_cmd(which),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
