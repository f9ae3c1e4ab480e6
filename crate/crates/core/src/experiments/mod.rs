//! Experiment drivers: config files, policy construction, replicated runs,
//! figure sweeps, Monte Carlo validations and CSV tables.

pub mod config;
pub mod report;
pub mod sweep;
pub mod validate;

use thiserror::Error;

use crate::capacity::{self, aaoi_lower_bound, CapacityError};
use crate::model::SystemConfig;
use crate::policies::{
    marking_threshold, MarkedRandomizedPolicy, PolicyError, PolicyKind, RandomizedPolicy, RoundRobinPolicy,
    ThresholdWaitPolicy,
};
use crate::sim::{self, Policy, SimError, SimResult};
use crate::solver::{solve_relaxation, SolverError};
use crate::stats::Estimate;

pub use config::{load_config, parse_config, ConfigLoadError};
pub use report::{format_float, Cell, Table};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigLoadError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Invalid(String),
}

/// Where the pick probabilities of a randomized policy come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityOrigin {
    /// `p ~ 1 / t_max(alpha)`, used when every source has a target.
    AlphaTargets,
    /// `p ~ 1 / T^o` from the relaxation with the configured weights.
    Relaxation,
}

/// Mean inter-generation targets and the pick probabilities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PickPlan {
    pub origin: ProbabilityOrigin,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
}

/// Uses the alpha targets when all sources have one; otherwise the
/// relaxation optimum for the configured weights. Targets only need to meet
/// the per-source condition, an overloaded vector still yields a policy.
pub fn pick_plan(cfg: &SystemConfig) -> Result<PickPlan, ExperimentError> {
    let (origin, t) = match cfg.alphas() {
        Some(alpha) => {
            let t = cfg
                .sources
                .iter()
                .zip(&alpha)
                .map(|(s, &a)| capacity::t_max(a, s.gamma(), s.mu))
                .collect::<Result<Vec<_>, _>>()?;
            (ProbabilityOrigin::AlphaTargets, t)
        }
        None => {
            let sol = solve_relaxation(&cfg.sources, &cfg.weights())?;
            (ProbabilityOrigin::Relaxation, sol.t_o)
        }
    };
    let p = capacity::pick_probabilities(&t);
    Ok(PickPlan { origin, t, p })
}

/// A policy resolved against a config, ready to be instantiated once per
/// replication.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyPlan {
    Randomized { p: Vec<f64> },
    Marked { p: Vec<f64>, thresholds: Vec<f64> },
    RoundRobin,
    ThresholdWait { theta: f64 },
}

impl PolicyPlan {
    pub fn new(kind: PolicyKind, cfg: &SystemConfig) -> Result<Self, ExperimentError> {
        let plan = match kind {
            PolicyKind::Randomized => PolicyPlan::Randomized { p: pick_plan(cfg)?.p },
            PolicyKind::Marked => {
                let pp = pick_plan(cfg)?;
                let thresholds = pp.t.iter().zip(&cfg.sources).map(|(&t, s)| marking_threshold(t, s.mu)).collect();
                PolicyPlan::Marked { p: pp.p, thresholds }
            }
            PolicyKind::RoundRobin => PolicyPlan::RoundRobin,
            PolicyKind::ThresholdWait(theta) => PolicyPlan::ThresholdWait { theta },
            PolicyKind::ZeroWait => PolicyPlan::ThresholdWait { theta: 0.0 },
        };
        if matches!(plan, PolicyPlan::ThresholdWait { .. }) && cfg.len() != 1 {
            return Err(ExperimentError::Invalid(format!(
                "policy `{kind}` needs exactly one source (config has {})",
                cfg.len()
            )));
        }
        // surface bad probability vectors or thresholds now, not per replication
        plan.instantiate(cfg.seed, 0)?;
        Ok(plan)
    }

    pub fn instantiate(&self, seed: u64, replication: u32) -> Result<Box<dyn Policy>, PolicyError> {
        let stream = sim::policy_stream(seed, replication);
        Ok(match self {
            PolicyPlan::Randomized { p } => Box::new(RandomizedPolicy::new(p.clone(), stream)?),
            PolicyPlan::Marked { p, thresholds } => {
                Box::new(MarkedRandomizedPolicy::new(p.clone(), thresholds.clone(), stream)?)
            }
            PolicyPlan::RoundRobin => Box::new(RoundRobinPolicy::new()),
            PolicyPlan::ThresholdWait { theta } => Box::new(ThresholdWaitPolicy::new(*theta)?),
        })
    }

    /// Runs every replication of `cfg`, in replication order.
    pub fn replicate(&self, cfg: &SystemConfig) -> Result<Vec<SimResult>, ExperimentError> {
        Ok(sim::replicate(cfg, |rep| self.instantiate(cfg.seed, rep).expect("plan was validated"))?)
    }
}

/// Replication-level estimates for one source.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSummary {
    pub aaoi: Estimate,
    pub t_bar: Estimate,
    pub beta: Estimate,
    pub delivered: Estimate,
    pub mean_wait: Estimate,
    pub mean_system_time: Estimate,
    pub inter_pick: Estimate,
    /// Lower bound evaluated at the mean empirical `t_bar`.
    pub lower_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub sources: Vec<SourceSummary>,
    pub wsaaoi: Estimate,
    pub busy_fraction: Estimate,
    pub idle_lock_fraction: Estimate,
    /// `sum gamma_l / t_bar_l` per replication.
    pub throughput: Estimate,
    pub replications: u32,
    pub seed: u64,
    pub horizon: f64,
}

fn estimate_of(runs: &[SimResult], f: impl Fn(&SimResult) -> f64) -> Estimate {
    Estimate::from_samples(&runs.iter().map(f).collect::<Vec<_>>())
}

pub fn summarize(cfg: &SystemConfig, runs: &[SimResult]) -> SimulationSummary {
    let weights = cfg.weights();
    let gammas = cfg.gammas();
    let sources = cfg
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let t_bar = estimate_of(runs, |r| r.sources[i].empirical_t_bar);
            SourceSummary {
                aaoi: estimate_of(runs, |r| r.sources[i].aaoi),
                t_bar,
                beta: estimate_of(runs, |r| r.sources[i].empirical_beta.unwrap_or(f64::NAN)),
                delivered: estimate_of(runs, |r| r.sources[i].delivered_count as f64),
                mean_wait: estimate_of(runs, |r| r.sources[i].mean_wait),
                mean_system_time: estimate_of(runs, |r| r.sources[i].mean_system_time),
                inter_pick: estimate_of(runs, |r| r.sources[i].inter_pick.mean),
                lower_bound: aaoi_lower_bound(t_bar.mean, s.mu, s.gamma()),
            }
        })
        .collect();
    SimulationSummary {
        sources,
        wsaaoi: estimate_of(runs, |r| r.weighted_sum(&weights)),
        busy_fraction: estimate_of(runs, |r| r.busy_fraction),
        idle_lock_fraction: estimate_of(runs, |r| r.idle_lock_fraction),
        throughput: estimate_of(runs, |r| {
            r.sources.iter().zip(&gammas).map(|(s, g)| g / s.empirical_t_bar).sum()
        }),
        replications: cfg.replications,
        seed: cfg.seed,
        horizon: cfg.horizon,
    }
}

/// Builds the policy, runs all replications and summarizes them.
pub fn simulate(cfg: &SystemConfig, kind: PolicyKind) -> Result<SimulationSummary, ExperimentError> {
    let runs = PolicyPlan::new(kind, cfg)?.replicate(cfg)?;
    Ok(summarize(cfg, &runs))
}

pub const SIMULATE_COLUMNS: [&str; 27] = [
    "policy",
    "source",
    "mu",
    "gamma",
    "delay",
    "alpha",
    "weight",
    "aaoi",
    "aaoi_se",
    "bound_3alpha",
    "lower_bound",
    "t_bar",
    "t_bar_se",
    "beta",
    "delivered",
    "mean_wait",
    "mean_system_time",
    "mean_inter_pick",
    "wsaaoi",
    "wsaaoi_se",
    "busy_fraction",
    "idle_lock_fraction",
    "throughput",
    "throughput_se",
    "replications",
    "seed",
    "horizon",
];

/// One row per source (1-based index).
pub fn simulation_table(cfg: &SystemConfig, kind: PolicyKind, summary: &SimulationSummary) -> Table {
    let mut table = Table::new(SIMULATE_COLUMNS);
    for (i, (s, r)) in cfg.sources.iter().zip(&summary.sources).enumerate() {
        let alpha = s.alpha.unwrap_or(f64::NAN);
        table.push(vec![
            kind.to_string().into(),
            (i + 1).into(),
            s.mu.into(),
            s.gamma().into(),
            s.delay.kind.as_str().into(),
            alpha.into(),
            s.weight.into(),
            r.aaoi.mean.into(),
            r.aaoi.std_error.into(),
            (3.0 * alpha).into(),
            r.lower_bound.into(),
            r.t_bar.mean.into(),
            r.t_bar.std_error.into(),
            r.beta.mean.into(),
            r.delivered.mean.into(),
            r.mean_wait.mean.into(),
            r.mean_system_time.mean.into(),
            r.inter_pick.mean.into(),
            summary.wsaaoi.mean.into(),
            summary.wsaaoi.std_error.into(),
            summary.busy_fraction.mean.into(),
            summary.idle_lock_fraction.mean.into(),
            summary.throughput.mean.into(),
            summary.throughput.std_error.into(),
            summary.replications.into(),
            summary.seed.into(),
            summary.horizon.into(),
        ]);
    }
    table
}
