//! Parameter sweeps behind the figure analogs, plus user-defined sweeps.
//!
//! Every point of a sweep reuses the same master seed, so neighbouring points
//! see common random numbers and trends are not masked by seed noise.

use std::fmt;
use std::str::FromStr;

use crate::capacity::{aaoi_lower_bound, aaoi_upper_bound_pi_r, check_sources, pick_probabilities, t_max};
use crate::model::{validate_config, DelayKind, DelaySpec, SourceParams, SystemConfig};
use crate::policies::{default_threshold_grid, grid_search_threshold, PolicyKind};
use crate::solver::solve_relaxation;
use crate::stats::Estimate;

use super::report::{Cell, Table};
use super::{summarize, ExperimentError, PolicyPlan};

/// Mean inter-generation times of the five-source scenario.
pub const FIVE_SOURCE_MU: [f64; 5] = [2.0, 4.0, 4.0, 8.0, 10.0];
/// Mean delays of the five-source scenario.
pub const FIVE_SOURCE_GAMMA: [f64; 5] = [3.0, 3.0, 6.0, 2.0, 4.0];
/// Targets of sources 2..5 in the alpha sweep.
pub const FIVE_SOURCE_ALPHA_TAIL: [f64; 4] = [10.0, 15.0, 20.0, 20.0];
pub const FIVE_SOURCE_WEIGHTS: [f64; 5] = [0.8, 0.8, 0.2, 0.2, 0.4];

pub const FIG2_ALPHA: f64 = 40.0;
pub const FIG2_MU: f64 = 4.0;
pub const FIG2_GAMMAS: [f64; 2] = [2.0, 8.0];
pub const FIG2_MAX_N: usize = 20;
pub const FIG3_POINTS: usize = 12;
pub const FIG3_RANGE: (f64, f64) = (9.2, 20.0);
pub const FIG4_SCALES: [f64; 3] = [0.5, 1.0, 2.0];
pub const FIG5_GAMMAS: [f64; 3] = [1.0, 2.0, 4.0];
pub const SWEEP_DELAYS: [DelayKind; 2] = [DelayKind::Exponential, DelayKind::Uniform];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub horizon: f64,
    pub replications: u32,
    pub seed: u64,
    /// Horizon of each threshold-grid candidate; defaults to a tenth of
    /// `horizon`. The winner is re-simulated at the full horizon.
    pub search_horizon: Option<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { horizon: 1e6, replications: 5, seed: 1, search_horizon: None }
    }
}

impl SweepOptions {
    fn config(&self, sources: Vec<SourceParams>) -> Result<SystemConfig, ExperimentError> {
        let cfg = SystemConfig::new(sources, self.horizon, self.seed, self.replications);
        validate_config(cfg).map_err(|r| ExperimentError::Invalid(r.to_string()))
    }

    fn run_columns(&self) -> [Cell; 3] {
        [self.replications.into(), self.seed.into(), self.horizon.into()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepName {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Custom,
}

impl SweepName {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepName::Fig2 => "fig2",
            SweepName::Fig3 => "fig3",
            SweepName::Fig4 => "fig4",
            SweepName::Fig5 => "fig5",
            SweepName::Custom => "custom",
        }
    }
}

impl fmt::Display for SweepName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig2" => Ok(SweepName::Fig2),
            "fig3" => Ok(SweepName::Fig3),
            "fig4" => Ok(SweepName::Fig4),
            "fig5" => Ok(SweepName::Fig5),
            "custom" => Ok(SweepName::Custom),
            other => Err(format!("unknown sweep `{other}` (expected fig2 | fig3 | fig4 | fig5 | custom)")),
        }
    }
}

/// A per-source field that a custom sweep overrides. Indices are 1-based in
/// the textual form (`alpha:1` is the first source).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweptParameter {
    Mu(usize),
    Gamma(usize),
    Alpha(usize),
    Weight(usize),
}

impl SweptParameter {
    pub fn source(self) -> usize {
        match self {
            SweptParameter::Mu(i) | SweptParameter::Gamma(i) | SweptParameter::Alpha(i) | SweptParameter::Weight(i) => i,
        }
    }

    fn apply(self, cfg: &mut SystemConfig, value: f64) {
        let s = &mut cfg.sources[self.source()];
        match self {
            SweptParameter::Mu(_) => s.mu = value,
            SweptParameter::Gamma(_) => s.delay.mean = value,
            SweptParameter::Alpha(_) => s.alpha = Some(value),
            SweptParameter::Weight(_) => s.weight = value,
        }
    }
}

impl fmt::Display for SweptParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SweptParameter::Mu(_) => "mu",
            SweptParameter::Gamma(_) => "gamma",
            SweptParameter::Alpha(_) => "alpha",
            SweptParameter::Weight(_) => "weight",
        };
        write!(f, "{name}:{}", self.source() + 1)
    }
}

impl FromStr for SweptParameter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, idx) = s.split_once(':').ok_or_else(|| format!("expected <field>:<source>, got `{s}`"))?;
        let idx: usize = idx.parse().map_err(|_| format!("bad source index in `{s}`"))?;
        if idx == 0 {
            return Err("source indices start at 1".into());
        }
        let i = idx - 1;
        match name {
            "mu" => Ok(SweptParameter::Mu(i)),
            "gamma" => Ok(SweptParameter::Gamma(i)),
            "alpha" => Ok(SweptParameter::Alpha(i)),
            "weight" => Ok(SweptParameter::Weight(i)),
            other => Err(format!("unknown field `{other}` (expected mu | gamma | alpha | weight)")),
        }
    }
}

/// A user-defined one-parameter sweep over a base scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: SweepName,
    pub parameter: SweptParameter,
    pub values: Vec<f64>,
    pub base: SystemConfig,
    pub replications: u32,
}

impl SweepSpec {
    /// `values` must be nonempty and strictly increasing.
    pub fn custom(parameter: SweptParameter, values: Vec<f64>, base: SystemConfig) -> Result<Self, ExperimentError> {
        if values.is_empty() {
            return Err(ExperimentError::Invalid("sweep needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ExperimentError::Invalid("sweep values must be finite and strictly increasing".into()));
        }
        if parameter.source() >= base.len() {
            return Err(ExperimentError::Invalid(format!(
                "`{parameter}` refers to a missing source (config has {})",
                base.len()
            )));
        }
        let replications = base.replications;
        Ok(SweepSpec { name: SweepName::Custom, parameter, values, base, replications })
    }

    pub fn point(&self, value: f64) -> Result<SystemConfig, ExperimentError> {
        let mut cfg = self.base.clone();
        cfg.replications = self.replications;
        self.parameter.apply(&mut cfg, value);
        validate_config(cfg).map_err(|r| ExperimentError::Invalid(r.to_string()))
    }
}

fn pi_r(cfg: &SystemConfig) -> Result<super::SimulationSummary, ExperimentError> {
    let runs = PolicyPlan::new(PolicyKind::Randomized, cfg)?.replicate(cfg)?;
    Ok(summarize(cfg, &runs))
}

fn ensure_nonempty<T>(what: &str, xs: &[T]) -> Result<(), ExperimentError> {
    if xs.is_empty() {
        Err(ExperimentError::Invalid(format!("{what} must not be empty")))
    } else {
        Ok(())
    }
}

pub fn fig2_config(n: usize, delay: DelayKind, gamma: f64, opts: &SweepOptions) -> Result<SystemConfig, ExperimentError> {
    let source = SourceParams::new(FIG2_MU, DelaySpec { kind: delay, mean: gamma }).with_alpha(FIG2_ALPHA);
    opts.config(vec![source; n])
}

pub const FIG2_COLUMNS: [&str; 16] = [
    "sweep", "delay", "gamma", "n", "aaoi_1", "aaoi_1_se", "alpha_1", "bound_3alpha_1", "lower_bound_1",
    "upper_bound_1", "load", "throughput", "mean_inter_pick_1", "replications", "seed", "horizon",
];

/// Identical sources under the randomized policy, one row per
/// `(delay, gamma, n)`. The targets overload the channel for large `n`; the
/// policy still runs with `p = 1/n` and `load` reports the overload.
pub fn fig2_table(
    opts: &SweepOptions,
    delays: &[DelayKind],
    gammas: &[f64],
    ns: &[usize],
) -> Result<Table, ExperimentError> {
    ensure_nonempty("delays", delays)?;
    ensure_nonempty("gammas", gammas)?;
    ensure_nonempty("n values", ns)?;
    let mut table = Table::new(FIG2_COLUMNS);
    for &delay in delays {
        for &gamma in gammas {
            for &n in ns {
                let cfg = fig2_config(n, delay, gamma, opts)?;
                let report = check_sources(&cfg.sources)?;
                let tm = t_max(FIG2_ALPHA, gamma, FIG2_MU)?;
                let s = pi_r(&cfg)?;
                let src = &s.sources[0];
                let mut row: Vec<Cell> = vec![
                    "fig2".into(),
                    delay.as_str().into(),
                    gamma.into(),
                    n.into(),
                    src.aaoi.mean.into(),
                    src.aaoi.std_error.into(),
                    FIG2_ALPHA.into(),
                    (3.0 * FIG2_ALPHA).into(),
                    src.lower_bound.into(),
                    aaoi_upper_bound_pi_r(tm, FIG2_MU, gamma).into(),
                    report.load.into(),
                    s.throughput.mean.into(),
                    src.inter_pick.mean.into(),
                ];
                row.extend(opts.run_columns());
                table.push(row);
            }
        }
    }
    Ok(table)
}

pub fn sweep_fig2(opts: &SweepOptions) -> Result<Table, ExperimentError> {
    let ns: Vec<usize> = (1..=FIG2_MAX_N).collect();
    fig2_table(opts, &SWEEP_DELAYS, &FIG2_GAMMAS, &ns)
}

/// `points` evenly spaced values over `range`, endpoints included.
pub fn linspace(range: (f64, f64), points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![range.0],
        _ => (0..points)
            .map(|i| range.0 + (range.1 - range.0) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

pub fn fig3_config(alpha1: f64, opts: &SweepOptions) -> Result<SystemConfig, ExperimentError> {
    let sources = (0..5)
        .map(|i| {
            let alpha = if i == 0 { alpha1 } else { FIVE_SOURCE_ALPHA_TAIL[i - 1] };
            SourceParams::new(FIVE_SOURCE_MU[i], DelaySpec::exponential(FIVE_SOURCE_GAMMA[i])).with_alpha(alpha)
        })
        .collect();
    opts.config(sources)
}

pub const FIG3_COLUMNS: [&str; 15] = [
    "alpha1", "aaoi_1", "aaoi_1_se", "bound_3alpha_1", "aaoi_3", "aaoi_3_se", "bound_3alpha_3", "p_1", "p_3",
    "upper_bound_1", "upper_bound_3", "load", "replications", "seed", "horizon",
];

/// Five sources with exponential delays; only the first target moves.
pub fn fig3_table(opts: &SweepOptions, alpha1: &[f64]) -> Result<Table, ExperimentError> {
    ensure_nonempty("alpha1 values", alpha1)?;
    let mut table = Table::new(FIG3_COLUMNS);
    for &a1 in alpha1 {
        let cfg = fig3_config(a1, opts)?;
        let report = check_sources(&cfg.sources)?;
        if !report.feasible {
            return Err(ExperimentError::Invalid(format!("alpha1 = {a1} fails the capacity test (load {})", report.load)));
        }
        let tm = report.t_max_values().expect("feasible report has every t_max");
        let p = pick_probabilities(&tm);
        let s = pi_r(&cfg)?;
        let ub = |i: usize| aaoi_upper_bound_pi_r(tm[i], cfg.sources[i].mu, cfg.sources[i].gamma());
        let alpha3 = FIVE_SOURCE_ALPHA_TAIL[1];
        let mut row: Vec<Cell> = vec![
            a1.into(),
            s.sources[0].aaoi.mean.into(),
            s.sources[0].aaoi.std_error.into(),
            (3.0 * a1).into(),
            s.sources[2].aaoi.mean.into(),
            s.sources[2].aaoi.std_error.into(),
            (3.0 * alpha3).into(),
            p[0].into(),
            p[2].into(),
            ub(0).into(),
            ub(2).into(),
            report.load.into(),
        ];
        row.extend(opts.run_columns());
        table.push(row);
    }
    Ok(table)
}

pub fn sweep_fig3(opts: &SweepOptions) -> Result<Table, ExperimentError> {
    fig3_table(opts, &linspace(FIG3_RANGE, FIG3_POINTS))
}

pub fn fig4_config(
    delay: DelayKind,
    mu_scale: f64,
    gamma_scale: f64,
    opts: &SweepOptions,
) -> Result<SystemConfig, ExperimentError> {
    let sources = (0..5)
        .map(|i| {
            SourceParams::new(mu_scale * FIVE_SOURCE_MU[i], DelaySpec { kind: delay, mean: gamma_scale * FIVE_SOURCE_GAMMA[i] })
                .with_weight(FIVE_SOURCE_WEIGHTS[i])
        })
        .collect();
    opts.config(sources)
}

pub const FIG4_COLUMNS: [&str; 12] = [
    "delay", "mu_scale", "gamma_scale", "wsaaoi", "wsaaoi_se", "lower_bound", "bound_3lower", "multiplier",
    "solver_load", "replications", "seed", "horizon",
];

/// Weighted five-source scenario under the randomized policy driven by the
/// relaxation's probabilities.
pub fn fig4_table(
    opts: &SweepOptions,
    delays: &[DelayKind],
    mu_scales: &[f64],
    gamma_scales: &[f64],
) -> Result<Table, ExperimentError> {
    ensure_nonempty("delays", delays)?;
    ensure_nonempty("mu scales", mu_scales)?;
    ensure_nonempty("gamma scales", gamma_scales)?;
    let mut table = Table::new(FIG4_COLUMNS);
    for &delay in delays {
        for &ms in mu_scales {
            for &gs in gamma_scales {
                let cfg = fig4_config(delay, ms, gs, opts)?;
                let sol = solve_relaxation(&cfg.sources, &cfg.weights())?;
                let s = pi_r(&cfg)?;
                let mut row: Vec<Cell> = vec![
                    delay.as_str().into(),
                    ms.into(),
                    gs.into(),
                    s.wsaaoi.mean.into(),
                    s.wsaaoi.std_error.into(),
                    sol.objective.into(),
                    (3.0 * sol.objective).into(),
                    sol.multiplier.into(),
                    sol.load.into(),
                ];
                row.extend(opts.run_columns());
                table.push(row);
            }
        }
    }
    Ok(table)
}

pub fn sweep_fig4(opts: &SweepOptions) -> Result<Table, ExperimentError> {
    fig4_table(opts, &SWEEP_DELAYS, &FIG4_SCALES, &FIG4_SCALES)
}

pub fn fig5_config(delay: DelayKind, gamma: f64, opts: &SweepOptions) -> Result<SystemConfig, ExperimentError> {
    opts.config(vec![SourceParams::new(0.0, DelaySpec { kind: delay, mean: gamma })])
}

pub const FIG5_COLUMNS: [&str; 16] = [
    "delay", "gamma", "spacing_threshold", "aaoi_spacing", "aaoi_spacing_se", "best_threshold", "aaoi_threshold",
    "aaoi_threshold_se", "aaoi_zero_wait", "aaoi_zero_wait_se", "relative_gap", "search_horizon", "grid_points",
    "replications", "seed", "horizon",
];

fn single_source_aaoi(cfg: &SystemConfig, kind: PolicyKind) -> Result<Estimate, ExperimentError> {
    let runs = PolicyPlan::new(kind, cfg)?.replicate(cfg)?;
    Ok(Estimate::from_samples(&runs.iter().map(|r| r.sources[0].aaoi).collect::<Vec<_>>()))
}

/// One generate-at-will source: the spacing policy (wait until the last
/// transmitted update is `T^o` old, with `T^o` from the relaxation) against the
/// best threshold on the default grid and against zero-wait.
pub fn fig5_table(opts: &SweepOptions, delays: &[DelayKind], gammas: &[f64]) -> Result<Table, ExperimentError> {
    ensure_nonempty("delays", delays)?;
    ensure_nonempty("gammas", gammas)?;
    let search_horizon = opts.search_horizon.unwrap_or(opts.horizon / 10.0);
    let mut table = Table::new(FIG5_COLUMNS);
    for &delay in delays {
        for &gamma in gammas {
            let cfg = fig5_config(delay, gamma, opts)?;
            let spacing = solve_relaxation(&cfg.sources, &cfg.weights())?.t_o[0];
            let aaoi_spacing = single_source_aaoi(&cfg, PolicyKind::ThresholdWait(spacing))?;

            let mut search_cfg = cfg.clone();
            search_cfg.horizon = search_horizon;
            let grid = default_threshold_grid(gamma);
            let search = grid_search_threshold(&search_cfg, &grid)?;
            let aaoi_best = single_source_aaoi(&cfg, PolicyKind::ThresholdWait(search.best_theta))?;
            let aaoi_zero = single_source_aaoi(&cfg, PolicyKind::ZeroWait)?;

            let mut row: Vec<Cell> = vec![
                delay.as_str().into(),
                gamma.into(),
                spacing.into(),
                aaoi_spacing.mean.into(),
                aaoi_spacing.std_error.into(),
                search.best_theta.into(),
                aaoi_best.mean.into(),
                aaoi_best.std_error.into(),
                aaoi_zero.mean.into(),
                aaoi_zero.std_error.into(),
                (aaoi_spacing.mean / aaoi_best.mean - 1.0).into(),
                search_horizon.into(),
                grid.len().into(),
            ];
            row.extend(opts.run_columns());
            table.push(row);
        }
    }
    Ok(table)
}

pub fn sweep_fig5(opts: &SweepOptions) -> Result<Table, ExperimentError> {
    fig5_table(opts, &SWEEP_DELAYS, &FIG5_GAMMAS)
}

/// Runs `spec` under `kind`, one row per value.
pub fn sweep_custom(spec: &SweepSpec, kind: PolicyKind) -> Result<Table, ExperimentError> {
    let n = spec.base.len();
    let mut header = vec!["parameter".to_string(), "value".to_string()];
    for i in 1..=n {
        header.push(format!("aaoi_{i}"));
        header.push(format!("aaoi_{i}_se"));
        header.push(format!("lower_bound_{i}"));
    }
    header.extend(["wsaaoi", "wsaaoi_se", "load", "policy", "replications", "seed", "horizon"].map(String::from));
    let mut table = Table::new(header);
    for &value in &spec.values {
        let cfg = spec.point(value)?;
        let runs = PolicyPlan::new(kind, &cfg)?.replicate(&cfg)?;
        let s = summarize(&cfg, &runs);
        let load = match check_sources(&cfg.sources) {
            Ok(r) => r.load,
            Err(_) => f64::NAN,
        };
        let mut row: Vec<Cell> = vec![spec.parameter.to_string().into(), value.into()];
        for (src, p) in s.sources.iter().zip(&cfg.sources) {
            row.push(src.aaoi.mean.into());
            row.push(src.aaoi.std_error.into());
            row.push(aaoi_lower_bound(src.t_bar.mean, p.mu, p.gamma()).into());
        }
        row.extend([
            s.wsaaoi.mean.into(),
            s.wsaaoi.std_error.into(),
            load.into(),
            kind.to_string().into(),
            cfg.replications.into(),
            cfg.seed.into(),
            cfg.horizon.into(),
        ]);
        table.push(row);
    }
    Ok(table)
}

/// Runs one of the predefined figure sweeps.
pub fn run_sweep(name: SweepName, opts: &SweepOptions) -> Result<Table, ExperimentError> {
    match name {
        SweepName::Fig2 => sweep_fig2(opts),
        SweepName::Fig3 => sweep_fig3(opts),
        SweepName::Fig4 => sweep_fig4(opts),
        SweepName::Fig5 => sweep_fig5(opts),
        SweepName::Custom => Err(ExperimentError::Invalid("custom sweeps need a parameter and values".into())),
    }
}
