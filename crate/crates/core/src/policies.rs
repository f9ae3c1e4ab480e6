//! Scheduling policies: the randomized picker, its marked-packet variant,
//! round-robin and single-source threshold-wait rules.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::model::{RandomStream, SystemConfig};
use crate::sim::{self, DecisionContext, PacketChoice, Policy, PolicyDecision, SimError};
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("invalid pick probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("thresholds must be finite and nonnegative (got {0})")]
    InvalidThreshold(f64),
    #[error("expected {expected} marking thresholds, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("threshold search needs a single generate-at-will source")]
    NotSingleGenerateAtWill,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Samples a source index from a fixed probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PickSampler {
    p: Vec<f64>,
    cumulative: Vec<f64>,
}

impl PickSampler {
    pub fn new(p: Vec<f64>) -> Result<Self, PolicyError> {
        if p.is_empty() {
            return Err(PolicyError::InvalidProbabilities("empty vector".into()));
        }
        if let Some(x) = p.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
            return Err(PolicyError::InvalidProbabilities(format!("entry {x} is not a probability")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PolicyError::InvalidProbabilities(format!("entries sum to {total}")));
        }
        let mut acc = 0.0;
        let cumulative = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Ok(PickSampler { p, cumulative })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn sample(&self, stream: &mut RandomStream) -> usize {
        let u = stream.uniform() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        // guard against rounding in the last bucket and zero-probability tails
        let mut idx = idx.min(self.p.len() - 1);
        while self.p[idx] == 0.0 && idx > 0 {
            idx -= 1;
        }
        idx
    }
}

/// One decision of the randomized policy: pick a source, transmit its newest
/// packet if it has a fresh one, otherwise idle-lock for one of its delays.
pub fn pi_r_decide(ctx: &DecisionContext<'_>, sampler: &PickSampler, stream: &mut RandomStream) -> PolicyDecision {
    let source = sampler.sample(stream);
    if ctx.sources[source].fresh {
        PolicyDecision::Transmit { source, packet: PacketChoice::Latest }
    } else {
        PolicyDecision::IdleLock { source }
    }
}

/// Same as [`pi_r_decide`], but only marked packets are eligible.
pub fn pi_m_decide(ctx: &DecisionContext<'_>, sampler: &PickSampler, stream: &mut RandomStream) -> PolicyDecision {
    let source = sampler.sample(stream);
    if ctx.sources[source].fresh_marked {
        PolicyDecision::Transmit { source, packet: PacketChoice::Marked }
    } else {
        PolicyDecision::IdleLock { source }
    }
}

/// Randomized policy driven by a pick-probability vector.
#[derive(Debug, Clone)]
pub struct RandomizedPolicy {
    sampler: PickSampler,
    stream: RandomStream,
}

impl RandomizedPolicy {
    pub fn new(p: Vec<f64>, stream: RandomStream) -> Result<Self, PolicyError> {
        Ok(RandomizedPolicy { sampler: PickSampler::new(p)?, stream })
    }

    pub fn probabilities(&self) -> &[f64] {
        self.sampler.probabilities()
    }
}

impl Policy for RandomizedPolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> PolicyDecision {
        pi_r_decide(ctx, &self.sampler, &mut self.stream)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkOutcome {
    Marked,
    Discarded,
}

/// Marking rule state for one source: the first packet is marked, later ones
/// only if at least `threshold` after the previously marked generation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkingState {
    threshold: f64,
    last_marked: Option<f64>,
}

impl MarkingState {
    pub fn new(threshold: f64) -> Self {
        MarkingState { threshold, last_marked: None }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn last_marked(&self) -> Option<f64> {
        self.last_marked
    }

    /// Packets must be presented in generation order.
    pub fn mark(&mut self, generation_time: f64) -> MarkOutcome {
        match self.last_marked {
            Some(prev) if generation_time - prev < self.threshold => MarkOutcome::Discarded,
            _ => {
                self.last_marked = Some(generation_time);
                MarkOutcome::Marked
            }
        }
    }
}

pub fn pi_th_mark(state: &mut MarkingState, generation_time: f64) -> MarkOutcome {
    state.mark(generation_time)
}

/// `max(0, t_max - mu)`.
pub fn marking_threshold(t_max: f64, mu: f64) -> f64 {
    (t_max - mu).max(0.0)
}

/// Randomized policy restricted to marked packets.
#[derive(Debug, Clone)]
pub struct MarkedRandomizedPolicy {
    sampler: PickSampler,
    thresholds: Vec<f64>,
    stream: RandomStream,
}

impl MarkedRandomizedPolicy {
    pub fn new(p: Vec<f64>, thresholds: Vec<f64>, stream: RandomStream) -> Result<Self, PolicyError> {
        let sampler = PickSampler::new(p)?;
        if thresholds.len() != sampler.probabilities().len() {
            return Err(PolicyError::ThresholdCount {
                expected: sampler.probabilities().len(),
                got: thresholds.len(),
            });
        }
        if let Some(&t) = thresholds.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return Err(PolicyError::InvalidThreshold(t));
        }
        Ok(MarkedRandomizedPolicy { sampler, thresholds, stream })
    }

    /// Thresholds `max(0, t_max_l - mu_l)`.
    pub fn from_t_max(p: Vec<f64>, t_max: &[f64], mus: &[f64], stream: RandomStream) -> Result<Self, PolicyError> {
        let thresholds = t_max.iter().zip(mus).map(|(&t, &m)| marking_threshold(t, m)).collect();
        Self::new(p, thresholds, stream)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Policy for MarkedRandomizedPolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> PolicyDecision {
        pi_m_decide(ctx, &self.sampler, &mut self.stream)
    }

    fn marking_thresholds(&self) -> Option<&[f64]> {
        Some(&self.thresholds)
    }
}

/// Cyclic policy: waits on the pointed source until it has a fresh packet,
/// transmits it, then moves on. The channel stays free while waiting.
#[derive(Debug, Clone, Default)]
pub struct RoundRobinPolicy {
    pointer: usize,
}

impl RoundRobinPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pointer(&self) -> usize {
        self.pointer
    }
}

pub fn round_robin_decide(ctx: &DecisionContext<'_>, pointer: &mut usize) -> PolicyDecision {
    let source = *pointer;
    if ctx.sources[source].fresh {
        *pointer = (source + 1) % ctx.sources.len();
        PolicyDecision::Transmit { source, packet: PacketChoice::Latest }
    } else {
        PolicyDecision::Wait { until: None }
    }
}

impl Policy for RoundRobinPolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> PolicyDecision {
        round_robin_decide(ctx, &mut self.pointer)
    }
}

/// Single-source rule: transmit when the channel is free and the previously
/// transmitted packet is at least `theta` old. `theta = 0` is zero-wait.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdWaitPolicy {
    theta: f64,
}

impl ThresholdWaitPolicy {
    pub fn new(theta: f64) -> Result<Self, PolicyError> {
        if theta >= 0.0 && theta.is_finite() {
            Ok(ThresholdWaitPolicy { theta })
        } else {
            Err(PolicyError::InvalidThreshold(theta))
        }
    }

    pub fn zero_wait() -> Self {
        ThresholdWaitPolicy { theta: 0.0 }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

impl Policy for ThresholdWaitPolicy {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> PolicyDecision {
        let view = &ctx.sources[0];
        let ready_at = view.last_transmitted_generation.map(|g| g + self.theta);
        match ready_at {
            _ if !view.fresh => PolicyDecision::Wait { until: None },
            Some(t) if ctx.now < t => PolicyDecision::Wait { until: Some(t) },
            _ => PolicyDecision::Transmit { source: 0, packet: PacketChoice::Latest },
        }
    }
}

/// Policy selected by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyKind {
    Randomized,
    Marked,
    RoundRobin,
    ThresholdWait(f64),
    ZeroWait,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Randomized => f.write_str("randomized"),
            PolicyKind::Marked => f.write_str("marked"),
            PolicyKind::RoundRobin => f.write_str("round-robin"),
            PolicyKind::ThresholdWait(t) => write!(f, "threshold-wait({t})"),
            PolicyKind::ZeroWait => f.write_str("zero-wait"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "randomized" => return Ok(PolicyKind::Randomized),
            "marked" => return Ok(PolicyKind::Marked),
            "round-robin" => return Ok(PolicyKind::RoundRobin),
            "zero-wait" => return Ok(PolicyKind::ZeroWait),
            _ => {}
        }
        let arg = s
            .strip_prefix("threshold-wait(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("threshold-wait:"))
            .ok_or_else(|| {
                format!("unknown policy `{s}` (expected randomized | marked | round-robin | threshold-wait(θ) | zero-wait)")
            })?;
        let theta: f64 = arg.trim().parse().map_err(|_| format!("bad threshold `{arg}`"))?;
        if theta >= 0.0 && theta.is_finite() {
            Ok(PolicyKind::ThresholdWait(theta))
        } else {
            Err(format!("threshold must be nonnegative (got {theta})"))
        }
    }
}

/// Result of [`grid_search_threshold`].
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub best_theta: f64,
    pub best: Estimate,
    /// Every candidate with its AAoI estimate, in grid order.
    pub evaluated: Vec<(f64, Estimate)>,
}

impl ThresholdSearch {
    pub fn half_width(&self) -> f64 {
        self.best.half_width()
    }
}

/// `0, gamma/50, ..., 3 gamma`.
pub fn default_threshold_grid(gamma: f64) -> Vec<f64> {
    (0..=150).map(|i| i as f64 * gamma / 50.0).collect()
}

/// Simulates every candidate threshold on a single generate-at-will source
/// (same seeds for every candidate) and returns the one with the lowest mean
/// AAoI.
pub fn grid_search_threshold(cfg: &SystemConfig, thresholds: &[f64]) -> Result<ThresholdSearch, PolicyError> {
    if cfg.sources.len() != 1 || !cfg.sources[0].generate_at_will() {
        return Err(PolicyError::NotSingleGenerateAtWill);
    }
    if thresholds.is_empty() {
        return Err(PolicyError::EmptyGrid);
    }
    let mut evaluated = Vec::with_capacity(thresholds.len());
    for &theta in thresholds {
        let policy = ThresholdWaitPolicy::new(theta)?;
        let runs = sim::replicate(cfg, |_| policy)?;
        let aaoi: Vec<f64> = runs.iter().map(|r| r.sources[0].aaoi).collect();
        evaluated.push((theta, Estimate::from_samples(&aaoi)));
    }
    let (best_theta, best) = evaluated
        .iter()
        .copied()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .expect("grid is nonempty");
    Ok(ThresholdSearch { best_theta, best, evaluated })
}
