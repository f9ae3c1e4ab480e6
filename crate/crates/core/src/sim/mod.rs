//! Discrete-event simulator of N sources sharing one non-preemptive channel.
//!
//! Generation processes are advanced lazily: before each decision epoch every
//! source's Poisson stream is rolled forward to the epoch time, in event
//! order, so the policy sees exactly the packets born at or before the epoch.
//! Only the newest packet of each source is buffered.

pub mod aoi;
pub mod event;

use rayon::prelude::*;
use thiserror::Error;

use crate::model::{
    sample_delay, sample_intergen, validate_config, RandomStream, SourceParams, StreamLabel,
    StreamPurpose, SystemConfig, ValidationReport,
};
use crate::policies::{MarkOutcome, MarkingState};
use crate::stats::{RunningStats, Summary};

pub use aoi::{aoi_integral_segment, AoiAccumulator};
pub use event::{Event, EventKind, LogKind, LogRecord};

/// Which buffered packet a transmission uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketChoice {
    /// Newest generated packet.
    Latest,
    /// Newest packet accepted by the marking rule.
    Marked,
}

/// What the scheduler does at a decision epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyDecision {
    /// Start transmitting a fresh packet of `source`.
    Transmit { source: usize, packet: PacketChoice },
    /// Hold the channel for one delay draw of `source` without delivering.
    IdleLock { source: usize },
    /// Leave the channel free; consult again at the next generation event or
    /// at `until`, whichever comes first.
    Wait { until: Option<f64> },
}

/// Causal per-source information handed to the policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceView {
    /// A packet newer than the last transmitted one is buffered (always true
    /// for generate-at-will sources).
    pub fresh: bool,
    /// Same, restricted to marked packets.
    pub fresh_marked: bool,
    pub age: f64,
    pub last_transmitted_generation: Option<f64>,
    pub generate_at_will: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub now: f64,
    pub sources: &'a [SourceView],
}

/// A causal, non-preemptive scheduling rule. Consulted only while the channel
/// is free. Implementations own their random stream.
pub trait Policy {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> PolicyDecision;

    /// Minimum generation-time gap between marked packets, per source. When
    /// present the simulator runs the marking rule on every generated packet.
    fn marking_thresholds(&self) -> Option<&[f64]> {
        None
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn decide(&mut self, ctx: &DecisionContext<'_>) -> PolicyDecision {
        (**self).decide(ctx)
    }

    fn marking_thresholds(&self) -> Option<&[f64]> {
        (**self).marking_thresholds()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("{0}")]
    InvalidConfig(ValidationReport),
    #[error("policy contract violation at t={time}: {reason}")]
    PolicyContractViolation { time: f64, reason: String },
    #[error("policy supplied {got} marking thresholds for {expected} sources")]
    MarkingMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

/// Mean squared deviation of the gaps between consecutive generation times
/// from their mean.
pub fn empirical_beta(generation_times: &[f64]) -> Result<f64, MetricsError> {
    if generation_times.len() < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: generation_times.len() });
    }
    let mut stats = RunningStats::new();
    for w in generation_times.windows(2) {
        stats.push(w[1] - w[0]);
    }
    Ok(stats.population_variance())
}

/// Statistics of the marked packet sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkedSummary {
    pub count: u64,
    pub mean_gap: f64,
    /// `None` with fewer than two marks.
    pub beta: Option<f64>,
    /// Every gap between consecutive marks is at least the marking threshold.
    pub gaps_respect_threshold: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceResult {
    pub aaoi: f64,
    /// Mean inter-generation time of delivered packets (`NaN` if none).
    pub empirical_t_bar: f64,
    /// Empirical variance of the inter-generation times of delivered packets.
    pub empirical_beta: Option<f64>,
    pub delivered_count: u64,
    /// Mean time from generation to transmission start.
    pub mean_wait: f64,
    /// Mean time from generation to delivery.
    pub mean_system_time: f64,
    /// Decision epochs at which this source was picked (transmit or idle-lock).
    pub picks: u64,
    /// Time between consecutive picks of this source.
    pub inter_pick: Summary,
    pub marked: Option<MarkedSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub sources: Vec<SourceResult>,
    /// Fraction of `[0, horizon]` spent transmitting.
    pub busy_fraction: f64,
    /// Fraction of `[0, horizon]` spent in idle-locks.
    pub idle_lock_fraction: f64,
    pub decision_epochs: u64,
    pub horizon: f64,
    pub seed: u64,
    pub replication: u32,
}

impl SimResult {
    pub fn aaoi(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.aaoi).collect()
    }

    /// `sum w_l aaoi_l`.
    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.sources.iter().zip(weights).map(|(s, w)| w * s.aaoi).sum()
    }
}

struct SourceRuntime<'a> {
    params: &'a SourceParams,
    gen_stream: RandomStream,
    delay_stream: RandomStream,
    /// `INFINITY` for generate-at-will sources.
    next_gen: f64,
    next_gen_seq: u64,
    latest_gen: Option<f64>,
    last_tx_gen: Option<f64>,
    marking: Option<MarkingState>,
    latest_marked: Option<f64>,
    marked_times: Vec<f64>,
    aoi: AoiAccumulator,
    delivered_gens: Vec<f64>,
    wait: RunningStats,
    system_time: RunningStats,
    picks: u64,
    last_pick: Option<f64>,
    inter_pick: RunningStats,
}

impl SourceRuntime<'_> {
    fn fresh(&self) -> bool {
        self.params.generate_at_will() || newer(self.latest_gen, self.last_tx_gen)
    }

    fn fresh_marked(&self) -> bool {
        self.params.generate_at_will() || newer(self.latest_marked, self.last_tx_gen)
    }

    fn record_pick(&mut self, now: f64) {
        self.picks += 1;
        if let Some(prev) = self.last_pick {
            self.inter_pick.push(now - prev);
        }
        self.last_pick = Some(now);
    }
}

fn newer(candidate: Option<f64>, reference: Option<f64>) -> bool {
    match (candidate, reference) {
        (Some(c), Some(r)) => c > r,
        (Some(_), None) => true,
        (None, _) => false,
    }
}

struct Simulator<'a, 'l> {
    sources: Vec<SourceRuntime<'a>>,
    horizon: f64,
    sequence: u64,
    log: Option<&'l mut Vec<LogRecord>>,
}

impl Simulator<'_, '_> {
    fn next_sequence(&mut self) -> u64 {
        self.sequence += 1;
        self.sequence
    }

    /// Processes every generation event with time `<= t`.
    fn advance_generations(&mut self, t: f64) {
        let logging = self.log.is_some();
        let mut batch: Vec<(Event, LogRecord)> = Vec::new();
        for idx in 0..self.sources.len() {
            while self.sources[idx].next_gen <= t {
                let seq = self.next_sequence();
                let s = &mut self.sources[idx];
                let g = s.next_gen;
                let event = Event { time: g, kind: EventKind::Generation, source: Some(idx), sequence: s.next_gen_seq };
                s.latest_gen = Some(g);
                let mut marked = false;
                if let Some(m) = s.marking.as_mut() {
                    if m.mark(g) == MarkOutcome::Marked {
                        s.latest_marked = Some(g);
                        s.marked_times.push(g);
                        marked = true;
                    }
                }
                s.next_gen = g + sample_intergen(s.params.mu, &mut s.gen_stream)
                    .expect("only sources with mu > 0 have a generation process");
                s.next_gen_seq = seq;
                if logging {
                    let age = s.aoi.age_at(g);
                    let rec = |kind| LogRecord { time: g, kind, source: idx, generation_time: Some(g), age_after: age };
                    batch.push((event, rec(LogKind::Generation)));
                    if marked {
                        batch.push((event, rec(LogKind::Mark)));
                    }
                }
            }
        }
        if let Some(log) = self.log.as_deref_mut() {
            // stable: a mark stays right after its generation
            batch.sort_by_key(|a| a.0);
            log.extend(batch.into_iter().map(|(_, r)| r));
        }
    }

    fn push_log(&mut self, rec: LogRecord) {
        if let Some(log) = self.log.as_deref_mut() {
            log.push(rec);
        }
    }

    fn next_generation_event(&self) -> Option<Event> {
        self.sources
            .iter()
            .enumerate()
            .filter(|(_, s)| s.next_gen.is_finite())
            .map(|(i, s)| Event { time: s.next_gen, kind: EventKind::Generation, source: Some(i), sequence: s.next_gen_seq })
            .min()
    }
}

/// Simulates `[0, cfg.horizon]` under `policy` for one replication.
pub fn run(cfg: &SystemConfig, policy: &mut dyn Policy, replication: u32) -> Result<SimResult, SimError> {
    run_inner(cfg, policy, replication, None)
}

/// Same as [`run`], also appending one [`LogRecord`] per event to `log`.
pub fn run_logged(
    cfg: &SystemConfig,
    policy: &mut dyn Policy,
    replication: u32,
    log: &mut Vec<LogRecord>,
) -> Result<SimResult, SimError> {
    run_inner(cfg, policy, replication, Some(log))
}

fn run_inner(
    cfg: &SystemConfig,
    policy: &mut dyn Policy,
    replication: u32,
    log: Option<&mut Vec<LogRecord>>,
) -> Result<SimResult, SimError> {
    validate_config(cfg.clone()).map_err(SimError::InvalidConfig)?;
    let n = cfg.sources.len();
    let thresholds = policy.marking_thresholds().map(<[f64]>::to_vec);
    if let Some(t) = &thresholds {
        if t.len() != n {
            return Err(SimError::MarkingMismatch { expected: n, got: t.len() });
        }
    }

    let mut sim = Simulator { sources: Vec::with_capacity(n), horizon: cfg.horizon, sequence: 0, log };
    for (idx, params) in cfg.sources.iter().enumerate() {
        let mut gen_stream = RandomStream::new(cfg.seed, StreamLabel::source(replication, idx, StreamPurpose::Generation));
        let next_gen = if params.generate_at_will() {
            f64::INFINITY
        } else {
            sample_intergen(params.mu, &mut gen_stream).expect("mu > 0")
        };
        let seq = sim.next_sequence();
        sim.sources.push(SourceRuntime {
            params,
            gen_stream,
            delay_stream: RandomStream::new(cfg.seed, StreamLabel::source(replication, idx, StreamPurpose::Delay)),
            next_gen,
            next_gen_seq: seq,
            latest_gen: None,
            last_tx_gen: None,
            marking: thresholds
                .as_ref()
                .filter(|_| !params.generate_at_will())
                .map(|t| MarkingState::new(t[idx])),
            latest_marked: None,
            marked_times: Vec::new(),
            aoi: AoiAccumulator::new(),
            delivered_gens: Vec::new(),
            wait: RunningStats::new(),
            system_time: RunningStats::new(),
            picks: 0,
            last_pick: None,
            inter_pick: RunningStats::new(),
        });
    }

    let horizon = sim.horizon;
    let mut now = 0.0;
    let mut busy = 0.0;
    let mut idle = 0.0;
    let mut epochs = 0u64;
    let mut views = Vec::with_capacity(n);

    loop {
        sim.advance_generations(now);
        views.clear();
        views.extend(sim.sources.iter().map(|s| SourceView {
            fresh: s.fresh(),
            fresh_marked: s.fresh_marked(),
            age: s.aoi.age_at(now),
            last_transmitted_generation: s.last_tx_gen,
            generate_at_will: s.params.generate_at_will(),
        }));
        epochs += 1;
        let decision = policy.decide(&DecisionContext { now, sources: &views });
        let violation = |reason: String| SimError::PolicyContractViolation { time: now, reason };

        match decision {
            PolicyDecision::Transmit { source, packet } => {
                let s = sim.sources.get_mut(source).ok_or_else(|| violation(format!("no source {source}")))?;
                let generation = if s.params.generate_at_will() {
                    now
                } else {
                    let (ok, g) = match packet {
                        PacketChoice::Latest => (s.fresh(), s.latest_gen),
                        PacketChoice::Marked => (s.fresh_marked(), s.latest_marked),
                    };
                    match (ok, g) {
                        (true, Some(g)) => g,
                        _ => return Err(violation(format!("source {source} has no fresh {packet:?} packet"))),
                    }
                };
                s.record_pick(now);
                s.last_tx_gen = Some(generation);
                let d = sample_delay(&s.params.delay, &mut s.delay_stream);
                let age = s.aoi.age_at(now);
                sim.push_log(LogRecord { time: now, kind: LogKind::TransmitStart, source, generation_time: Some(generation), age_after: age });
                let end = now + d;
                if end > horizon {
                    busy += horizon - now;
                    break;
                }
                busy += d;
                let start = now;
                now = end;
                sim.advance_generations(now);
                let s = &mut sim.sources[source];
                let age = s.aoi.deliver(generation, now);
                s.delivered_gens.push(generation);
                s.wait.push(start - generation);
                s.system_time.push(now - generation);
                sim.push_log(LogRecord { time: now, kind: LogKind::Delivery, source, generation_time: Some(generation), age_after: age });
            }
            PolicyDecision::IdleLock { source } => {
                let s = sim.sources.get_mut(source).ok_or_else(|| violation(format!("no source {source}")))?;
                s.record_pick(now);
                let d = sample_delay(&s.params.delay, &mut s.delay_stream);
                let age = s.aoi.age_at(now);
                sim.push_log(LogRecord { time: now, kind: LogKind::IdleLockStart, source, generation_time: None, age_after: age });
                let end = now + d;
                if end > horizon {
                    idle += horizon - now;
                    break;
                }
                idle += d;
                now = end;
                sim.advance_generations(now);
                let age = sim.sources[source].aoi.age_at(now);
                sim.push_log(LogRecord { time: now, kind: LogKind::IdleLockEnd, source, generation_time: None, age_after: age });
            }
            PolicyDecision::Wait { until } => {
                let wake = match until {
                    Some(t) if t <= now || t.is_nan() => {
                        return Err(violation(format!("wait deadline {t} is not in the future")));
                    }
                    Some(t) => Some(Event { time: t, kind: EventKind::Wakeup, source: None, sequence: 0 }),
                    None => None,
                };
                let next = match (wake, sim.next_generation_event()) {
                    (Some(a), Some(b)) => a.min(b),
                    (a, b) => match a.or(b) {
                        Some(e) => e,
                        // nothing can ever happen again
                        None => break,
                    },
                };
                if next.time > horizon {
                    break;
                }
                now = next.time;
            }
        }
    }

    let sources = sim
        .sources
        .into_iter()
        .map(|mut s| {
            let aaoi = s.aoi.close(horizon);
            let delivered = s.delivered_gens.len() as u64;
            let marked = s.marking.as_ref().map(|m| MarkedSummary {
                count: s.marked_times.len() as u64,
                mean_gap: if s.marked_times.len() >= 2 {
                    (s.marked_times[s.marked_times.len() - 1] - s.marked_times[0]) / (s.marked_times.len() - 1) as f64
                } else {
                    f64::NAN
                },
                beta: empirical_beta(&s.marked_times).ok(),
                gaps_respect_threshold: s
                    .marked_times
                    .windows(2)
                    .all(|w| w[1] - w[0] >= m.threshold()),
            });
            SourceResult {
                aaoi,
                empirical_t_bar: s.delivered_gens.last().map_or(f64::NAN, |g| g / delivered as f64),
                empirical_beta: empirical_beta(&s.delivered_gens).ok(),
                delivered_count: delivered,
                mean_wait: s.wait.mean(),
                mean_system_time: s.system_time.mean(),
                picks: s.picks,
                inter_pick: s.inter_pick.summary(),
                marked,
            }
        })
        .collect();

    Ok(SimResult {
        sources,
        busy_fraction: busy / horizon,
        idle_lock_fraction: idle / horizon,
        decision_epochs: epochs,
        horizon,
        seed: cfg.seed,
        replication,
    })
}

/// Runs `cfg.replications` independent replications, building a fresh policy
/// for each from its replication index. Results come back in replication order.
pub fn replicate<P, F>(cfg: &SystemConfig, make_policy: F) -> Result<Vec<SimResult>, SimError>
where
    P: Policy,
    F: Fn(u32) -> P + Sync,
{
    (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            let mut policy = make_policy(rep);
            run(cfg, &mut policy, rep)
        })
        .collect()
}

/// Random stream a policy should own for replication `replication`.
pub fn policy_stream(seed: u64, replication: u32) -> RandomStream {
    RandomStream::new(seed, StreamLabel::global(replication, StreamPurpose::Policy))
}
