//! Domain types shared by every other module: delay distributions, source
//! parameters, scenario configuration and deterministic random streams.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Family of the per-packet transmission delay distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayKind {
    Exponential,
    /// Uniform on `[0, 2 * mean]`.
    Uniform,
    Deterministic,
}

impl DelayKind {
    pub const ALL: [DelayKind; 3] = [
        DelayKind::Exponential,
        DelayKind::Uniform,
        DelayKind::Deterministic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DelayKind::Exponential => "exponential",
            DelayKind::Uniform => "uniform",
            DelayKind::Deterministic => "deterministic",
        }
    }
}

impl fmt::Display for DelayKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DelayKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" | "exp" => Ok(DelayKind::Exponential),
            "uniform" => Ok(DelayKind::Uniform),
            "deterministic" | "det" => Ok(DelayKind::Deterministic),
            other => Err(format!("unknown delay kind `{other}`")),
        }
    }
}

/// Transmission delay distribution `D` with mean `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    pub kind: DelayKind,
    pub mean: f64,
}

impl DelaySpec {
    pub fn new(kind: DelayKind, mean: f64) -> Result<Self, ConfigError> {
        let spec = DelaySpec { kind, mean };
        spec.check(0)?;
        Ok(spec)
    }

    pub fn exponential(mean: f64) -> Self {
        DelaySpec { kind: DelayKind::Exponential, mean }
    }

    pub fn uniform(mean: f64) -> Self {
        DelaySpec { kind: DelayKind::Uniform, mean }
    }

    pub fn deterministic(mean: f64) -> Self {
        DelaySpec { kind: DelayKind::Deterministic, mean }
    }

    fn check(&self, source: usize) -> Result<(), ConfigError> {
        if self.mean > 0.0 && self.mean.is_finite() {
            Ok(())
        } else {
            Err(ConfigError::NonPositiveMean { index: source, value: self.mean })
        }
    }

    /// Second moment `E[d^2]` of the distribution.
    pub fn second_moment(&self) -> f64 {
        let m = self.mean;
        match self.kind {
            DelayKind::Exponential => 2.0 * m * m,
            DelayKind::Uniform => 4.0 * m * m / 3.0,
            DelayKind::Deterministic => m * m,
        }
    }
}

/// One i.i.d. draw from `spec`.
pub fn sample_delay(spec: &DelaySpec, stream: &mut RandomStream) -> f64 {
    match spec.kind {
        DelayKind::Exponential => spec.mean * stream.standard_exponential(),
        DelayKind::Uniform => 2.0 * spec.mean * stream.uniform(),
        DelayKind::Deterministic => spec.mean,
    }
}

/// One exponential inter-generation time with mean `mu`.
pub fn sample_intergen(mu: f64, stream: &mut RandomStream) -> Result<f64, ModelError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ModelError::NonPositiveIntergen(mu));
    }
    Ok(mu * stream.standard_exponential())
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("inter-generation sampling needs mu > 0 (got {0}); generate-at-will sources have no generation stream")]
    NonPositiveIntergen(f64),
}

fn default_weight() -> f64 {
    1.0
}

/// Parameters of one source.
///
/// `mu == 0` encodes a generate-at-will source: a fresh packet exists at any
/// instant and is created exactly when its transmission starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceParams {
    pub mu: f64,
    pub delay: DelaySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_weight")]
    pub weight: f64,
}

impl SourceParams {
    pub fn new(mu: f64, delay: DelaySpec) -> Self {
        SourceParams { mu, delay, alpha: None, weight: 1.0 }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Mean transmission delay.
    #[inline]
    pub fn gamma(&self) -> f64 {
        self.delay.mean
    }

    #[inline]
    pub fn generate_at_will(&self) -> bool {
        self.mu == 0.0
    }
}

/// A complete N-source scenario plus the horizon and seed plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub sources: Vec<SourceParams>,
    pub horizon: f64,
    pub seed: u64,
    pub replications: u32,
}

impl SystemConfig {
    pub fn new(sources: Vec<SourceParams>, horizon: f64, seed: u64, replications: u32) -> Self {
        SystemConfig { sources, horizon, seed, replications }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.sources.iter().map(SourceParams::gamma).collect()
    }

    pub fn mus(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.mu).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.weight).collect()
    }

    /// Alpha targets, if every source carries one.
    pub fn alphas(&self) -> Option<Vec<f64>> {
        self.sources.iter().map(|s| s.alpha).collect()
    }
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("sources[{index}].delay.mean must be positive and finite (got {value})")]
    NonPositiveMean { index: usize, value: f64 },
    #[error("sources[{index}].mu must be nonnegative and finite (got {value})")]
    NegativeMu { index: usize, value: f64 },
    #[error("sources[{index}].alpha must be positive and finite (got {value})")]
    NonPositiveAlpha { index: usize, value: f64 },
    #[error("sources[{index}].weight must be positive and finite (got {value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("sources must contain at least one source")]
    EmptySources,
    #[error("horizon must be positive and finite (got {0})")]
    NonPositiveHorizon(f64),
    #[error("replications must be at least 1")]
    ZeroReplications,
}

/// Every invariant violation found in a config.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<ConfigError>,
}

impl ValidationReport {
    pub fn contains(&self, pred: impl Fn(&ConfigError) -> bool) -> bool {
        self.errors.iter().any(pred)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config ({} error(s))", self.errors.len())?;
        for e in &self.errors {
            write!(f, "\n  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationReport {}

/// Per-source invariant checks, shared by [`validate_config`] and the
/// analytical entry points that take bare source lists.
pub fn validate_sources(sources: &[SourceParams]) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    if sources.is_empty() {
        errors.push(ConfigError::EmptySources);
    }
    for (i, s) in sources.iter().enumerate() {
        if !(s.mu >= 0.0 && s.mu.is_finite()) {
            errors.push(ConfigError::NegativeMu { index: i, value: s.mu });
        }
        if let Err(e) = s.delay.check(i) {
            errors.push(e);
        }
        if let Some(a) = s.alpha {
            if !(a > 0.0 && a.is_finite()) {
                errors.push(ConfigError::NonPositiveAlpha { index: i, value: a });
            }
        }
        if !(s.weight > 0.0 && s.weight.is_finite()) {
            errors.push(ConfigError::NonPositiveWeight { index: i, value: s.weight });
        }
    }
    errors
}

/// Returns the config iff every type invariant holds.
pub fn validate_config(cfg: SystemConfig) -> Result<SystemConfig, ValidationReport> {
    let mut errors = validate_sources(&cfg.sources);
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        errors.push(ConfigError::NonPositiveHorizon(cfg.horizon));
    }
    if cfg.replications == 0 {
        errors.push(ConfigError::ZeroReplications);
    }
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ValidationReport { errors })
    }
}

/// What a stream is used for. Part of the stream label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamPurpose {
    Generation,
    Delay,
    Policy,
    Validation,
}

impl StreamPurpose {
    fn code(self) -> u64 {
        match self {
            StreamPurpose::Generation => 1,
            StreamPurpose::Delay => 2,
            StreamPurpose::Policy => 3,
            StreamPurpose::Validation => 4,
        }
    }
}

/// Identifies one stream under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamLabel {
    pub replication: u32,
    /// `None` for streams not tied to a source (policy, validation).
    pub source: Option<u32>,
    pub purpose: StreamPurpose,
}

impl StreamLabel {
    const NO_SOURCE: u64 = (1 << 28) - 1;

    pub fn source(replication: u32, source: usize, purpose: StreamPurpose) -> Self {
        assert!((source as u64) < Self::NO_SOURCE, "source index out of range");
        StreamLabel { replication, source: Some(source as u32), purpose }
    }

    pub fn global(replication: u32, purpose: StreamPurpose) -> Self {
        StreamLabel { replication, source: None, purpose }
    }

    /// Injective packing into a ChaCha stream id.
    fn stream_id(&self) -> u64 {
        let src = self.source.map_or(Self::NO_SOURCE, u64::from);
        (u64::from(self.replication) << 32) | (src << 4) | self.purpose.code()
    }
}

/// Deterministic pseudo-random stream derived from `(master seed, label)`.
///
/// Backed by ChaCha12 with the label selecting the cipher stream, so distinct
/// labels never share keystream and sequences are identical on every platform.
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha12Rng,
}

impl RandomStream {
    pub fn new(seed: u64, label: StreamLabel) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(label.stream_id());
        RandomStream { rng }
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential with mean 1.
    #[inline]
    pub fn standard_exponential(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
