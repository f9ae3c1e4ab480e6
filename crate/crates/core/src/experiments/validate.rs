//! Monte Carlo checks of two auxiliary identities: the squared distance from
//! a fixed instant to the nearest Poisson point, and the mean time between
//! consecutive picks of a randomized picker.

use crate::capacity::mean_inter_pick_time;
use crate::model::{sample_delay, sample_intergen, RandomStream, StreamLabel, StreamPurpose, SystemConfig};
use crate::policies::PickSampler;
use crate::stats::RunningStats;

use super::ExperimentError;

/// Relative tolerance on `E[eps^2]`.
pub const EPSILON_MOMENT_TOLERANCE: f64 = 0.02;
/// Relative tolerance on the tail probability at `e = mu / 2`.
pub const EPSILON_TAIL_TOLERANCE: f64 = 0.01;
/// Relative tolerance on every mean inter-pick time.
pub const WALD_TOLERANCE: f64 = 0.02;
/// Expected path gaps per sample point.
const PATH_GAPS_PER_SAMPLE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub e: f64,
    pub empirical: f64,
    /// `exp(-2 e / mu)`.
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonReport {
    pub mu: f64,
    pub samples: usize,
    pub mean_sq: f64,
    pub mean_sq_se: f64,
    /// `mu^2 / 2`.
    pub expected_mean_sq: f64,
    /// Tail at `e = k mu / 4`, `k = 1..=8`.
    pub tail: Vec<TailPoint>,
    pub passed: bool,
}

impl EpsilonReport {
    pub fn moment_relative_error(&self) -> f64 {
        (self.mean_sq - self.expected_mean_sq).abs() / self.expected_mean_sq
    }

    /// Tail point at `e = mu / 2`.
    pub fn half_mu_tail(&self) -> TailPoint {
        self.tail[1]
    }
}

/// Places `samples` points uniformly inside one long Poisson path with mean
/// gap `mu` and measures the distance from each to the nearest point of the
/// path on either side.
pub fn validate_epsilon_moment(mu: f64, samples: usize, seed: u64) -> Result<EpsilonReport, ExperimentError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ExperimentError::Invalid(format!("mu must be positive and finite (got {mu})")));
    }
    if samples == 0 {
        return Err(ExperimentError::Invalid("samples must be at least 1".into()));
    }
    let mut path_stream = RandomStream::new(seed, StreamLabel::source(0, 0, StreamPurpose::Validation));
    let mut point_stream = RandomStream::new(seed, StreamLabel::source(0, 1, StreamPurpose::Validation));

    // Sample points are sparse relative to the path so that few of them
    // share a gap, and far enough from both ends that an edge gap cannot
    // matter. Points are sorted so the path can be streamed past them.
    let margin = 50.0 * mu;
    let length = (PATH_GAPS_PER_SAMPLE * samples) as f64 * mu + 2.0 * margin;
    let mut points: Vec<f64> = (0..samples)
        .map(|_| margin + point_stream.uniform() * (length - 2.0 * margin))
        .collect();
    points.sort_by(f64::total_cmp);

    let tail_e: Vec<f64> = (1..=8).map(|k| k as f64 * mu / 4.0).collect();
    let mut exceed = vec![0usize; tail_e.len()];
    let mut sq = RunningStats::new();
    let mut prev = f64::NEG_INFINITY;
    let mut next = sample_intergen(mu, &mut path_stream).expect("mu > 0");
    for &x in &points {
        while next < x {
            prev = next;
            next += sample_intergen(mu, &mut path_stream).expect("mu > 0");
        }
        let eps = (x - prev).min(next - x);
        sq.push(eps * eps);
        for (count, &e) in exceed.iter_mut().zip(&tail_e) {
            if eps > e {
                *count += 1;
            }
        }
    }

    let tail: Vec<TailPoint> = tail_e
        .iter()
        .zip(&exceed)
        .map(|(&e, &c)| TailPoint { e, empirical: c as f64 / samples as f64, expected: (-2.0 * e / mu).exp() })
        .collect();
    let summary = sq.summary();
    let mut report = EpsilonReport {
        mu,
        samples,
        mean_sq: summary.mean,
        mean_sq_se: summary.std_error(),
        expected_mean_sq: mu * mu / 2.0,
        tail,
        passed: false,
    };
    let half = report.half_mu_tail();
    report.passed = report.moment_relative_error() <= EPSILON_MOMENT_TOLERANCE
        && (half.empirical - half.expected).abs() <= EPSILON_TAIL_TOLERANCE * half.expected;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaldSource {
    pub picks: u64,
    pub mean_inter_pick: f64,
    pub std_error: f64,
    /// `sum_n (p_n / p_l) gamma_n`.
    pub expected: f64,
}

impl WaldSource {
    pub fn relative_error(&self) -> f64 {
        (self.mean_inter_pick - self.expected).abs() / self.expected
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaldReport {
    pub sources: Vec<WaldSource>,
    pub horizon: f64,
    pub seed: u64,
    pub passed: bool,
}

/// Runs only the pick process of the randomized policy: every pick holds the
/// channel for one delay draw of the picked source, whether or not it would
/// carry a packet. No generations and no AoI are simulated.
pub fn validate_wald(cfg: &SystemConfig, p: &[f64], horizon: f64, seed: u64) -> Result<WaldReport, ExperimentError> {
    if p.len() != cfg.len() {
        return Err(ExperimentError::Invalid(format!("expected {} probabilities, got {}", cfg.len(), p.len())));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(ExperimentError::Invalid(format!("horizon must be positive and finite (got {horizon})")));
    }
    let sampler = PickSampler::new(p.to_vec())?;
    let mut pick_stream = RandomStream::new(seed, StreamLabel::global(0, StreamPurpose::Validation));
    let mut delay_streams: Vec<RandomStream> = (0..cfg.len())
        .map(|i| RandomStream::new(seed, StreamLabel::source(0, i, StreamPurpose::Validation)))
        .collect();
    let mut last_pick: Vec<Option<f64>> = vec![None; cfg.len()];
    let mut gaps = vec![RunningStats::new(); cfg.len()];
    let mut picks = vec![0u64; cfg.len()];

    let mut now = 0.0;
    while now < horizon {
        let l = sampler.sample(&mut pick_stream);
        picks[l] += 1;
        if let Some(prev) = last_pick[l] {
            gaps[l].push(now - prev);
        }
        last_pick[l] = Some(now);
        now += sample_delay(&cfg.sources[l].delay, &mut delay_streams[l]);
    }

    let gammas = cfg.gammas();
    let sources: Vec<WaldSource> = (0..cfg.len())
        .map(|l| {
            let s = gaps[l].summary();
            WaldSource {
                picks: picks[l],
                mean_inter_pick: s.mean,
                std_error: s.std_error(),
                expected: if p[l] > 0.0 { mean_inter_pick_time(p, &gammas, l) } else { f64::INFINITY },
            }
        })
        .collect();
    let passed = sources
        .iter()
        .filter(|s| s.expected.is_finite())
        .all(|s| s.relative_error() <= WALD_TOLERANCE);
    Ok(WaldReport { sources, horizon, seed, passed })
}
