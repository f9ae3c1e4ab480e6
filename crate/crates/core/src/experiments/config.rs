//! JSON scenario files.
//!
//! ```json
//! {
//!   "sources": [
//!     {"mu": 4, "gamma": 3, "delay": {"kind": "exponential"}, "alpha": 10},
//!     {"mu": 0, "delay": {"kind": "uniform", "mean": 2}, "weight": 0.5}
//!   ],
//!   "horizon": 1e6, "seed": 1, "replications": 5
//! }
//! ```
//!
//! The mean delay may be given as `gamma`, as `delay.mean`, or both (then
//! they must agree). `horizon`, `seed` and `replications` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{validate_config, DelayKind, DelaySpec, SourceParams, SystemConfig, ValidationReport};

pub const DEFAULT_HORIZON: f64 = 1e6;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_REPLICATIONS: u32 = 5;

#[derive(Debug, Error)]
pub enum ConfigLoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config:\n{0}")]
    Fields(FieldErrors),
    #[error("{0}")]
    Invalid(#[from] ValidationReport),
}

/// Field-level problems found before semantic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldErrors(pub Vec<String>);

impl std::fmt::Display for FieldErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DelayFile {
    kind: DelayKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceFile {
    mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    delay: DelayFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    sources: Vec<SourceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    replications: Option<u32>,
}

fn gamma_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<SystemConfig, ConfigLoadError> {
    let file: ConfigFile = serde_json::from_str(text)?;
    let mut problems = Vec::new();
    let sources = file
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mean = match (s.gamma, s.delay.mean) {
                (Some(g), Some(m)) if !gamma_matches(g, m) => {
                    problems.push(format!("sources[{i}]: gamma {g} disagrees with delay.mean {m}"));
                    g
                }
                (Some(g), _) => g,
                (None, Some(m)) => m,
                (None, None) => {
                    problems.push(format!("sources[{i}]: missing gamma (or delay.mean)"));
                    f64::NAN
                }
            };
            let mut p = SourceParams::new(s.mu, DelaySpec { kind: s.delay.kind, mean });
            p.alpha = s.alpha;
            p.weight = s.weight.unwrap_or(1.0);
            p
        })
        .collect();
    if !problems.is_empty() {
        return Err(ConfigLoadError::Fields(FieldErrors(problems)));
    }
    let cfg = SystemConfig::new(
        sources,
        file.horizon.unwrap_or(DEFAULT_HORIZON),
        file.seed.unwrap_or(DEFAULT_SEED),
        file.replications.unwrap_or(DEFAULT_REPLICATIONS),
    );
    Ok(validate_config(cfg)?)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig, ConfigLoadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigLoadError::Io { path: path.display().to_string(), source })?;
    parse_config(&text)
}

/// Serializes a config in the same format [`parse_config`] reads.
pub fn config_to_json(cfg: &SystemConfig) -> String {
    let file = ConfigFile {
        sources: cfg
            .sources
            .iter()
            .map(|s| SourceFile {
                mu: s.mu,
                gamma: Some(s.gamma()),
                delay: DelayFile { kind: s.delay.kind, mean: None },
                alpha: s.alpha,
                weight: Some(s.weight),
            })
            .collect(),
        horizon: Some(cfg.horizon),
        seed: Some(cfg.seed),
        replications: Some(cfg.replications),
    };
    serde_json::to_string_pretty(&file).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConfigError;

    #[test]
    fn parses_both_delay_spellings() {
        let cfg = parse_config(
            r#"{"sources": [
                {"mu": 4, "gamma": 3, "delay": {"kind": "exponential"}, "alpha": 10},
                {"mu": 0, "delay": {"kind": "uniform", "mean": 2}, "weight": 0.5},
                {"mu": 1, "gamma": 2, "delay": {"kind": "deterministic", "mean": 2}}
            ], "horizon": 100, "seed": 7, "replications": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.gammas(), vec![3.0, 2.0, 2.0]);
        assert_eq!(cfg.sources[0].alpha, Some(10.0));
        assert_eq!(cfg.sources[1].weight, 0.5);
        assert_eq!(cfg.sources[2].weight, 1.0);
        assert_eq!((cfg.horizon, cfg.seed, cfg.replications), (100.0, 7, 2));
    }

    #[test]
    fn defaults_fill_run_plan() {
        let cfg = parse_config(r#"{"sources": [{"mu": 1, "gamma": 1, "delay": {"kind": "exp"}}]}"#);
        // short aliases are not part of the file format
        assert!(matches!(cfg, Err(ConfigLoadError::Json(_))));
        let cfg = parse_config(r#"{"sources": [{"mu": 1, "gamma": 1, "delay": {"kind": "exponential"}}]}"#).unwrap();
        assert_eq!(cfg.horizon, DEFAULT_HORIZON);
        assert_eq!(cfg.replications, DEFAULT_REPLICATIONS);
    }

    #[test]
    fn reports_field_errors() {
        let err = parse_config(r#"{"sources": [{"mu": 1, "gamma": 1, "delay": {"kind": "uniform", "mean": 2}}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("disagrees"), "{err}");
        let err = parse_config(r#"{"sources": [{"mu": 1, "delay": {"kind": "uniform"}}]}"#).unwrap_err();
        assert!(err.to_string().contains("missing gamma"), "{err}");
        let err = parse_config(r#"{"sources": [{"mu": 1, "gamma": 0, "delay": {"kind": "uniform"}}]}"#).unwrap_err();
        match err {
            ConfigLoadError::Invalid(r) => assert!(r.contains(|e| matches!(e, ConfigError::NonPositiveMean { .. }))),
            other => panic!("{other}"),
        }
        assert!(matches!(parse_config(r#"{"sources": []}"#), Err(ConfigLoadError::Invalid(_))));
        assert!(matches!(parse_config("{"), Err(ConfigLoadError::Json(_))));
        assert!(matches!(parse_config(r#"{"sources": [], "extra": 1}"#), Err(ConfigLoadError::Json(_))));
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"sources": [{"mu": 2, "gamma": 3, "delay": {"kind": "uniform"}, "alpha": 10, "weight": 0.8}],
                       "horizon": 5000, "seed": 3, "replications": 4}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(parse_config(&config_to_json(&cfg)).unwrap(), cfg);
    }
}
