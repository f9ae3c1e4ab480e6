//! Closed-form analytical layer: the largest admissible mean inter-generation
//! time for an AAoI target, the necessary capacity-region test, pick
//! probabilities of the randomized policy and the AAoI bound evaluators.

use thiserror::Error;

use crate::model::SourceParams;

/// Slack allowed on the load sum before a config is declared infeasible.
pub const LOAD_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error("alpha {alpha} is below gamma + mu/sqrt(2) = {min} (gamma {gamma}, mu {mu})")]
    InfeasibleAlpha { alpha: f64, gamma: f64, mu: f64, min: f64 },
    #[error("expected {expected} alpha values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("source {0} has no alpha target")]
    MissingAlpha(usize),
}

/// Smallest alpha for which [`t_max`] is defined.
#[inline]
pub fn min_alpha(gamma: f64, mu: f64) -> f64 {
    gamma + mu / std::f64::consts::SQRT_2
}

/// Largest mean inter-generation time of transmitted packets compatible with
/// target `alpha`: `(alpha - gamma) + sqrt((alpha - gamma)^2 - mu^2 / 2)`.
pub fn t_max(alpha: f64, gamma: f64, mu: f64) -> Result<f64, CapacityError> {
    let slack = alpha - gamma;
    let c = mu * mu / 2.0;
    let mut disc = slack * slack - c;
    // Rounding at the exact boundary alpha = gamma + mu/sqrt(2).
    if disc < 0.0 && disc > -1e-12 * (slack * slack + c) {
        disc = 0.0;
    }
    if slack < 0.0 || disc < 0.0 || !disc.is_finite() {
        return Err(CapacityError::InfeasibleAlpha {
            alpha,
            gamma,
            mu,
            min: min_alpha(gamma, mu),
        });
    }
    let t = slack + disc.sqrt();
    if t > 0.0 {
        Ok(t)
    } else {
        // alpha == gamma with mu == 0 leaves no room at all.
        Err(CapacityError::InfeasibleAlpha { alpha, gamma, mu, min: min_alpha(gamma, mu) })
    }
}

/// Outcome of the necessary-condition test.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    /// Passes both necessary conditions.
    pub feasible: bool,
    /// `alpha - gamma - mu/sqrt(2)` per source.
    pub per_source_margin: Vec<f64>,
    /// `None` where the margin is negative.
    pub t_max: Vec<Option<f64>>,
    /// `sum gamma / t_max`; infinite when any `t_max` is undefined.
    pub load: f64,
}

impl FeasibilityReport {
    pub fn t_max_values(&self) -> Option<Vec<f64>> {
        self.t_max.iter().copied().collect()
    }
}

/// Evaluates both necessary conditions for `alpha` to lie in the capacity
/// region. Passing does not prove achievability.
pub fn check_feasibility(
    sources: &[SourceParams],
    alpha: &[f64],
) -> Result<FeasibilityReport, CapacityError> {
    if sources.len() != alpha.len() {
        return Err(CapacityError::LengthMismatch { expected: sources.len(), got: alpha.len() });
    }
    let mut margins = Vec::with_capacity(alpha.len());
    let mut tmax = Vec::with_capacity(alpha.len());
    let mut load = 0.0;
    for (s, &a) in sources.iter().zip(alpha) {
        let margin = a - min_alpha(s.gamma(), s.mu);
        margins.push(margin);
        match t_max(a, s.gamma(), s.mu) {
            Ok(t) => {
                load += s.gamma() / t;
                tmax.push(Some(t));
            }
            Err(_) => {
                load = f64::INFINITY;
                tmax.push(None);
            }
        }
    }
    let condition_one = tmax.iter().all(Option::is_some);
    let feasible = condition_one && load <= 1.0 + LOAD_TOLERANCE;
    Ok(FeasibilityReport { feasible, per_source_margin: margins, t_max: tmax, load })
}

/// Same as [`check_feasibility`] using each source's own `alpha`.
pub fn check_sources(sources: &[SourceParams]) -> Result<FeasibilityReport, CapacityError> {
    let alpha = sources
        .iter()
        .enumerate()
        .map(|(i, s)| s.alpha.ok_or(CapacityError::MissingAlpha(i)))
        .collect::<Result<Vec<_>, _>>()?;
    check_feasibility(sources, &alpha)
}

/// Pick probabilities proportional to `1 / t`.
pub fn pick_probabilities(t: &[f64]) -> Vec<f64> {
    let total: f64 = t.iter().map(|x| 1.0 / x).sum();
    t.iter().map(|x| (1.0 / x) / total).collect()
}

/// Lower bound on the AAoI of any policy whose transmitted packets have mean
/// inter-generation time `t_bar`: `(mu^2/2 / t_bar + t_bar + 2 gamma) / 2`.
#[inline]
pub fn aaoi_lower_bound(t_bar: f64, mu: f64, gamma: f64) -> f64 {
    0.5 * (mu * mu / 2.0 / t_bar + t_bar + 2.0 * gamma)
}

/// Upper bound on the AAoI of the randomized policy driven by `t_max`:
/// `(mu^2 / t_max + 3 t_max + 2 gamma) / 2`.
#[inline]
pub fn aaoi_upper_bound_pi_r(t_max: f64, mu: f64, gamma: f64) -> f64 {
    0.5 * (mu * mu / t_max + 3.0 * t_max + 2.0 * gamma)
}

/// Mean time between consecutive picks of `source` by a randomized picker
/// that holds the channel for one delay draw per pick:
/// `sum_n (p_n / p_source) gamma_n`.
pub fn mean_inter_pick_time(p: &[f64], gammas: &[f64], source: usize) -> f64 {
    p.iter().zip(gammas).map(|(pn, g)| pn / p[source] * g).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DelaySpec;
    use proptest::prelude::*;

    const MU: [f64; 5] = [2.0, 4.0, 4.0, 8.0, 10.0];
    const GAMMA: [f64; 5] = [3.0, 3.0, 6.0, 2.0, 4.0];

    fn sources() -> Vec<SourceParams> {
        MU.iter()
            .zip(GAMMA)
            .map(|(&m, g)| SourceParams::new(m, DelaySpec::exponential(g)))
            .collect()
    }

    #[test]
    fn t_max_values() {
        assert!((t_max(10.0, 3.0, 4.0).unwrap() - (7.0 + 41f64.sqrt())).abs() < 1e-12);
        assert!((t_max(10.0, 3.0, 4.0).unwrap() - 13.4031).abs() < 1e-4);
        assert!((t_max(20.0, 2.0, 8.0).unwrap() - (18.0 + 292f64.sqrt())).abs() < 1e-12);
        assert!((t_max(20.0, 2.0, 8.0).unwrap() - 35.0880).abs() < 1e-4);
    }

    #[test]
    fn t_max_at_boundary() {
        let t = t_max(min_alpha(3.0, 4.0), 3.0, 4.0).unwrap();
        assert!((t - 4.0 / 2f64.sqrt()).abs() < 1e-6, "{t}");
        assert!((t - 2.8284).abs() < 1e-4);
    }

    #[test]
    fn t_max_rejects_infeasible_alpha() {
        assert!(matches!(t_max(4.0, 3.0, 4.0), Err(CapacityError::InfeasibleAlpha { .. })));
        assert!(t_max(2.0, 3.0, 0.0).is_err());
        assert!(t_max(3.0, 3.0, 0.0).is_err());
    }

    #[test]
    fn five_source_feasible() {
        let r = check_feasibility(&sources(), &[10.0, 10.0, 15.0, 20.0, 20.0]).unwrap();
        assert!(r.feasible);
        assert!((r.load - 0.9711).abs() < 1e-4, "{}", r.load);
        assert!(r.per_source_margin.iter().all(|&m| m > 0.0));
    }

    #[test]
    fn five_source_infeasible_by_load() {
        let r = check_feasibility(&sources(), &[8.0, 10.0, 15.0, 20.0, 20.0]).unwrap();
        assert!(!r.feasible);
        assert!((r.load - 1.0609).abs() < 1e-4, "{}", r.load);
        assert!(r.t_max.iter().all(Option::is_some));
    }

    #[test]
    fn infeasible_by_condition_one() {
        // alpha_1 below 3 + 2/sqrt(2)
        let r = check_feasibility(&sources(), &[4.0, 10.0, 15.0, 20.0, 20.0]).unwrap();
        assert!(!r.feasible);
        assert!(r.per_source_margin[0] < 0.0);
        assert_eq!(r.t_max[0], None);
        assert!(r.load.is_infinite());
    }

    #[test]
    fn alpha_one_boundary_near_nine_point_two() {
        // Bisection on alpha_1 for load == 1.
        let load = |a1: f64| check_feasibility(&sources(), &[a1, 10.0, 15.0, 20.0, 20.0]).unwrap().load;
        let (mut lo, mut hi) = (min_alpha(3.0, 2.0) + 1e-9, 20.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if load(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((hi - 9.1945).abs() < 1e-3, "boundary {hi}");
        assert!(check_feasibility(&sources(), &[9.2, 10.0, 15.0, 20.0, 20.0]).unwrap().feasible);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            check_feasibility(&sources(), &[1.0]),
            Err(CapacityError::LengthMismatch { expected: 5, got: 1 })
        ));
    }

    #[test]
    fn pick_probabilities_cases() {
        assert_eq!(pick_probabilities(&[3.0]), vec![1.0]);
        let p = pick_probabilities(&[7.5; 6]);
        assert!(p.iter().all(|&x| (x - 1.0 / 6.0).abs() < 1e-15));

        let r = check_feasibility(&sources(), &[10.0, 10.0, 15.0, 20.0, 20.0]).unwrap();
        let p = pick_probabilities(&r.t_max_values().unwrap());
        let expected = [0.2721, 0.2813, 0.2149, 0.1075, 0.1242];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-4, "{p:?}");
        }
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lower_bound_cases() {
        let t = t_max(10.0, 3.0, 4.0).unwrap();
        assert!((aaoi_lower_bound(t, 4.0, 3.0) - 10.0).abs() < 1e-12);
        assert_eq!(aaoi_lower_bound(2.0, 0.0, 2.0), 3.0);
        let m = 4.0 / 2f64.sqrt();
        assert!((aaoi_lower_bound(m, 4.0, 3.0) - (m + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_cases() {
        let t = t_max(10.0, 3.0, 4.0).unwrap();
        let ub = aaoi_upper_bound_pi_r(t, 4.0, 3.0);
        assert!((ub - 23.7015).abs() < 1e-4, "{ub}");
        assert!(ub / 10.0 <= 3.0);
        assert_eq!(aaoi_upper_bound_pi_r(2.0, 0.0, 2.0), 5.0);
    }

    #[test]
    fn inter_pick_mean_on_five_sources() {
        let r = check_feasibility(&sources(), &[10.0, 10.0, 15.0, 20.0, 20.0]).unwrap();
        let t = r.t_max_values().unwrap();
        let p = pick_probabilities(&t);
        let y = mean_inter_pick_time(&p, &GAMMA, 0);
        assert!((y - 13.4556).abs() < 1e-4, "{y}");
        assert!((y - t[0] * r.load).abs() < 1e-10);
    }

    fn valid_triple() -> impl Strategy<Value = (f64, f64, f64)> {
        (0.01f64..50.0, 0.0f64..50.0, 0.0f64..100.0)
            .prop_map(|(g, m, extra)| (min_alpha(g, m) + extra, g, m))
    }

    proptest! {
        #[test]
        fn lower_bound_at_t_max_recovers_alpha((alpha, gamma, mu) in valid_triple()) {
            let t = t_max(alpha, gamma, mu).unwrap();
            prop_assert!((aaoi_lower_bound(t, mu, gamma) - alpha).abs() <= 1e-9 * alpha);
        }

        #[test]
        fn upper_bound_within_three_alpha((alpha, gamma, mu) in valid_triple()) {
            let t = t_max(alpha, gamma, mu).unwrap();
            prop_assert!(aaoi_upper_bound_pi_r(t, mu, gamma) <= 3.0 * alpha + 1e-9);
        }

        #[test]
        fn t_max_increasing_in_alpha((alpha, gamma, mu) in valid_triple(), step in 1e-3f64..10.0) {
            prop_assert!(t_max(alpha + step, gamma, mu).unwrap() > t_max(alpha, gamma, mu).unwrap());
        }

        #[test]
        fn pick_probabilities_form_distribution(t in prop::collection::vec(1e-3f64..1e3, 1..20)) {
            let p = pick_probabilities(&t);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
