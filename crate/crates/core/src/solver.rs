//! Weighted-sum AAoI lower bound: the relaxation
//!
//! ```text
//! minimize   sum_l w_l/2 * (mu_l^2/2 / T_l + T_l + 2 gamma_l)
//! subject to sum_l gamma_l / T_l <= 1
//! ```
//!
//! The objective is separable and the single constraint is linear in `1/T`,
//! so for a fixed multiplier every `T_l` has a closed form and the multiplier
//! is found by bisection on the (monotone) load. [`grid_oracle`] solves the
//! same problem by exhaustive search and serves as an independent check.

use thiserror::Error;

use crate::capacity::{aaoi_lower_bound, pick_probabilities};
use crate::model::{validate_sources, ConfigError, SourceParams};

/// Convergence target on the load when the constraint binds.
pub const LOAD_RESIDUAL: f64 = 1e-10;
/// Floor applied to `T_l`, relative to `gamma_l`, for generate-at-will sources.
const T_FLOOR: f64 = 1e-9;
const MIN_GRID_RESOLUTION: usize = 50;
const MAX_ORACLE_SOURCES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("expected {expected} weights, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("weight {index} must be positive and finite (got {value})")]
    NonPositiveWeight { index: usize, value: f64 },
    #[error("invalid sources: {0:?}")]
    InvalidSources(Vec<ConfigError>),
    #[error("grid resolution {0} is below the minimum of 50 points per axis")]
    GridTooCoarse(usize),
    #[error("grid oracle supports at most 4 sources (got {0})")]
    TooManySources(usize),
}

/// Optimum of the relaxation.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSolution {
    pub t_o: Vec<f64>,
    pub alpha_o: Vec<f64>,
    pub p_o: Vec<f64>,
    /// Lagrange multiplier of the load constraint.
    pub multiplier: f64,
    /// `sum w_l alpha_o_l`.
    pub objective: f64,
    pub load: f64,
}

/// Per-source stationary point for a given multiplier:
/// `sqrt(mu^2/2 + 2 multiplier gamma / w)`.
#[inline]
pub fn stationary_t(multiplier: f64, mu: f64, gamma: f64, w: f64) -> f64 {
    (mu * mu / 2.0 + 2.0 * multiplier * gamma / w).sqrt()
}

fn check_inputs(sources: &[SourceParams], weights: &[f64]) -> Result<(), SolverError> {
    let errors = validate_sources(sources);
    if !errors.is_empty() {
        return Err(SolverError::InvalidSources(errors));
    }
    if sources.len() != weights.len() {
        return Err(SolverError::LengthMismatch { expected: sources.len(), got: weights.len() });
    }
    if let Some((index, &value)) =
        weights.iter().enumerate().find(|(_, w)| !(**w > 0.0 && w.is_finite()))
    {
        return Err(SolverError::NonPositiveWeight { index, value });
    }
    Ok(())
}

fn t_at(multiplier: f64, sources: &[SourceParams], weights: &[f64]) -> Vec<f64> {
    sources
        .iter()
        .zip(weights)
        .map(|(s, &w)| stationary_t(multiplier, s.mu, s.gamma(), w).max(T_FLOOR * s.gamma()))
        .collect()
}

fn load_of(t: &[f64], sources: &[SourceParams]) -> f64 {
    t.iter().zip(sources).map(|(t, s)| s.gamma() / t).sum()
}

/// Objective value `sum w_l alpha_l(T_l)` at an arbitrary point.
pub fn relaxed_objective(t: &[f64], sources: &[SourceParams], weights: &[f64]) -> f64 {
    t.iter()
        .zip(sources)
        .zip(weights)
        .map(|((&t, s), w)| w * aaoi_lower_bound(t, s.mu, s.gamma()))
        .sum()
}

/// Solves the relaxation to `|load - 1| <= 1e-10` whenever the constraint binds.
pub fn solve_relaxation(
    sources: &[SourceParams],
    weights: &[f64],
) -> Result<RelaxationSolution, SolverError> {
    check_inputs(sources, weights)?;
    let load_at = |m: f64| load_of(&t_at(m, sources, weights), sources);

    let multiplier = if load_at(0.0) <= 1.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while load_at(hi) > 1.0 {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..2000 {
            let residual = 1.0 - load_at(hi);
            if residual < LOAD_RESIDUAL || hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if load_at(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        // `hi` is always on the feasible side.
        hi
    };

    let t_o = t_at(multiplier, sources, weights);
    let alpha_o: Vec<f64> = t_o
        .iter()
        .zip(sources)
        .map(|(&t, s)| aaoi_lower_bound(t, s.mu, s.gamma()))
        .collect();
    let objective = alpha_o.iter().zip(weights).map(|(a, w)| a * w).sum();
    Ok(RelaxationSolution {
        p_o: pick_probabilities(&t_o),
        load: load_of(&t_o, sources),
        t_o,
        alpha_o,
        multiplier,
        objective,
    })
}

/// Stationarity residual `w/2 (1 - mu^2/(2T^2)) - multiplier gamma / T^2` per
/// source at the returned point.
pub fn kkt_residuals(
    solution: &RelaxationSolution,
    sources: &[SourceParams],
    weights: &[f64],
) -> Vec<f64> {
    solution
        .t_o
        .iter()
        .zip(sources)
        .zip(weights)
        .map(|((&t, s), &w)| {
            w / 2.0 * (1.0 - s.mu * s.mu / (2.0 * t * t)) - solution.multiplier * s.gamma() / (t * t)
        })
        .collect()
}

/// Best feasible point found by [`grid_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub t: Vec<f64>,
    pub objective: f64,
    /// Ratio between adjacent points of the final (finest) grid, per axis.
    pub cell_ratio: Vec<f64>,
    /// Ratio between adjacent points of the first full-range grid, per axis.
    pub coarse_cell_ratio: Vec<f64>,
}

/// Number of zoom passes after the full-range grid.
const ORACLE_REFINEMENTS: usize = 4;
/// Half-width of each zoom window, in cells of the previous grid.
const ORACLE_ZOOM_CELLS: i32 = 3;

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

struct Axis {
    points: Vec<f64>,
    objective: Vec<f64>,
    load: Vec<f64>,
}

fn search(axes: &[Axis], depth: usize, obj: f64, load: f64, idx: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
    if depth == axes.len() {
        if obj < best.0 {
            best.0 = obj;
            best.1.clone_from(idx);
        }
        return;
    }
    let axis = &axes[depth];
    for i in 0..axis.points.len() {
        let l = load + axis.load[i];
        if l > 1.0 {
            continue;
        }
        idx.push(i);
        search(axes, depth + 1, obj + axis.objective[i], l, idx, best);
        idx.pop();
    }
}

/// Exhaustive search of the relaxation over a log-spaced grid per source
/// covering `[mu/sqrt(2) / 2, 50 max(gamma N, mu)]` (`[gamma/2, ..]` when
/// `mu == 0`), keeping only constraint-satisfying points, followed by a few
/// zoomed-in exhaustive passes around the incumbent.
pub fn grid_oracle(
    sources: &[SourceParams],
    weights: &[f64],
    resolution: usize,
) -> Result<OracleSolution, SolverError> {
    check_inputs(sources, weights)?;
    if resolution < MIN_GRID_RESOLUTION {
        return Err(SolverError::GridTooCoarse(resolution));
    }
    let n = sources.len();
    if n > MAX_ORACLE_SOURCES {
        return Err(SolverError::TooManySources(n));
    }

    let make_axis = |points: Vec<f64>, s: &SourceParams, w: f64| Axis {
        objective: points.iter().map(|&t| w * aaoi_lower_bound(t, s.mu, s.gamma())).collect(),
        load: points.iter().map(|&t| s.gamma() / t).collect(),
        points,
    };

    let mut ranges: Vec<(f64, f64)> = sources
        .iter()
        .map(|s| {
            let lo = if s.mu > 0.0 {
                0.5 * s.mu / std::f64::consts::SQRT_2
            } else {
                0.5 * s.gamma()
            };
            (lo, 50.0 * (s.gamma() * n as f64).max(s.mu))
        })
        .collect();

    let mut best_t: Option<Vec<f64>> = None;
    let mut best_obj = f64::INFINITY;
    let mut cell_ratio = vec![0.0; n];
    let mut coarse_cell_ratio = vec![0.0; n];

    for pass in 0..=ORACLE_REFINEMENTS {
        let axes: Vec<Axis> = ranges
            .iter()
            .zip(sources)
            .zip(weights)
            .map(|((&(lo, hi), s), &w)| make_axis(log_grid(lo, hi, resolution), s, w))
            .collect();
        let mut best = (f64::INFINITY, Vec::new());
        search(&axes, 0, 0.0, 0.0, &mut Vec::with_capacity(n), &mut best);
        if best.1.is_empty() {
            // Zoom window fell entirely outside the feasible set; keep the incumbent.
            break;
        }
        for (l, axis) in axes.iter().enumerate() {
            cell_ratio[l] = axis.points[1] / axis.points[0];
            if pass == 0 {
                coarse_cell_ratio[l] = cell_ratio[l];
            }
        }
        let t: Vec<f64> = best.1.iter().zip(&axes).map(|(&i, a)| a.points[i]).collect();
        if best.0 <= best_obj {
            best_obj = best.0;
            best_t = Some(t.clone());
        }
        ranges = t
            .iter()
            .zip(&cell_ratio)
            .map(|(&c, &r)| {
                let span = r.powi(ORACLE_ZOOM_CELLS);
                (c / span, c * span)
            })
            .collect();
    }

    let t = best_t.expect("full-range grid always contains a feasible point");
    Ok(OracleSolution { objective: relaxed_objective(&t, sources, weights), t, cell_ratio, coarse_cell_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DelaySpec;

    fn src(mu: f64, gamma: f64) -> SourceParams {
        SourceParams::new(mu, DelaySpec::exponential(gamma))
    }

    /// One-dimensional brute-force minimizer of `w/2 (mu^2/2/T + T) + m gamma / T`.
    fn brute_stationary(m: f64, mu: f64, gamma: f64, w: f64) -> f64 {
        let f = |t: f64| w / 2.0 * (mu * mu / 2.0 / t + t) + m * gamma / t;
        let (mut best, mut arg) = (f64::INFINITY, 0.0);
        for i in 1..=2_000_000 {
            let t = i as f64 * 1e-5;
            let v = f(t);
            if v < best {
                best = v;
                arg = t;
            }
        }
        arg
    }

    #[test]
    fn stationary_t_cases() {
        assert!((stationary_t(0.0, 4.0, 3.0, 1.0) - 2.8284).abs() < 1e-4);
        assert!((stationary_t(14.0 / 3.0, 4.0, 3.0, 1.0) - 6.0).abs() < 1e-12);
        assert!((brute_stationary(14.0 / 3.0, 4.0, 3.0, 1.0) - 6.0).abs() < 1e-4);
        assert!((stationary_t(2.0, 4.0, 3.0, 1e12) - 8f64.sqrt()).abs() < 1e-6);
        assert!(stationary_t(1.0, 4.0, 3.0, 1.0) < stationary_t(1.1, 4.0, 3.0, 1.0));
    }

    #[test]
    fn single_generate_at_will_source() {
        let sol = solve_relaxation(&[src(0.0, 2.0)], &[1.0]).unwrap();
        assert!((sol.t_o[0] - 2.0).abs() < 1e-9, "{:?}", sol);
        assert!((sol.alpha_o[0] - 3.0).abs() < 1e-9);
        assert_eq!(sol.p_o, vec![1.0]);
    }

    #[test]
    fn two_identical_sources_bind() {
        let s = [src(4.0, 3.0), src(4.0, 3.0)];
        let sol = solve_relaxation(&s, &[1.0, 1.0]).unwrap();
        for l in 0..2 {
            assert!((sol.t_o[l] - 6.0).abs() < 1e-8, "{:?}", sol);
            assert!((sol.alpha_o[l] - 20.0 / 3.0).abs() < 1e-8);
        }
        assert!((sol.multiplier - 14.0 / 3.0).abs() < 1e-7);
        assert!((sol.load - 1.0).abs() <= 1e-8);
        assert!(sol.load <= 1.0 + 1e-10);
        let oracle = grid_oracle(&s, &[1.0, 1.0], 400).unwrap();
        assert!((oracle.objective - sol.objective).abs() <= 1e-3 * sol.objective);
    }

    #[test]
    fn slack_constraint_is_unconstrained() {
        let sol = solve_relaxation(&[src(4.0, 1.0)], &[1.0]).unwrap();
        assert_eq!(sol.multiplier, 0.0);
        assert!((sol.t_o[0] - 2.8284).abs() < 1e-4);
        assert!((sol.alpha_o[0] - 3.8284).abs() < 1e-4);
    }

    #[test]
    fn kkt_residual_is_small() {
        let s: Vec<_> = [(2.0, 3.0), (4.0, 3.0), (4.0, 6.0), (8.0, 2.0), (10.0, 4.0)]
            .iter()
            .map(|&(m, g)| src(m, g))
            .collect();
        let w = [0.8, 0.8, 0.2, 0.2, 0.4];
        let sol = solve_relaxation(&s, &w).unwrap();
        assert!(sol.multiplier > 0.0);
        assert!(kkt_residuals(&sol, &s, &w).iter().all(|r| r.abs() <= 1e-8));
        assert!((sol.load - 1.0).abs() <= 1e-8 && sol.load <= 1.0 + 1e-10);
        assert!((sol.p_o.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn weight_scaling_keeps_minimizer() {
        let s = [src(2.0, 3.0), src(4.0, 3.0), src(4.0, 6.0)];
        let a = solve_relaxation(&s, &[0.8, 0.8, 0.2]).unwrap();
        let b = solve_relaxation(&s, &[8.0, 8.0, 2.0]).unwrap();
        for (x, y) in a.t_o.iter().zip(&b.t_o) {
            assert!((x - y).abs() <= 1e-8 * x, "{x} vs {y}");
        }
    }

    #[test]
    fn oracle_single_source_cases() {
        let o = grid_oracle(&[src(4.0, 1.0)], &[1.0], 400).unwrap();
        let target = 4.0 / 2f64.sqrt();
        assert!(o.t[0] / target < o.coarse_cell_ratio[0] && target / o.t[0] < o.coarse_cell_ratio[0]);

        let o = grid_oracle(&[src(0.0, 2.0)], &[1.0], 100).unwrap();
        assert!(o.t[0] >= 2.0 && o.t[0] / 2.0 < o.coarse_cell_ratio[0], "{:?}", o);
    }

    #[test]
    fn oracle_rejects_bad_requests() {
        assert_eq!(grid_oracle(&[src(4.0, 1.0)], &[1.0], 49), Err(SolverError::GridTooCoarse(49)));
        let s = vec![src(4.0, 1.0); 5];
        assert_eq!(grid_oracle(&s, &[1.0; 5], 50), Err(SolverError::TooManySources(5)));
    }

    #[test]
    fn solver_input_errors() {
        assert!(matches!(
            solve_relaxation(&[src(4.0, 1.0)], &[0.0]),
            Err(SolverError::NonPositiveWeight { index: 0, .. })
        ));
        assert!(matches!(
            solve_relaxation(&[src(4.0, 1.0)], &[1.0, 2.0]),
            Err(SolverError::LengthMismatch { .. })
        ));
        assert!(matches!(solve_relaxation(&[], &[]), Err(SolverError::InvalidSources(_))));
    }
}
