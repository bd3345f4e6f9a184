//! First-order optimality certificate at fixed points of the stepping map.
//!
//! At a fixed point `r`, every coordinate with `r_{j|y} > 0` has
//! `∂_{j|y} φ_r = -p^y`. A non-active set `j` can lower `φ_r` iff moving
//! mass onto it along some direction `t` beats that rate, i.e. iff
//!
//! ```text
//! max_t  Σ_{x∈j} (p_x / a_x) Π_y t_y^{p(y|x)}   s.t.  t ≥ 0,  Σ_y p^y t_y = 1
//! ```
//!
//! exceeds one. The objective is concave (each product has exponents summing
//! to one), so the inner maximization is solved to a certified gap.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{APoint, RPoint};
use crate::maps::map_a;
use crate::model::Problem;
use crate::par;
use crate::solver::{fixed_point_residual, frank_wolfe_gap};

pub const DEFAULT_CHECK_TOL: f64 = 1e-6;

/// A point is accepted as a fixed point when its residual is at most this...
pub const FIXED_POINT_TOL: f64 = 1e-6;

/// ...or its Frank–Wolfe gap is at most this. Sets that vanish at the
/// minimum decay sublinearly, so their residual lags far behind the gap.
pub const FIXED_POINT_GAP: f64 = 1e-8;

/// A set whose coordinates are all at most this is treated as non-active.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

/// Relative duality-gap target of the inner maximizations.
pub const AUX_TOL: f64 = 1e-12;

pub const AUX_BUDGET: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimalityError {
    #[error("point is not a fixed point of the stepping map (residual {residual:e}, gap {gap:e})")]
    NotFixedPoint { residual: f64, gap: f64 },
    #[error("point lies outside K*_r: A_x vanishes for letters {vanishing:?}")]
    OutsideDomain { vanishing: Vec<usize> },
}

/// Result of one auxiliary maximization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxResult {
    /// Maximizer on the weighted simplex `Σ_y p^y t_y = 1`.
    pub t: Vec<f64>,
    /// Objective at `t`.
    pub value: f64,
    /// Frank–Wolfe gap at `t`; `value + gap` bounds the maximum from above.
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes `Σ_{x∈members} (p_x/a_x) Π_y t_y^{p(y|x)}` over `t ≥ 0`,
/// `Σ_y p^y t_y = 1`.
///
/// With `s_y = p^y t_y` the domain is the standard simplex and the objective
/// `h(s)` is concave and positively homogeneous of degree one, so
/// `Σ_y s_y ∂_y h = h` and the Frank–Wolfe gap is `max_y ∂_y h(s) - h(s)`.
/// Ascent uses the multiplicative update `s_y ← s_y ∂_y h(s) / h(s)`, which
/// stays on the simplex and never decreases `h`.
pub fn aux_maximize(p: &Problem, members: &[usize], a: &APoint, budget: usize, tol: f64) -> AuxResult {
    let ny = p.ny();
    let py = p.p_y();
    let w: Vec<f64> = members.iter().map(|&x| p.p_x()[x] / a.values()[x]).collect();
    let w_total: f64 = w.iter().sum();

    // Start at the w-weighted average of the conditionals: positive exactly
    // on the y's that matter.
    let mut s = vec![0.0; ny];
    for (k, &x) in members.iter().enumerate() {
        for &(y, alpha) in p.exponents(x) {
            s[y] += w[k] / w_total * alpha;
        }
    }

    let mut terms = vec![0.0; members.len()];
    let mut grad = vec![0.0; ny];
    let mut iterations = 0;
    loop {
        let h = evaluate(p, members, &w, &s, &mut terms);
        for (y, g) in grad.iter_mut().enumerate() {
            *g = if s[y] > 0.0 {
                members
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| terms[k] * p.y_given_x(x, y))
                    .sum::<f64>()
                    / s[y]
            } else {
                0.0
            };
        }
        let gap = (grad.iter().copied().fold(f64::NEG_INFINITY, f64::max) - h).max(0.0);
        let converged = gap <= tol * h.max(1.0);
        if converged || iterations >= budget {
            return AuxResult {
                t: (0..ny).map(|y| s[y] / py[y]).collect(),
                value: h,
                gap,
                iterations,
                converged,
            };
        }
        for y in 0..ny {
            s[y] *= grad[y] / h;
        }
        let total: f64 = s.iter().sum();
        s.iter_mut().for_each(|v| *v /= total);
        iterations += 1;
    }
}

/// `h(s)`, filling `terms[k]` with the contribution of `members[k]`.
fn evaluate(p: &Problem, members: &[usize], w: &[f64], s: &[f64], terms: &mut [f64]) -> f64 {
    let py = p.p_y();
    for (k, &x) in members.iter().enumerate() {
        let mut log_prod = 0.0;
        let mut zero = false;
        for &(y, alpha) in p.exponents(x) {
            if s[y] <= 0.0 {
                zero = true;
                break;
            }
            log_prod += alpha * (s[y] / py[y]).ln();
        }
        terms[k] = if zero { 0.0 } else { w[k] * log_prod.exp() };
    }
    terms.iter().sum()
}

/// An improving direction for a non-active set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub set: usize,
    pub t: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// `worst_value <= 1 + tolerance`.
    pub optimal: bool,
    /// Non-active set with the largest auxiliary maximum.
    pub worst_set: Option<usize>,
    /// Largest auxiliary maximum over non-active sets; `0` when every set is active.
    pub worst_value: f64,
    /// Improving directions, one per failing set, in canonical set order.
    pub directions: Vec<Direction>,
    pub tolerance: f64,
    /// Auxiliary maximum per set (non-active and active alike).
    pub values: Vec<f64>,
    /// Which sets were treated as non-active.
    pub non_active: Vec<bool>,
    /// Largest `|value - 1|` over active sets; zero at an exact fixed point.
    pub active_deviation: f64,
    /// Whether `active_deviation <= FIXED_POINT_TOL`.
    pub converged_input: bool,
    /// Largest duality gap left by the inner maximizations.
    pub max_gap: f64,
    /// Fixed-point residual of the checked point.
    pub residual: f64,
    /// Frank–Wolfe gap of the checked point.
    pub gap: f64,
}

/// Runs the optimality test at the (approximate) fixed point `r`.
pub fn check_fixed_point(p: &Problem, r: &RPoint, check_tol: f64) -> Result<Verdict, OptimalityError> {
    let a = map_a(p, r);
    let vanishing: Vec<usize> = (0..p.nx()).filter(|&x| a.values()[x] <= 0.0).collect();
    if !vanishing.is_empty() {
        return Err(OptimalityError::OutsideDomain { vanishing });
    }
    let residual = fixed_point_residual(p, r);
    let gap = frank_wolfe_gap(p, r);
    if residual > FIXED_POINT_TOL && gap > FIXED_POINT_GAP {
        return Err(OptimalityError::NotFixedPoint { residual, gap });
    }

    let non_active: Vec<bool> = (0..p.n_sets())
        .map(|j| !r.is_active(j) || r.row(j).iter().all(|&v| v <= SUPPORT_THRESHOLD))
        .collect();
    let results = par::map_range(p.n_sets(), |j| aux_maximize(p, p.members(j), &a, AUX_BUDGET, AUX_TOL));

    let mut worst_set = None;
    let mut worst_value = 0.0;
    let mut directions = Vec::new();
    let mut active_deviation: f64 = 0.0;
    for (j, res) in results.iter().enumerate() {
        if non_active[j] {
            if res.value > worst_value || worst_set.is_none() {
                worst_value = res.value;
                worst_set = Some(j);
            }
            if res.value > 1.0 + check_tol {
                directions.push(Direction {
                    set: j,
                    t: res.t.clone(),
                    value: res.value,
                });
            }
        } else {
            active_deviation = active_deviation.max((res.value - 1.0).abs());
        }
    }
    Ok(Verdict {
        optimal: worst_value <= 1.0 + check_tol,
        worst_set,
        worst_value,
        directions,
        tolerance: check_tol,
        values: results.iter().map(|r| r.value).collect(),
        non_active,
        active_deviation,
        converged_input: active_deviation <= FIXED_POINT_TOL,
        max_gap: results.iter().map(|r| r.gap).fold(0.0, f64::max),
        residual,
        gap,
    })
}
