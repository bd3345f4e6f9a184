//! The convex corner `K_a = {a : 0 ≤ a ≤ A(r) for some r}` and its `τ`.
//!
//! The entropy of `K_a` with respect to `p_X` equals the conditional graph
//! entropy. `τ(K_a)` is the smallest `t ≥ 1` with the constant vector `1/t`
//! in `K_a`, and `log τ = max_π H_π(K_a)`. It is computed as the saddle value
//!
//! ```text
//! log τ = max_π min_r -Σ_x π_x log A_x(r) = min_r max_x -log A_x(r)
//! ```
//!
//! Every inner solve at a distribution `π` yields a certified lower bound
//! (its value minus its Frank–Wolfe gap) and every `r` an upper bound
//! `-log min_x A_x(r)`. The outer loop raises `π` where `A_x` is small.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::RPoint;
use crate::maps::map_a;
use crate::model::Problem;
use crate::solver::{solve, solve_from, SolveError, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerQuery {
    /// Target width of the bracket on `log τ`, in nats.
    pub tol: f64,
    /// Iteration budget of each inner solve.
    pub inner_budget: usize,
    /// Number of updates of `π`.
    pub max_rounds: usize,
    /// Seed of the second start used to probe for multiple maximizers.
    pub seed: u64,
}

impl Default for CornerQuery {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            inner_budget: 100_000,
            max_rounds: 2_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauResult {
    /// `exp` of the midpoint of the log bracket.
    pub tau: f64,
    pub lower: f64,
    pub upper: f64,
    pub log_tau_nats: f64,
    pub log_tau_bits: f64,
    /// Width of the bracket on `log τ`.
    pub gap: f64,
    /// Distribution attaining the lower bound.
    pub pi: Vec<f64>,
    /// Point attaining the upper bound.
    pub r: RPoint,
    pub rounds: usize,
    /// Whether the bracket met `tol`. When false the bracket is still valid.
    pub converged: bool,
}

/// Entropy of `K_a` with respect to the `X` marginal of `p`, in nats.
pub fn corner_entropy(p: &Problem, cfg: &SolverConfig) -> Result<f64, SolveError> {
    Ok(solve(p, cfg)?.entropy_nats)
}

fn inner_config(q: &CornerQuery) -> SolverConfig {
    SolverConfig {
        max_iters: q.inner_budget,
        tol: 1e-15,
        residual_tol: Some(1e-12),
        gap_tol: Some((q.tol * 1e-2).max(1e-14)),
        trace_every: usize::MAX,
        ..SolverConfig::default()
    }
}

fn uniform_pi(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

fn normalized(mut pi: Vec<f64>) -> Vec<f64> {
    pi.iter_mut().for_each(|v| *v = v.max(1e-200));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= s);
    pi
}

fn saddle(p: &Problem, q: &CornerQuery, start: Vec<f64>) -> Result<TauResult, SolveError> {
    let cfg = inner_config(q);
    let mut pi = normalized(start);
    let mut r: Option<RPoint> = None;
    let mut best_lower = (f64::NEG_INFINITY, pi.clone());
    let mut best_upper = (f64::INFINITY, RPoint::uniform(p));
    let mut rounds = 0;
    while rounds < q.max_rounds {
        rounds += 1;
        let pp = p
            .with_x_distribution(&pi)
            .map_err(|e| SolveError::InvalidConfig(e.to_string()))?;
        let rep = match r.take() {
            Some(r0) => solve_from(&pp, r0, &cfg)?,
            None => solve(&pp, &cfg)?,
        };
        let lower = rep.entropy_nats - rep.gap;
        let a = map_a(p, &rep.r_final);
        let upper = -a.min().ln();
        if lower > best_lower.0 {
            best_lower = (lower, pi.clone());
        }
        if upper < best_upper.0 {
            best_upper = (upper, rep.r_final.clone());
        }
        log::trace!("tau round {rounds}: bracket [{:.9}, {:.9}]", best_lower.0, best_upper.0);
        if best_upper.0 - best_lower.0 <= q.tol {
            break;
        }
        pi = normalized(pi.iter().zip(a.values()).map(|(&w, &ax)| w / ax).collect());
        r = Some(rep.r_final);
    }
    let (lo, hi) = (best_lower.0.max(0.0), best_upper.0.max(0.0));
    let mid = 0.5 * (lo + hi);
    Ok(TauResult {
        tau: mid.exp(),
        lower: lo.exp(),
        upper: hi.exp(),
        log_tau_nats: mid,
        log_tau_bits: mid / std::f64::consts::LN_2,
        gap: hi - lo,
        pi: best_lower.1,
        r: best_upper.1,
        rounds,
        converged: hi - lo <= q.tol,
    })
}

/// `τ(K_a)`. Depends only on the set system and the conditionals `Y | X`.
pub fn tau(p: &Problem, q: &CornerQuery) -> Result<TauResult, SolveError> {
    validate(q)?;
    saddle(p, q, uniform_pi(p.nx()))
}

/// Whether the constant vector `1/t` lies in `K_a`, or `None` when `t`
/// falls inside the bracket computed for `τ`.
pub fn contains_constant(p: &Problem, t: f64, q: &CornerQuery) -> Result<Option<bool>, SolveError> {
    let res = tau(p, q)?;
    Ok(if t >= res.upper {
        Some(true)
    } else if t < res.lower {
        Some(false)
    } else {
        None
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntropy {
    pub pi: Vec<f64>,
    /// `H_π(K_a)` at `pi`, re-solved from scratch.
    pub value_nats: f64,
    pub tau: TauResult,
    /// Set when more than one distribution attains the maximum.
    pub multiple: bool,
}

/// A distribution of `X` maximizing `H_π(K_a)`, i.e. a normal of a
/// supporting hyperplane of `K_a` at the constant vector `1/τ`.
///
/// The saddle is run from the uniform distribution and from a seeded random
/// one; different maximizers from the two starts, or `τ = 1` (where every
/// distribution is a maximizer), set the multiplicity flag.
pub fn max_entropy_distribution(p: &Problem, q: &CornerQuery) -> Result<MaxEntropy, SolveError> {
    validate(q)?;
    let first = saddle(p, q, uniform_pi(p.nx()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(q.seed);
    let start = (0..p.nx()).map(|_| rng.random_range(0.5..1.5)).collect();
    let second = saddle(p, q, start)?;
    let spread: f64 = first.pi.iter().zip(&second.pi).map(|(a, b)| (a - b).abs()).sum();
    let trivial = first.upper - 1.0 <= q.tol;
    let pp = p
        .with_x_distribution(&first.pi)
        .map_err(|e| SolveError::InvalidConfig(e.to_string()))?;
    let value_nats = solve(&pp, &inner_config(q))?.entropy_nats;
    Ok(MaxEntropy {
        pi: first.pi.clone(),
        value_nats,
        multiple: trivial || spread > 1e-2,
        tau: first,
    })
}

fn validate(q: &CornerQuery) -> Result<(), SolveError> {
    if !(q.tol > 0.0 && q.tol.is_finite()) || q.max_rounds == 0 || q.inner_budget == 0 {
        return Err(SolveError::InvalidConfig(
            "corner query needs tol > 0 and positive budgets".to_string(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Graph, SetSystem};

    fn unconditioned(g: Graph) -> Problem {
        let n = g.vertex_count();
        Problem::new(vec![vec![1.0 / n as f64]; n], SetSystem::Graph(g)).unwrap()
    }

    #[test]
    fn five_cycle() {
        let res = tau(&unconditioned(Graph::cycle(5)), &CornerQuery::default()).unwrap();
        assert!((res.tau - 2.5).abs() < 1e-5, "{res:?}");
        assert!(res.lower <= 2.5 + 1e-12 && 2.5 <= res.upper + 1e-12);
        assert!(res.converged);
    }

    #[test]
    fn complete_and_edgeless() {
        for n in 2..=5 {
            let res = tau(&unconditioned(Graph::complete(n)), &CornerQuery::default()).unwrap();
            assert!((res.tau - n as f64).abs() < 1e-5);
        }
        let res = tau(&unconditioned(Graph::edgeless(4)), &CornerQuery::default()).unwrap();
        assert!((res.tau - 1.0).abs() < 1e-9);
    }

    #[test]
    fn max_entropy_distributions() {
        let q = CornerQuery::default();
        let c5 = max_entropy_distribution(&unconditioned(Graph::cycle(5)), &q).unwrap();
        assert!(c5.pi.iter().all(|&v| (v - 0.2).abs() < 1e-4), "{:?}", c5.pi);
        assert!((c5.value_nats - (2.5f64).ln()).abs() < 1e-5);
        assert!(!c5.multiple);

        let k2 = max_entropy_distribution(&unconditioned(Graph::complete(2)), &q).unwrap();
        assert!(k2.pi.iter().all(|&v| (v - 0.5).abs() < 1e-4));
        assert!((k2.value_nats - (2.0f64).ln()).abs() < 1e-6);

        let edgeless = max_entropy_distribution(&unconditioned(Graph::edgeless(3)), &q).unwrap();
        assert!(edgeless.multiple);
        assert!(edgeless.value_nats.abs() < 1e-12);
    }

    #[test]
    fn membership_of_constant_vectors() {
        let p = unconditioned(Graph::cycle(5));
        let q = CornerQuery::default();
        assert_eq!(contains_constant(&p, 2.6, &q).unwrap(), Some(true));
        assert_eq!(contains_constant(&p, 2.4, &q).unwrap(), Some(false));
    }
}
