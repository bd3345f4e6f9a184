//! Alternating minimization of `φ` with optional pruning of vanishing sets.
//!
//! Starting from an interior `q⁰`, the solver iterates `r ← R(Q(r))`, which
//! decreases `φ_r` monotonically. On convergence it runs the optimality check
//! and, if a non-active set can still lower the objective, reactivates it and
//! resumes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{perturbed_interior_q, uniform_interior_q, APoint, QPoint, RPoint};
use crate::maps::{map_a, map_q_floored, map_q_or_interior, map_r, phi_r, QMap};
use crate::model::Problem;
use crate::optimality::{check_fixed_point, Direction, OptimalityError, Verdict, SUPPORT_THRESHOLD};
use crate::par;

/// Coordinates of active sets are raised to this before evaluating `Q`, so
/// underflow never pushes a letter out of `K*_r`.
pub const FLOOR: f64 = 1e-300;

/// Increase of `φ_r` within one step that is still attributed to rounding.
pub const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Init {
    /// `q_{j|x} = 1 / deg(x)`.
    Uniform,
    /// Uniform scaled by seeded factors in `[0.9, 1.1]`.
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kernel {
    /// `Unconditioned` when `|Y| = 1`, `Generic` otherwise.
    Auto,
    Generic,
    /// `r_j ← r_j Σ_{x∈j} p_x / A_x`; requires `|Y| = 1`.
    Unconditioned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once one step lowers `φ_r` by less than this...
    pub tol: f64,
    /// ...and either the fixed-point residual is below this (default
    /// `min(sqrt(tol), 1e-6)`)...
    pub residual_tol: Option<f64>,
    /// ...or the Frank–Wolfe gap, an upper bound on `φ_r - min φ_r` over the
    /// active face, is below this (default `tol`). Zero disables the gap test.
    pub gap_tol: Option<f64>,
    /// Sets whose coordinates all fall below this are deactivated. Zero
    /// disables pruning.
    pub eps_act: f64,
    pub init: Init,
    pub seed: u64,
    /// Record every n-th iteration in the trace.
    pub trace_every: usize,
    pub reactivation_limit: usize,
    pub check_tol: f64,
    pub kernel: Kernel,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
            residual_tol: None,
            gap_tol: None,
            eps_act: 0.0,
            init: Init::Uniform,
            seed: 0,
            trace_every: 1,
            reactivation_limit: 5,
            check_tol: crate::optimality::DEFAULT_CHECK_TOL,
            kernel: Kernel::Auto,
        }
    }
}

impl SolverConfig {
    pub fn effective_residual_tol(&self) -> f64 {
        self.residual_tol.unwrap_or_else(|| self.tol.sqrt().min(1e-6))
    }

    pub fn effective_gap_tol(&self) -> f64 {
        self.gap_tol.unwrap_or(self.tol)
    }

    fn validate(&self) -> Result<(), SolveError> {
        let bad = |msg: &str| Err(SolveError::InvalidConfig(msg.to_string()));
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive and finite");
        }
        if let Some(t) = self.residual_tol {
            if !(t > 0.0 && t.is_finite()) {
                return bad("residual_tol must be positive and finite");
            }
        }
        if let Some(g) = self.gap_tol {
            if !(g >= 0.0 && g.is_finite()) {
                return bad("gap_tol must be non-negative and finite");
            }
        }
        if !(0.0..1.0).contains(&self.eps_act) {
            return bad("eps_act must lie in [0, 1)");
        }
        if self.trace_every == 0 {
            return bad("trace_every must be at least 1");
        }
        if !(self.check_tol >= 0.0 && self.check_tol.is_finite()) {
            return bad("check_tol must be non-negative and finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("point lies outside K*_r: A_x vanishes for letters {vanishing:?}")]
    OutsideDomain { vanishing: Vec<usize> },
    #[error("the unconditioned kernel needs |Y| = 1, got |Y| = {ny}")]
    NotUnconditioned { ny: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Converged,
    MaxIters,
    /// The optimality check kept failing after the allowed number of
    /// reactivations, or a reactivation could not lower `φ_r`.
    ReactivationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    /// `φ_r(r)` after this iteration (and after any pruning in it).
    pub phi_nats: f64,
    /// `max |r_new - r_old|` over coordinates.
    pub max_delta: f64,
    pub active_sets: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum OptimalityOutcome {
    Checked(Verdict),
    Skipped { reason: String },
}

impl OptimalityOutcome {
    pub fn verdict(&self) -> Option<&Verdict> {
        match self {
            OptimalityOutcome::Checked(v) => Some(v),
            OptimalityOutcome::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub entropy_nats: f64,
    pub r_final: RPoint,
    pub q_final: QPoint,
    pub a_final: APoint,
    pub iterations: usize,
    pub termination: Termination,
    pub residual: f64,
    /// Frank–Wolfe gap at `r_final`.
    pub gap: f64,
    pub trace: Vec<TraceRow>,
    /// Sets deactivated by pruning, in the order it happened.
    pub pruned_sets: Vec<usize>,
    /// Sets reactivated after a failed optimality check.
    pub reactivated_sets: Vec<usize>,
    pub optimality: OptimalityOutcome,
}

fn resolve_kernel(p: &Problem, kernel: Kernel) -> Result<Kernel, SolveError> {
    match kernel {
        Kernel::Auto if p.ny() == 1 => Ok(Kernel::Unconditioned),
        Kernel::Auto => Ok(Kernel::Generic),
        Kernel::Unconditioned if p.ny() != 1 => Err(SolveError::NotUnconditioned { ny: p.ny() }),
        k => Ok(k),
    }
}

/// One application of the stepping map `R ∘ Q`, keeping the activity mask.
pub fn step(p: &Problem, r: &RPoint) -> Result<RPoint, SolveError> {
    step_with(p, r, resolve_kernel(p, Kernel::Auto)?)
}

fn step_with(p: &Problem, r: &RPoint, kernel: Kernel) -> Result<RPoint, SolveError> {
    match kernel {
        Kernel::Unconditioned => step_unconditioned(p, r),
        _ => match map_q_floored(p, r, FLOOR) {
            QMap::Point(q) => Ok(map_r(p, &q).with_active(r.active().to_vec())),
            QMap::Outside { vanishing } => Err(SolveError::OutsideDomain { vanishing }),
        },
    }
}

fn step_unconditioned(p: &Problem, r: &RPoint) -> Result<RPoint, SolveError> {
    let floored = |j: usize| if r.is_active(j) { r.get(j, 0).max(FLOOR) } else { 0.0 };
    let a: Vec<f64> = (0..p.nx())
        .map(|x| p.edges_of(x).map(|e| floored(p.edge_set(e))).sum())
        .collect();
    let vanishing: Vec<usize> = (0..p.nx()).filter(|&x| a[x] <= 0.0).collect();
    if !vanishing.is_empty() {
        return Err(SolveError::OutsideDomain { vanishing });
    }
    let values = (0..p.n_sets())
        .map(|j| {
            if !r.is_active(j) {
                return 0.0;
            }
            let d: f64 = p.members(j).iter().map(|&x| p.p_x()[x] / a[x]).sum();
            d * floored(j)
        })
        .collect();
    Ok(RPoint::new(1, values).with_active(r.active().to_vec()))
}

/// `max p^y |r'_{j|y} / r_{j|y} - 1|` over coordinates above the support
/// threshold, where `r' = R(Q(r))`. Equals `max |∂_{j|y} φ_r + p^y|`.
pub fn fixed_point_residual(p: &Problem, r: &RPoint) -> f64 {
    match step(p, r) {
        Ok(next) => residual_between(p, r, &next),
        Err(_) => f64::INFINITY,
    }
}

/// `Σ_y p^y max_j r'_{j|y} / r_{j|y} - 1` over positive coordinates, where
/// `r' = R(Q(r))`. Since `∂_{j|y} φ_r = -p^y r'_{j|y} / r_{j|y}` and `φ_r` is
/// convex, this bounds `φ_r(r) - min φ_r` on the face of the active sets.
pub fn frank_wolfe_gap(p: &Problem, r: &RPoint) -> f64 {
    match step(p, r) {
        Ok(next) => gap_between(p, r, &next),
        Err(_) => f64::INFINITY,
    }
}

fn gap_between(p: &Problem, r: &RPoint, next: &RPoint) -> f64 {
    let mut total = 0.0;
    for y in 0..r.ny() {
        let best = (0..r.n_sets())
            .filter(|&j| r.get(j, y) > 0.0)
            .map(|j| next.get(j, y) / r.get(j, y))
            .fold(0.0, f64::max);
        total += p.p_y()[y] * best;
    }
    (total - 1.0).max(0.0)
}

fn residual_between(p: &Problem, r: &RPoint, next: &RPoint) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..r.n_sets() {
        for y in 0..r.ny() {
            let v = r.get(j, y);
            if v > SUPPORT_THRESHOLD {
                worst = worst.max(p.p_y()[y] * (next.get(j, y) / v - 1.0).abs());
            }
        }
    }
    worst
}

/// Deactivates every active set whose coordinates are all below `eps` and
/// whose letters stay covered by other active sets.
fn prune(p: &Problem, r: &mut RPoint, eps: f64, protected: &[bool]) -> Vec<usize> {
    let mut pruned = Vec::new();
    for j in 0..p.n_sets() {
        if protected[j] || !r.is_active(j) || r.row(j).iter().any(|&v| v >= eps) {
            continue;
        }
        let covered = p
            .members(j)
            .iter()
            .all(|&x| p.edges_of(x).map(|e| p.edge_set(e)).any(|k| k != j && r.is_active(k)));
        if covered {
            r.deactivate(j);
            pruned.push(j);
        }
    }
    pruned
}

/// Moves mass `ε t_y` onto the set in `dir`, backtracking `ε` until `φ_r`
/// drops below `phi`.
fn reactivate(p: &Problem, r: &RPoint, dir: &Direction, phi: f64) -> Option<(RPoint, f64)> {
    let j = dir.set;
    let t_max = dir.t.iter().copied().fold(0.0, f64::max);
    let mut eps = (1e-2f64).min(0.5 / t_max);
    for _ in 0..60 {
        let mut cand = r.clone();
        cand.activate(j);
        for y in 0..r.ny() {
            let target = eps * dir.t[y];
            let others: f64 = (0..r.n_sets()).filter(|&k| k != j).map(|k| r.get(k, y)).sum();
            for k in (0..r.n_sets()).filter(|&k| k != j) {
                cand.set(k, y, r.get(k, y) / others * (1.0 - target));
            }
            cand.set(j, y, target);
        }
        let value = phi_r(p, &cand).value();
        if value < phi {
            return Some((cand, value));
        }
        eps /= 2.0;
    }
    None
}

fn initial_q(p: &Problem, cfg: &SolverConfig) -> QPoint {
    match cfg.init {
        Init::Uniform => uniform_interior_q(p),
        Init::Perturbed => perturbed_interior_q(p, cfg.seed),
    }
}

/// Runs the alternating minimization on `p` from the configured start.
pub fn solve(p: &Problem, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    solve_from(p, map_r(p, &initial_q(p, cfg)), cfg)
}

/// Runs the alternating minimization from `r0`, which must lie in `K*_r`.
/// Its activity mask is respected.
pub fn solve_from(p: &Problem, r0: RPoint, cfg: &SolverConfig) -> Result<SolveReport, SolveError> {
    cfg.validate()?;
    let kernel = resolve_kernel(p, cfg.kernel)?;
    let residual_tol = cfg.effective_residual_tol();
    let gap_tol = cfg.effective_gap_tol();
    if r0.n_sets() != p.n_sets() || r0.ny() != p.ny() {
        return Err(SolveError::InvalidConfig(format!(
            "start point is {}x{}, problem needs {}x{}",
            r0.n_sets(),
            r0.ny(),
            p.n_sets(),
            p.ny()
        )));
    }
    let a0 = map_a(p, &r0);
    let vanishing: Vec<usize> = (0..p.nx()).filter(|&x| a0.values()[x] <= 0.0).collect();
    if !vanishing.is_empty() {
        return Err(SolveError::OutsideDomain { vanishing });
    }

    let mut r = r0;
    let mut phi = phi_r(p, &r).value();
    let mut trace = vec![TraceRow {
        iteration: 0,
        phi_nats: phi,
        max_delta: 0.0,
        active_sets: r.active_count(),
    }];
    let mut iterations = 0;
    let mut pruned_sets = Vec::new();
    let mut reactivated_sets = Vec::new();
    // Reactivated sets start far below any useful `eps_act` and are never
    // pruned again.
    let mut protected = vec![false; p.n_sets()];

    let (termination, optimality) = 'outer: loop {
        let mut converged = false;
        while iterations < cfg.max_iters {
            let next = step_with(p, &r, kernel)?;
            iterations += 1;
            let phi_next = phi_r(p, &next).value();
            let decrease = phi - phi_next;
            if decrease < -MONOTONE_SLACK {
                log::debug!(
                    "phi rose by {:e} at iteration {iterations}; stopping at rounding floor",
                    -decrease
                );
                converged = true;
                break;
            }
            let residual = residual_between(p, &r, &next);
            let gap = gap_between(p, &r, &next);
            let max_delta = r.max_abs_diff(&next);
            r = next;
            phi = phi_next;

            let mut pruned_now = false;
            if cfg.eps_act > 0.0 {
                let pruned = prune(p, &mut r, cfg.eps_act, &protected);
                if !pruned.is_empty() {
                    log::debug!("iteration {iterations}: pruned sets {pruned:?}");
                    phi = phi_r(p, &r).value();
                    pruned_sets.extend(pruned);
                    pruned_now = true;
                }
            }
            if iterations % cfg.trace_every == 0 || pruned_now {
                trace.push(TraceRow {
                    iteration: iterations,
                    phi_nats: phi,
                    max_delta,
                    active_sets: r.active_count(),
                });
            }
            if !pruned_now && decrease < cfg.tol && (residual < residual_tol || gap < gap_tol) {
                converged = true;
                break;
            }
        }
        if !converged {
            break 'outer (
                Termination::MaxIters,
                OptimalityOutcome::Skipped {
                    reason: format!("iteration budget of {} exhausted", cfg.max_iters),
                },
            );
        }

        let verdict = match check_fixed_point(p, &r, cfg.check_tol) {
            Ok(v) => v,
            Err(e @ OptimalityError::NotFixedPoint { .. }) | Err(e @ OptimalityError::OutsideDomain { .. }) => {
                break 'outer (
                    Termination::Converged,
                    OptimalityOutcome::Skipped { reason: e.to_string() },
                );
            }
        };
        if verdict.optimal {
            break 'outer (Termination::Converged, OptimalityOutcome::Checked(verdict));
        }
        if reactivated_sets.len() >= cfg.reactivation_limit {
            break 'outer (Termination::ReactivationLimit, OptimalityOutcome::Checked(verdict));
        }
        let worst = verdict.worst_set.expect("a failing verdict names a set");
        let dir = verdict
            .directions
            .iter()
            .find(|d| d.set == worst)
            .expect("the worst failing set has a direction");
        match reactivate(p, &r, dir, phi) {
            Some((cand, value)) => {
                log::debug!("reactivating set {worst} (aux value {:.6})", dir.value);
                r = cand;
                phi = value;
                reactivated_sets.push(worst);
                protected[worst] = true;
                trace.push(TraceRow {
                    iteration: iterations,
                    phi_nats: phi,
                    max_delta: 0.0,
                    active_sets: r.active_count(),
                });
            }
            None => break 'outer (Termination::ReactivationLimit, OptimalityOutcome::Checked(verdict)),
        }
    };

    if trace.last().is_some_and(|row| row.iteration != iterations) {
        trace.push(TraceRow {
            iteration: iterations,
            phi_nats: phi,
            max_delta: 0.0,
            active_sets: r.active_count(),
        });
    }
    Ok(SolveReport {
        entropy_nats: phi,
        residual: fixed_point_residual(p, &r),
        gap: frank_wolfe_gap(p, &r),
        q_final: map_q_or_interior(p, &r),
        a_final: map_a(p, &r),
        r_final: r,
        iterations,
        termination,
        trace,
        pruned_sets,
        reactivated_sets,
        optimality,
    })
}

/// Conditional graph entropy `H_G(X|Y)` in nats.
pub fn entropy_conditional(p: &Problem, cfg: &SolverConfig) -> Result<f64, SolveError> {
    Ok(solve(p, cfg)?.entropy_nats)
}

/// Graph entropy `H_G(X)` in nats via the `|Y| = 1` kernel.
pub fn entropy_unconditioned(p: &Problem, cfg: &SolverConfig) -> Result<f64, SolveError> {
    if p.ny() != 1 {
        return Err(SolveError::NotUnconditioned { ny: p.ny() });
    }
    let cfg = SolverConfig {
        kernel: Kernel::Unconditioned,
        ..cfg.clone()
    };
    entropy_conditional(p, &cfg)
}

/// Solves independent problems, in parallel when enabled.
pub fn solve_batch(problems: &[Problem], cfg: &SolverConfig) -> Vec<Result<SolveReport, SolveError>> {
    par::map_slice(problems, |p| solve(p, cfg))
}
