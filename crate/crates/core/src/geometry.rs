//! Points of the two product-of-simplices domains and their validation.
//!
//! `QPoint` stores `q_{j|x}` only on the incidence pairs `(j, x)` with
//! `x ∈ j`, in the x-major layout of [`Problem::edges_of`]. `RPoint` stores
//! `r_{j|y}` densely, set-major (`j * |Y| + y`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::Problem;

/// Row sums must match one within this.
pub const SUM_TOLERANCE: f64 = 1e-12;

/// Negative coordinates at least this large are reported as clampable drift.
pub const CLAMP_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QPoint {
    values: Vec<f64>,
}

impl QPoint {
    pub fn from_edges(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Builds a point from a dense `|J| x |X|` table, reading only `x ∈ j` entries.
    pub fn from_dense(p: &Problem, dense: &[Vec<f64>]) -> Self {
        let values = (0..p.n_edges())
            .map(|e| dense[p.edge_set(e)][p.edge_letter(e)])
            .collect();
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `q_{j|x}`; zero when `x ∉ j`.
    pub fn get(&self, p: &Problem, j: usize, x: usize) -> f64 {
        p.edges_of(x)
            .find(|&e| p.edge_set(e) == j)
            .map_or(0.0, |e| self.values[e])
    }

    /// `t * self + (1 - t) * other`.
    pub fn mix(&self, other: &Self, t: f64) -> Self {
        Self {
            values: mix(&self.values, &other.values, t),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RPoint {
    ny: usize,
    values: Vec<f64>,
    active: Vec<bool>,
}

impl RPoint {
    /// Dense set-major values, all sets active.
    pub fn new(ny: usize, values: Vec<f64>) -> Self {
        assert!(ny > 0 && values.len().is_multiple_of(ny), "values must be |J| x |Y|");
        let active = vec![true; values.len() / ny];
        Self { ny, values, active }
    }

    /// From rows `r[j][y]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let ny = rows.first().map_or(1, Vec::len);
        Self::new(ny, rows.iter().flatten().copied().collect())
    }

    /// `r_{j|y} = 1 / |J|` everywhere.
    pub fn uniform(p: &Problem) -> Self {
        let nj = p.n_sets();
        Self::new(p.ny(), vec![1.0 / nj as f64; nj * p.ny()])
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_sets(&self) -> usize {
        self.active.len()
    }

    pub fn get(&self, j: usize, y: usize) -> f64 {
        self.values[j * self.ny + y]
    }

    pub fn set(&mut self, j: usize, y: usize, v: f64) {
        self.values[j * self.ny + y] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.ny..(j + 1) * self.ny]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_active(&self, j: usize) -> bool {
        self.active[j]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Marks `j` non-active, zeroes its row and rescales every column back
    /// onto the simplex.
    pub fn deactivate(&mut self, j: usize) {
        self.active[j] = false;
        for y in 0..self.ny {
            self.values[j * self.ny + y] = 0.0;
        }
        self.renormalize_columns();
    }

    pub fn activate(&mut self, j: usize) {
        self.active[j] = true;
    }

    pub fn with_active(mut self, active: Vec<bool>) -> Self {
        assert_eq!(active.len(), self.active.len());
        for (j, &a) in active.iter().enumerate() {
            if !a {
                for y in 0..self.ny {
                    self.values[j * self.ny + y] = 0.0;
                }
            }
        }
        self.active = active;
        self
    }

    pub fn renormalize_columns(&mut self) {
        let nj = self.n_sets();
        for y in 0..self.ny {
            let s: f64 = (0..nj).map(|j| self.values[j * self.ny + y]).sum();
            if s > 0.0 {
                for j in 0..nj {
                    self.values[j * self.ny + y] /= s;
                }
            }
        }
    }

    /// `t * self + (1 - t) * other`; active where either is active.
    pub fn mix(&self, other: &Self, t: f64) -> Self {
        Self {
            ny: self.ny,
            values: mix(&self.values, &other.values, t),
            active: self.active.iter().zip(&other.active).map(|(&a, &b)| a || b).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }
}

/// Image point `a = A(r)`, one coordinate per letter of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct APoint(pub Vec<f64>);

impl APoint {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn mix(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&u, &v)| t * u + (1.0 - t) * v).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// `q_{j|x} = 1 / deg(x)` for every `j ∋ x`.
pub fn uniform_interior_q(p: &Problem) -> QPoint {
    let mut values = vec![0.0; p.n_edges()];
    for x in 0..p.nx() {
        let w = 1.0 / p.degree(x) as f64;
        for e in p.edges_of(x) {
            values[e] = w;
        }
    }
    QPoint { values }
}

/// The uniform interior point with each coordinate scaled by a factor drawn
/// from `[0.9, 1.1]`, then renormalized per `x`. Reproducible from `seed`.
pub fn perturbed_interior_q(p: &Problem, seed: u64) -> QPoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; p.n_edges()];
    for x in 0..p.nx() {
        let range = p.edges_of(x);
        for e in range.clone() {
            values[e] = rng.random_range(0.9..=1.1);
        }
        let s: f64 = values[range.clone()].iter().sum();
        for e in range {
            values[e] /= s;
        }
    }
    QPoint { values }
}

/// One violated constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    /// The point has the wrong number of coordinates for the problem.
    Shape { expected: usize, found: usize },
    /// A coordinate is negative (or not finite). Drift no larger than
    /// [`CLAMP_TOLERANCE`] is marked clampable.
    Negative { index: usize, value: f64, clampable: bool },
    /// The simplex row `row` (an `x` for q-points, a `y` for r-points) sums
    /// to `1 - deficit`.
    Sum { row: usize, deficit: f64 },
    /// A non-active set carries mass.
    InactiveMass { set: usize, y: usize, value: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when every violation is floating-point drift that
    /// [`clamp_q`]/[`clamp_r`] would repair.
    pub fn only_clampable(&self) -> bool {
        self.violations.iter().all(|v| match v {
            Violation::Negative { clampable, .. } => *clampable,
            Violation::Sum { deficit, .. } => deficit.abs() <= 1e-9,
            _ => false,
        })
    }
}

fn check_coordinate(violations: &mut Vec<Violation>, index: usize, value: f64) {
    if !(value >= 0.0) {
        violations.push(Violation::Negative {
            index,
            value,
            clampable: value.is_finite() && value >= -CLAMP_TOLERANCE,
        });
    }
}

pub fn validate_q(p: &Problem, q: &QPoint) -> ValidationReport {
    let mut violations = Vec::new();
    if q.values.len() != p.n_edges() {
        violations.push(Violation::Shape {
            expected: p.n_edges(),
            found: q.values.len(),
        });
        return ValidationReport { violations };
    }
    for (e, &v) in q.values.iter().enumerate() {
        check_coordinate(&mut violations, e, v);
    }
    for x in 0..p.nx() {
        let s: f64 = q.values[p.edges_of(x)].iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            violations.push(Violation::Sum {
                row: x,
                deficit: 1.0 - s,
            });
        }
    }
    ValidationReport { violations }
}

pub fn validate_r(p: &Problem, r: &RPoint) -> ValidationReport {
    let mut violations = Vec::new();
    let expected = p.n_sets() * p.ny();
    if r.ny != p.ny() || r.values.len() != expected {
        violations.push(Violation::Shape {
            expected,
            found: r.values.len(),
        });
        return ValidationReport { violations };
    }
    for (i, &v) in r.values.iter().enumerate() {
        check_coordinate(&mut violations, i, v);
    }
    for y in 0..r.ny {
        let s: f64 = (0..r.n_sets()).map(|j| r.get(j, y)).sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            violations.push(Violation::Sum {
                row: y,
                deficit: 1.0 - s,
            });
        }
    }
    for j in (0..r.n_sets()).filter(|&j| !r.active[j]) {
        for y in 0..r.ny {
            if r.get(j, y) != 0.0 {
                violations.push(Violation::InactiveMass {
                    set: j,
                    y,
                    value: r.get(j, y),
                });
            }
        }
    }
    ValidationReport { violations }
}

/// Clamps drift-size negative coordinates to zero and renormalizes each `x` row.
pub fn clamp_q(p: &Problem, q: &mut QPoint) {
    for v in &mut q.values {
        if *v < 0.0 && *v >= -CLAMP_TOLERANCE {
            *v = 0.0;
        }
    }
    for x in 0..p.nx() {
        let s: f64 = q.values[p.edges_of(x)].iter().sum();
        if s > 0.0 {
            for e in p.edges_of(x) {
                q.values[e] /= s;
            }
        }
    }
}

/// Clamps drift-size negative coordinates to zero and renormalizes each `y` column.
pub fn clamp_r(r: &mut RPoint) {
    for v in &mut r.values {
        if *v < 0.0 && *v >= -CLAMP_TOLERANCE {
            *v = 0.0;
        }
    }
    r.renormalize_columns();
}
