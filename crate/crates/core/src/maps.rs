//! The analytic kernel: the maps `A`, `Q`, `R` and the objectives
//! `φ`, `δ`, `φ_q`, `φ_r`, `φ_a`.
//!
//! Everything is in nats. `f(u, v) = u log u - u log v` follows the
//! conventions `f(0, v) = 0` and `f(u, 0) = +∞` for `u > 0`, and products
//! `Π_y r^{p(y|x)}` treat `t^0 = 1` even for `t = 0`. Sums run x-major,
//! then over sets, then over `y`, so repeated evaluations are bit-identical.

use std::fmt;
use std::ops::Add;

use crate::geometry::{uniform_interior_q, APoint, QPoint, RPoint};
use crate::model::Problem;

/// A real number or `+∞`; never NaN.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ExtendedValue(f64);

impl ExtendedValue {
    pub const ZERO: Self = Self(0.0);
    pub const INFINITY: Self = Self(f64::INFINITY);

    /// Panics on NaN or `-∞`.
    pub fn new(v: f64) -> Self {
        assert!(!v.is_nan(), "extended value must not be NaN");
        assert!(v != f64::NEG_INFINITY, "extended value must not be -inf");
        Self(v)
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        !self.0.is_finite()
    }

    /// The value as an `f64` (`f64::INFINITY` for `+∞`).
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }
}

impl Add for ExtendedValue {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self(self.0 + rhs.0)
    }
}

impl fmt::Display for ExtendedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_finite() {
            write!(f, "{}", self.0)
        } else {
            write!(f, "+inf")
        }
    }
}

/// `f(u, v) = u log u - u log v` with the zero conventions.
pub fn kl_term(u: f64, v: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else if v == 0.0 {
        f64::INFINITY
    } else {
        u * (u.ln() - v.ln())
    }
}

/// `u log u` with `0 log 0 = 0`.
pub(crate) fn xlogx(u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u * u.ln()
    }
}

/// `g_{j,x}(r) = Π_y r_{j|y}^{p(y|x)}`, zero for non-active `j`.
pub fn product_term(p: &Problem, r: &RPoint, j: usize, x: usize) -> f64 {
    if !r.is_active(j) {
        return 0.0;
    }
    product_term_floored(p, r, j, x, 0.0)
}

/// As [`product_term`] but coordinates are raised to at least `floor`
/// first. Activity is not consulted.
pub(crate) fn product_term_floored(p: &Problem, r: &RPoint, j: usize, x: usize, floor: f64) -> f64 {
    let exps = p.exponents(x);
    if let [(y, a)] = exps {
        if *a == 1.0 {
            return r.get(j, *y).max(floor);
        }
    }
    let mut log_sum = 0.0;
    for &(y, a) in exps {
        let t = r.get(j, y).max(floor);
        if t <= 0.0 {
            return 0.0;
        }
        log_sum += a * t.ln();
    }
    log_sum.exp()
}

/// Per-edge products `g_{j,x}` (x-major edge layout) and `A_x = Σ_{j∋x} g_{j,x}`.
pub(crate) fn products_and_a(p: &Problem, r: &RPoint, floor: f64) -> (Vec<f64>, Vec<f64>) {
    let mut g = vec![0.0; p.n_edges()];
    let mut a = vec![0.0; p.nx()];
    for x in 0..p.nx() {
        let mut s = 0.0;
        for e in p.edges_of(x) {
            let j = p.edge_set(e);
            if r.is_active(j) {
                g[e] = product_term_floored(p, r, j, x, floor);
                s += g[e];
            }
        }
        a[x] = s;
    }
    (g, a)
}

/// `R_{j|y}(q) = Σ_{x∈j} p(x|y) q_{j|x}`, the law of `J | Y = y` in the
/// chain `Y - X - J`.
pub fn map_r(p: &Problem, q: &QPoint) -> RPoint {
    let ny = p.ny();
    let qv = q.values();
    let mut values = vec![0.0; p.n_sets() * ny];
    for j in 0..p.n_sets() {
        for y in 0..ny {
            values[j * ny + y] = p.set_edges(j).iter().map(|&(x, e)| p.x_given_y(x, y) * qv[e]).sum();
        }
    }
    RPoint::new(ny, values)
}

/// `A_x(r) = Σ_{j∋x} Π_y r_{j|y}^{p(y|x)}`.
pub fn map_a(p: &Problem, r: &RPoint) -> APoint {
    APoint(products_and_a(p, r, 0.0).1)
}

/// Result of evaluating `Q`.
#[derive(Debug, Clone, PartialEq)]
pub enum QMap {
    Point(QPoint),
    /// `r` lies outside `K*_r`: these letters have `A_x(r) = 0`.
    Outside {
        vanishing: Vec<usize>,
    },
}

impl QMap {
    pub fn point(self) -> Option<QPoint> {
        match self {
            QMap::Point(q) => Some(q),
            QMap::Outside { .. } => None,
        }
    }
}

/// `Q_{j|x}(r) = g_{j,x}(r) / A_x(r)`.
pub fn map_q(p: &Problem, r: &RPoint) -> QMap {
    map_q_floored(p, r, 0.0)
}

pub(crate) fn map_q_floored(p: &Problem, r: &RPoint, floor: f64) -> QMap {
    let (mut g, a) = products_and_a(p, r, floor);
    let vanishing: Vec<usize> = (0..p.nx()).filter(|&x| a[x] <= 0.0).collect();
    if !vanishing.is_empty() {
        return QMap::Outside { vanishing };
    }
    for x in 0..p.nx() {
        for e in p.edges_of(x) {
            g[e] /= a[x];
        }
    }
    QMap::Point(QPoint::from_edges(g))
}

/// `Q(r)`, or the uniform interior point when `r ∉ K*_r`.
pub fn map_q_or_interior(p: &Problem, r: &RPoint) -> QPoint {
    match map_q(p, r) {
        QMap::Point(q) => q,
        QMap::Outside { .. } => uniform_interior_q(p),
    }
}

/// `φ(q, r) = Σ_{x,y,j} p(x,y) f(q_{j|x}, r_{j|y})`.
pub fn phi(p: &Problem, q: &QPoint, r: &RPoint) -> ExtendedValue {
    let qv = q.values();
    let mut total = 0.0;
    for x in 0..p.nx() {
        for e in p.edges_of(x) {
            let j = p.edge_set(e);
            for y in 0..p.ny() {
                let w = p.joint(x, y);
                if w == 0.0 {
                    continue;
                }
                let t = kl_term(qv[e], r.get(j, y));
                if t.is_infinite() {
                    return ExtendedValue::INFINITY;
                }
                total += w * t;
            }
        }
    }
    ExtendedValue::new(total)
}

/// `δ(q, q') = Σ_x p_x Σ_{j∋x} f(q_{j|x}, q'_{j|x})`.
pub fn delta(p: &Problem, q: &QPoint, q2: &QPoint) -> ExtendedValue {
    let (a, b) = (q.values(), q2.values());
    let mut total = 0.0;
    for x in 0..p.nx() {
        let mut inner = 0.0;
        for e in p.edges_of(x) {
            let t = kl_term(a[e], b[e]);
            if t.is_infinite() {
                return ExtendedValue::INFINITY;
            }
            inner += t;
        }
        total += p.p_x()[x] * inner;
    }
    ExtendedValue::new(total)
}

/// `φ_q(q) = φ(q, R(q)) = H(J|Y) - H(J|X)`, by the closed form.
pub fn phi_q(p: &Problem, q: &QPoint) -> ExtendedValue {
    let qv = q.values();
    let neg_h_jx: f64 = (0..p.nx())
        .map(|x| p.p_x()[x] * p.edges_of(x).map(|e| xlogx(qv[e])).sum::<f64>())
        .sum();
    let r = map_r(p, q);
    let neg_h_jy: f64 = (0..p.ny())
        .map(|y| p.p_y()[y] * (0..p.n_sets()).map(|j| xlogx(r.get(j, y))).sum::<f64>())
        .sum();
    ExtendedValue::new(neg_h_jx - neg_h_jy)
}

/// `φ_r(r) = -Σ_x p_x log A_x(r)`; `+∞` outside `K*_r`.
pub fn phi_r(p: &Problem, r: &RPoint) -> ExtendedValue {
    phi_a(p, &map_a(p, r))
}

/// `φ_a(a) = -Σ_x p_x log a_x`.
pub fn phi_a(p: &Problem, a: &APoint) -> ExtendedValue {
    let mut total = 0.0;
    for (x, &ax) in a.values().iter().enumerate() {
        if ax <= 0.0 {
            return ExtendedValue::INFINITY;
        }
        total -= p.p_x()[x] * ax.ln();
    }
    ExtendedValue::new(total)
}

/// `∂ g_{j,x} / ∂ r_{j|y}`; `+∞` where a zero coordinate meets an exponent in `(0, 1)`.
pub fn product_partial(p: &Problem, r: &RPoint, j: usize, x: usize, y: usize) -> f64 {
    let Some(&(_, alpha)) = p.exponents(x).iter().find(|&&(yy, _)| yy == y) else {
        return 0.0;
    };
    let mut log_rest = 0.0;
    for &(yy, a) in p.exponents(x) {
        if yy == y {
            continue;
        }
        let t = r.get(j, yy);
        if t <= 0.0 {
            return 0.0;
        }
        log_rest += a * t.ln();
    }
    let t = r.get(j, y);
    if alpha == 1.0 {
        return log_rest.exp();
    }
    if t <= 0.0 {
        return f64::INFINITY;
    }
    alpha * ((alpha - 1.0) * t.ln() + log_rest).exp()
}

/// Gradient of `φ_r` on `R^{J×Y}`, set-major like [`RPoint::values`]:
/// `∂_{j|y} φ_r = -Σ_{x∈j} p_x ∂_{j|y} g_{j,x} / A_x`. Requires `r ∈ K*_r`.
/// Non-active sets are treated like any other coordinates.
pub fn phi_r_gradient(p: &Problem, r: &RPoint) -> Vec<f64> {
    let all_active = r.clone().with_active(vec![true; r.n_sets()]);
    let a = map_a(p, &all_active);
    let ny = p.ny();
    let mut grad = vec![0.0; p.n_sets() * ny];
    for j in 0..p.n_sets() {
        for y in 0..ny {
            grad[j * ny + y] = -p
                .members(j)
                .iter()
                .map(|&x| p.p_x()[x] * product_partial(p, &all_active, j, x, y) / a.0[x])
                .sum::<f64>();
        }
    }
    grad
}
