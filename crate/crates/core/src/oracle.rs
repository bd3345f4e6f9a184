//! Brute-force verifiers for small instances.
//!
//! Everything here evaluates the objectives from their entropy and product
//! formulas directly and shares no code with [`crate::maps`] or
//! [`crate::solver`], so agreement between the two is evidence rather than
//! tautology.
//!
//! Both grid minimizers report the exact grid minimum together with a
//! rigorous lower bound on the continuous minimum. The objectives are convex,
//! so at every interior grid point `g`
//!
//! ```text
//! min f ≥ f(g) - max_{s} <∇f(g), g - s>
//! ```
//!
//! with `s` ranging over the vertices of the product of simplices. The bound
//! is taken at the best point of a short exponentiated-gradient run started
//! next to the grid argmin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RPoint;
use crate::maps::phi_r_gradient;
use crate::model::Problem;
use crate::par;

/// Descent steps spent tightening the lower bound.
const REFINE_STEPS: usize = 500;

/// Largest number of free grid dimensions accepted.
pub const MAX_FREE_DIMS: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{free} free dimensions exceed the brute-force limit of {MAX_FREE_DIMS}")]
    TooLarge { free: usize },
    #[error("resolution must lie in (0, 1], got {0}")]
    BadResolution(f64),
    #[error("coordinate {index} = {value:e} is within 10 steps of the boundary")]
    TooCloseToBoundary { index: usize, value: f64 },
    #[error("point has shape {got}, expected {expected}")]
    Shape { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Exact minimum over the grid.
    pub minimum: f64,
    /// Grid point attaining it: edge-ordered `q` or set-major `r`.
    pub argmin: Vec<f64>,
    pub grid_resolution: f64,
    /// Each simplex is split into this many steps.
    pub divisions: usize,
    /// `(|E|, |J|·|Y|)`.
    pub instance_dims: (usize, usize),
    pub free_dims: usize,
    pub grid_points: usize,
    /// Certified lower bound on the continuous minimum.
    pub lower_bound: f64,
    /// `minimum - lower_bound`.
    pub slack: f64,
}

/// Default grid resolution for the given number of free dimensions.
pub fn default_resolution(free_dims: usize) -> f64 {
    if free_dims <= 2 {
        1e-3
    } else {
        2e-2
    }
}

pub fn free_dims_q(p: &Problem) -> usize {
    p.n_edges() - p.nx()
}

pub fn free_dims_r(p: &Problem) -> usize {
    p.ny() * (p.n_sets() - 1)
}

/// `φ_q(q) = H(J|Y) - H(J|X)` for edge-ordered `q`.
pub fn phi_q_direct(p: &Problem, q: &[f64]) -> f64 {
    let mut h_jx = 0.0;
    for x in 0..p.nx() {
        for e in p.edges_of(x) {
            if q[e] > 0.0 {
                h_jx -= p.p_x()[x] * q[e] * q[e].ln();
            }
        }
    }
    let mut h_jy = 0.0;
    for py in joint_jy(p, q) {
        for (y, pjy) in py.into_iter().enumerate() {
            if pjy > 0.0 {
                h_jy -= pjy * (pjy / p.p_y()[y]).ln();
            }
        }
    }
    h_jy - h_jx
}

/// `P(J = j, Y = y)` under `q`.
fn joint_jy(p: &Problem, q: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; p.ny()]; p.n_sets()];
    for x in 0..p.nx() {
        for e in p.edges_of(x) {
            let j = p.edge_set(e);
            for y in 0..p.ny() {
                out[j][y] += p.joint(x, y) * q[e];
            }
        }
    }
    out
}

/// `∂φ_q / ∂q_{j|x} = p_x log q_{j|x} - Σ_y p(x,y) log P(j|y)`; needs `q > 0`.
fn phi_q_gradient_direct(p: &Problem, q: &[f64]) -> Vec<f64> {
    let jy = joint_jy(p, q);
    let mut grad = vec![0.0; q.len()];
    for x in 0..p.nx() {
        for e in p.edges_of(x) {
            let j = p.edge_set(e);
            let mut v = p.p_x()[x] * q[e].ln();
            for y in 0..p.ny() {
                let pxy = p.joint(x, y);
                if pxy > 0.0 {
                    v -= pxy * (jy[j][y] / p.p_y()[y]).ln();
                }
            }
            grad[e] = v;
        }
    }
    grad
}

/// `Π_y t_y^{p(y|x)}` with `t^0 = 1`.
fn monomial(p: &Problem, x: usize, t: impl Fn(usize) -> f64) -> f64 {
    let mut v = 1.0;
    for y in 0..p.ny() {
        let alpha = p.y_given_x(x, y);
        if alpha > 0.0 {
            v *= t(y).powf(alpha);
        }
    }
    v
}

fn a_direct(p: &Problem, r: &[f64]) -> Vec<f64> {
    let ny = p.ny();
    (0..p.nx())
        .map(|x| {
            (0..p.n_sets())
                .filter(|&j| p.contains(j, x))
                .map(|j| monomial(p, x, |y| r[j * ny + y]))
                .sum()
        })
        .collect()
}

/// `φ_r(r) = -Σ_x p_x log A_x(r)` for set-major `r`; `+∞` outside `K*_r`.
pub fn phi_r_direct(p: &Problem, r: &[f64]) -> f64 {
    a_direct(p, r)
        .iter()
        .zip(p.p_x())
        .map(|(&a, &px)| if a > 0.0 { -px * a.ln() } else { f64::INFINITY })
        .sum()
}

/// `∂φ_r / ∂r_{j|y} = -Σ_{x∈j} p_x p(y|x) g_{j,x} / (r_{j|y} A_x)`; needs `r > 0`.
fn phi_r_gradient_direct(p: &Problem, r: &[f64]) -> Vec<f64> {
    let ny = p.ny();
    let a = a_direct(p, r);
    let mut grad = vec![0.0; r.len()];
    for j in 0..p.n_sets() {
        for x in (0..p.nx()).filter(|&x| p.contains(j, x)) {
            let g = monomial(p, x, |y| r[j * ny + y]);
            for y in 0..ny {
                let alpha = p.y_given_x(x, y);
                if alpha > 0.0 {
                    grad[j * ny + y] -= p.p_x()[x] * alpha * g / (r[j * ny + y] * a[x]);
                }
            }
        }
    }
    grad
}

/// All ways to write `n` as an ordered sum of `k` non-negative integers.
pub fn compositions(n: usize, k: usize) -> Vec<Vec<u32>> {
    fn rec(n: usize, k: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            prefix.push(n as u32);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=n {
            prefix.push(first as u32);
            rec(n - first, k - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// A product of simplex grids, indexed in mixed radix.
struct ProductGrid {
    blocks: Vec<Vec<Vec<u32>>>,
    divisions: usize,
    size: usize,
}

impl ProductGrid {
    fn new(block_sizes: &[usize], divisions: usize) -> Self {
        let blocks: Vec<Vec<Vec<u32>>> = block_sizes.iter().map(|&k| compositions(divisions, k)).collect();
        let size = blocks.iter().map(Vec::len).product();
        Self {
            blocks,
            divisions,
            size,
        }
    }

    /// Fills `out` with the concatenated block coordinates of point `index`.
    fn point(&self, mut index: usize, out: &mut Vec<f64>) {
        out.clear();
        for block in &self.blocks {
            let c = &block[index % block.len()];
            index /= block.len();
            out.extend(c.iter().map(|&v| v as f64 / self.divisions as f64));
        }
    }
}

fn divisions_for(resolution: f64) -> Result<usize, OracleError> {
    if !(resolution > 0.0 && resolution <= 1.0) {
        return Err(OracleError::BadResolution(resolution));
    }
    Ok((1.0 / resolution).round().max(1.0) as usize)
}

/// Frank–Wolfe gap of a gradient on a product of simplices whose blocks are
/// consecutive runs of `block_sizes`.
fn product_simplex_gap(point: &[f64], grad: &[f64], block_sizes: &[usize]) -> f64 {
    let mut gap = 0.0;
    let mut start = 0;
    for &k in block_sizes {
        let (pt, g) = (&point[start..start + k], &grad[start..start + k]);
        let inner: f64 = pt.iter().zip(g).map(|(a, b)| a * b).sum();
        gap += inner - g.iter().copied().fold(f64::INFINITY, f64::min);
        start += k;
    }
    gap
}

type Objective<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;
type Gradient<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + Sync + 'a>;

struct GridSearch<'a> {
    grid: ProductGrid,
    block_sizes: Vec<usize>,
    /// `order[i]` is the objective coordinate of block coordinate `i`.
    order: Vec<usize>,
    value: Objective<'a>,
    gradient: Gradient<'a>,
}

impl GridSearch<'_> {
    fn layout(&self, pt: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; pt.len()];
        for (i, &v) in pt.iter().enumerate() {
            out[self.order[i]] = v;
        }
        out
    }

    fn block_gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = (self.gradient)(x);
        self.order.iter().map(|&k| g[k]).collect()
    }

    /// Best `f(z) - gap(z)` along exponentiated-gradient descent started
    /// just inside the grid argmin. Any interior `z` gives a valid bound;
    /// descending only makes it tighter.
    fn refined_bound(&self, start: &[f64]) -> f64 {
        let mut z = Vec::with_capacity(start.len());
        let mut offset = 0;
        for &k in &self.block_sizes {
            z.extend(
                start[offset..offset + k]
                    .iter()
                    .map(|&v| (1.0 - 1e-3) * v + 1e-3 / k as f64),
            );
            offset += k;
        }
        let mut fz = (self.value)(&self.layout(&z));
        let mut best = f64::NEG_INFINITY;
        let mut eta = 1.0;
        for _ in 0..REFINE_STEPS {
            let g = self.block_gradient(&self.layout(&z));
            best = best.max(fz - product_simplex_gap(&z, &g, &self.block_sizes));
            let mut cand = Vec::with_capacity(z.len());
            let mut offset = 0;
            for &k in &self.block_sizes {
                let (zb, gb) = (&z[offset..offset + k], &g[offset..offset + k]);
                let gmin = gb.iter().copied().fold(f64::INFINITY, f64::min);
                let w: Vec<f64> = zb
                    .iter()
                    .zip(gb)
                    .map(|(&v, &d)| v * (-eta * (d - gmin)).exp())
                    .collect();
                let total: f64 = w.iter().sum();
                cand.extend(w.iter().map(|v| v / total));
                offset += k;
            }
            let fc = (self.value)(&self.layout(&cand));
            if fc <= fz && cand.iter().all(|&v| v > 0.0) {
                z = cand;
                fz = fc;
                eta *= 1.5;
            } else {
                eta *= 0.5;
            }
        }
        best
    }

    fn run(&self, resolution: f64, dims: (usize, usize), free: usize) -> OracleResult {
        let eval = |i: usize| {
            let mut pt = Vec::new();
            self.grid.point(i, &mut pt);
            (self.value)(&self.layout(&pt))
        };
        let (best, minimum) = par::argmin_range(self.grid.size, eval).expect("grid is never empty");
        let mut argmin = Vec::new();
        self.grid.point(best, &mut argmin);
        let bound = if free == 0 {
            minimum
        } else {
            self.refined_bound(&argmin)
        };
        let lower_bound = bound.min(minimum);
        OracleResult {
            minimum,
            argmin: self.layout(&argmin),
            grid_resolution: resolution,
            divisions: self.grid.divisions,
            instance_dims: dims,
            free_dims: free,
            grid_points: self.grid.size,
            lower_bound,
            slack: minimum - lower_bound,
        }
    }
}

/// Grid minimum of `φ_q` over the product of the per-letter simplices.
pub fn brute_force_q(p: &Problem, resolution: f64) -> Result<OracleResult, OracleError> {
    let free = free_dims_q(p);
    if free > MAX_FREE_DIMS {
        return Err(OracleError::TooLarge { free });
    }
    let divisions = divisions_for(resolution)?;
    let block_sizes: Vec<usize> = (0..p.nx()).map(|x| p.degree(x)).collect();
    // Edges are x-major, so block order is already edge order.
    let search = GridSearch {
        grid: ProductGrid::new(&block_sizes, divisions),
        block_sizes,
        order: (0..p.n_edges()).collect(),
        value: Box::new(|q: &[f64]| phi_q_direct(p, q)),
        gradient: Box::new(|q: &[f64]| phi_q_gradient_direct(p, q)),
    };
    Ok(search.run(resolution, (p.n_edges(), p.n_sets() * p.ny()), free))
}

/// Grid minimum of `φ_r` over the product of the per-`y` simplices.
pub fn brute_force_r(p: &Problem, resolution: f64) -> Result<OracleResult, OracleError> {
    let free = free_dims_r(p);
    if free > MAX_FREE_DIMS {
        return Err(OracleError::TooLarge { free });
    }
    let divisions = divisions_for(resolution)?;
    let (nj, ny) = (p.n_sets(), p.ny());
    let block_sizes = vec![nj; ny];
    // Blocks are y-major; r is set-major.
    let search = GridSearch {
        grid: ProductGrid::new(&block_sizes, divisions),
        block_sizes,
        order: (0..ny).flat_map(|y| (0..nj).map(move |j| j * ny + y)).collect(),
        value: Box::new(|r: &[f64]| phi_r_direct(p, r)),
        gradient: Box::new(|r: &[f64]| phi_r_gradient_direct(p, r)),
    };
    Ok(search.run(resolution, (p.n_edges(), nj * ny), free))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Library gradient, set-major.
    pub analytic: Vec<f64>,
    /// Central differences of the direct `φ_r`.
    pub numeric: Vec<f64>,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub step: f64,
}

/// Compares the library gradient of `φ_r` at `r` with central differences
/// of [`phi_r_direct`]. Refuses points closer than `10·step` to the boundary.
pub fn gradient_check(p: &Problem, r: &RPoint, step: f64) -> Result<GradientCheck, OracleError> {
    let expected = p.n_sets() * p.ny();
    if r.values().len() != expected {
        return Err(OracleError::Shape {
            got: r.values().len(),
            expected,
        });
    }
    if let Some((index, &value)) = r.values().iter().enumerate().find(|(_, &v)| v < 10.0 * step) {
        return Err(OracleError::TooCloseToBoundary { index, value });
    }
    let analytic = phi_r_gradient(p, r);
    let base = r.values().to_vec();
    let numeric = par::map_range(base.len(), |i| {
        let mut up = base.clone();
        let mut down = base.clone();
        up[i] += step;
        down[i] -= step;
        (phi_r_direct(p, &up) - phi_r_direct(p, &down)) / (2.0 * step)
    });
    let mut max_abs_error: f64 = 0.0;
    let mut max_rel_error: f64 = 0.0;
    for (a, n) in analytic.iter().zip(&numeric) {
        let err = (a - n).abs();
        max_abs_error = max_abs_error.max(err);
        max_rel_error = max_rel_error.max(err / a.abs().max(n.abs()).max(1e-8));
    }
    Ok(GradientCheck {
        analytic,
        numeric,
        max_abs_error,
        max_rel_error,
        step,
    })
}

/// Hessian of `t ↦ Π_y t_y^{α_y}` at a positive `t`:
/// `H_{yz} = g (α_y α_z - δ_{yz} α_y) / (t_y t_z)`.
pub fn product_hessian(alpha: &[f64], t: &[f64]) -> Vec<Vec<f64>> {
    let g: f64 = alpha
        .iter()
        .zip(t)
        .map(|(&a, &v)| if a > 0.0 { v.powf(a) } else { 1.0 })
        .product();
    let n = alpha.len();
    let mut h = vec![vec![0.0; n]; n];
    for y in 0..n {
        for z in 0..n {
            let diag = if y == z { alpha[y] } else { 0.0 };
            h[y][z] = g * (alpha[y] * alpha[z] - diag) / (t[y] * t[z]);
        }
    }
    h
}
