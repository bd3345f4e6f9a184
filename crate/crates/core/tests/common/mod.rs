#![allow(dead_code)]

use graph_entropy::geometry::{QPoint, RPoint};
use graph_entropy::model::{Graph, Problem, SetSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shannon entropy of a distribution, nats.
pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}

/// `H(X|Y) = Σ_y p(y) H(X | Y = y)` straight from a joint table `joint[x][y]`.
pub fn shannon_conditional(joint: &[Vec<f64>]) -> f64 {
    let ny = joint[0].len();
    (0..ny)
        .map(|y| {
            let col: Vec<f64> = joint.iter().map(|row| row[y]).collect();
            let py: f64 = col.iter().sum();
            if py == 0.0 {
                0.0
            } else {
                py * shannon(&col.iter().map(|v| v / py).collect::<Vec<_>>())
            }
        })
        .sum()
}

/// Every subset of the vertices that is independent and cannot be extended.
pub fn brute_force_mis(g: &Graph) -> Vec<u64> {
    let n = g.vertex_count();
    let independent =
        |s: u64| (0..n).all(|u| s & (1 << u) == 0 || (0..n).all(|v| s & (1 << v) == 0 || !g.has_edge(u, v)));
    let mut out: Vec<u64> = (0..1u64 << n)
        .filter(|&s| independent(s))
        .filter(|&s| (0..n).all(|v| s & (1 << v) != 0 || !independent(s | (1 << v))))
        .collect();
    out.sort_unstable();
    out
}

/// `max c·y` subject to `A y ≤ b`, `y ≥ 0`, with `b ≥ 0`, by the tableau
/// simplex method with Bland's rule.
pub fn simplex_max(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let (m, n) = (a.len(), c.len());
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    for k in 0..n {
        t[m][k] = -c[k];
    }
    loop {
        let Some(col) = (0..width - 1).find(|&k| t[m][k] < -1e-12) else {
            return t[m][width - 1];
        };
        let row = (0..m)
            .filter(|&i| t[i][col] > 1e-12)
            .min_by(|&i, &j| {
                let (ri, rj) = (t[i][width - 1] / t[i][col], t[j][width - 1] / t[j][col]);
                ri.partial_cmp(&rj).unwrap().then(i.cmp(&j))
            })
            .expect("bounded LP");
        let pivot = t[row][col];
        t[row].iter_mut().for_each(|v| *v /= pivot);
        for i in 0..=m {
            if i != row && t[i][col] != 0.0 {
                let f = t[i][col];
                let pr = t[row].clone();
                t[i].iter_mut().zip(&pr).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
}

/// Fractional chromatic number as the fractional clique number: maximize
/// `Σ_v y_v` with `Σ_{v∈S} y_v ≤ 1` for every maximal independent set `S`.
pub fn fractional_chromatic(g: &Graph) -> f64 {
    let n = g.vertex_count();
    let sets = brute_force_mis(g);
    let a: Vec<Vec<f64>> = sets
        .iter()
        .map(|&s| (0..n).map(|v| if s & (1 << v) != 0 { 1.0 } else { 0.0 }).collect())
        .collect();
    simplex_max(&a, &vec![1.0; sets.len()], &vec![1.0; n])
}

pub fn uniform_unconditioned(g: Graph) -> Problem {
    let n = g.vertex_count();
    Problem::new(vec![vec![1.0 / n as f64]; n], SetSystem::Graph(g)).unwrap()
}

/// A joint table with entries in `(0, 1]` before normalization; each entry is
/// zeroed with probability `zero_prob`, keeping every row non-empty.
pub fn random_joint(rng: &mut impl Rng, nx: usize, ny: usize, zero_prob: f64) -> Vec<Vec<f64>> {
    let mut joint: Vec<Vec<f64>> = (0..nx)
        .map(|_| {
            let mut row: Vec<f64> = (0..ny)
                .map(|_| {
                    if rng.random_bool(zero_prob) {
                        0.0
                    } else {
                        rng.random_range(0.05..1.0)
                    }
                })
                .collect();
            if row.iter().all(|&v| v == 0.0) {
                row[rng.random_range(0..ny)] = rng.random_range(0.05..1.0);
            }
            row
        })
        .collect();
    let total: f64 = joint.iter().flatten().sum();
    joint.iter_mut().flatten().for_each(|v| *v /= total);
    joint
}

pub fn random_graph(rng: &mut impl Rng, n: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(density) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges).unwrap()
}

pub fn random_problem(rng: &mut impl Rng, max_x: usize, max_y: usize) -> Problem {
    let nx = rng.random_range(2..=max_x);
    let ny = rng.random_range(1..=max_y);
    let g = random_graph(rng, nx, 0.5);
    Problem::new(random_joint(rng, nx, ny, 0.2), SetSystem::Graph(g)).unwrap()
}

/// Strictly interior `q` drawn at random.
pub fn random_q(rng: &mut impl Rng, p: &Problem) -> QPoint {
    let mut values = vec![0.0; p.n_edges()];
    for x in 0..p.nx() {
        let range = p.edges_of(x);
        for e in range.clone() {
            values[e] = rng.random_range(0.05..1.0);
        }
        let s: f64 = values[range.clone()].iter().sum();
        for e in range {
            values[e] /= s;
        }
    }
    QPoint::from_edges(values)
}

/// Strictly positive `r` drawn at random.
pub fn random_r(rng: &mut impl Rng, p: &Problem) -> RPoint {
    let (nj, ny) = (p.n_sets(), p.ny());
    let mut values: Vec<f64> = (0..nj * ny).map(|_| rng.random_range(0.05..1.0)).collect();
    for y in 0..ny {
        let s: f64 = (0..nj).map(|j| values[j * ny + y]).sum();
        for j in 0..nj {
            values[j * ny + y] /= s;
        }
    }
    RPoint::new(ny, values)
}

pub fn cond2() -> Problem {
    Problem::new(
        vec![vec![0.4, 0.1], vec![0.2, 0.3]],
        SetSystem::Graph(Graph::complete(2)),
    )
    .unwrap()
}

/// Edgeless pair with the dominated singletons kept.
pub fn planted() -> (Problem, RPoint) {
    let p = Problem::new(
        vec![vec![0.5], vec![0.5]],
        SetSystem::Sets {
            sets: vec![0b01, 0b10, 0b11],
            keep_dominated: true,
        },
    )
    .unwrap();
    let r = RPoint::from_rows(&[vec![0.5], vec![0.5], vec![0.0]]).with_active(vec![true, true, false]);
    (p, r)
}

/// Small named instances used across the suites.
pub fn desk_instances() -> Vec<(String, Problem)> {
    let mut out = vec![
        ("p3".to_string(), uniform_unconditioned(Graph::path(3))),
        ("p4".to_string(), uniform_unconditioned(Graph::path(4))),
        ("c5".to_string(), uniform_unconditioned(Graph::cycle(5))),
        ("k3".to_string(), uniform_unconditioned(Graph::complete(3))),
        ("edgeless3".to_string(), uniform_unconditioned(Graph::edgeless(3))),
        ("cond2".to_string(), cond2()),
        (
            "c4-cond".to_string(),
            Problem::new(
                vec![
                    vec![0.1, 0.2, 0.05],
                    vec![0.05, 0.1, 0.1],
                    vec![0.1, 0.05, 0.05],
                    vec![0.05, 0.05, 0.1],
                ],
                SetSystem::Graph(Graph::cycle(4)),
            )
            .unwrap(),
        ),
        (
            "p3-cond".to_string(),
            Problem::new(
                vec![vec![0.2, 0.05], vec![0.1, 0.25], vec![0.15, 0.25]],
                SetSystem::Graph(Graph::path(3)),
            )
            .unwrap(),
        ),
    ];
    let mut r = rng(7);
    for i in 0..6 {
        out.push((format!("random{i}"), random_problem(&mut r, 5, 3)));
    }
    out
}
