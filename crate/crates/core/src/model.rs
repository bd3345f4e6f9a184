//! Problem instances: the joint law of `(X, Y)`, the set system over `X`,
//! and everything derived from the two (marginals, conditionals and the
//! sparse incidence layout used to store `q`).

use std::collections::HashSet;
use std::fmt;

use log::info;
use thiserror::Error;

/// Bitmask over the `X` alphabet; bit `i` is the letter with index `i`.
pub type SetMask = u64;

/// Largest alphabet a [`SetMask`] can address.
pub const MAX_LETTERS: usize = 64;

/// Total-mass deviation accepted before renormalization.
pub const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) references a vertex outside 0..{2}")]
    VertexOutOfRange(usize, usize, usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph has {0} vertices, at most {MAX_LETTERS} are supported")]
    TooManyVertices(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{0} alphabet is empty")]
    EmptyAlphabet(&'static str),
    #[error("joint matrix has {rows}x{cols} entries, expected {nx}x{ny}")]
    DimensionMismatch {
        rows: usize,
        cols: usize,
        nx: usize,
        ny: usize,
    },
    #[error("negative probability {value} at ({x}, {y})")]
    NegativeProbability { x: String, y: String, value: f64 },
    #[error("non-finite probability at ({x}, {y})")]
    NonFinite { x: String, y: String },
    #[error("total probability mass is {total}, deviating from 1 by {deficit:.3e}")]
    MassDeviation { total: f64, deficit: f64 },
    #[error("letter {0} is not covered by any set")]
    Uncovered(String),
    #[error("alphabet has {0} letters, at most {MAX_LETTERS} are supported")]
    TooManyLetters(usize),
    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),
    #[error("set mask {0:#x} references letters outside the alphabet")]
    SetOutOfRange(SetMask),
    #[error("graph has {vertices} vertices but X has {letters} letters")]
    GraphSize { vertices: usize, letters: usize },
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
}

/// A finite simple graph on vertices `0..n`, stored as adjacency bitmasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adj: Vec<SetMask>,
}

impl Graph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n > MAX_LETTERS {
            return Err(GraphError::TooManyVertices(n));
        }
        let mut adj = vec![0; n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::VertexOutOfRange(u, v, n));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if adj[u] & (1 << v) != 0 {
                return Err(GraphError::DuplicateEdge(u, v));
            }
            adj[u] |= 1 << v;
            adj[v] |= 1 << u;
        }
        Ok(Self { n, adj })
    }

    pub fn edgeless(n: usize) -> Self {
        Self::new(n, &[]).expect("edgeless graph is valid")
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::new(n, &edges).expect("complete graph is valid")
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Self::new(n, &edges).expect("path graph is valid")
    }

    /// Cycle `0 - 1 - ... - (n-1) - 0`, `n >= 3`.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a cycle needs at least three vertices");
        let edges: Vec<_> = (0..n).map(|v| (v, (v + 1) % n)).collect();
        Self::new(n, &edges).expect("cycle graph is valid")
    }

    /// The Petersen graph: outer 5-cycle, inner pentagram, spokes.
    pub fn petersen() -> Self {
        let mut edges = Vec::with_capacity(15);
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
            edges.push((i, 5 + i));
        }
        Self::new(10, &edges).expect("Petersen graph is valid")
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn neighbors(&self, v: usize) -> SetMask {
        self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u] & (1 << v) != 0
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|u| {
                ((u + 1)..self.n)
                    .filter(move |&v| self.has_edge(u, v))
                    .map(move |v| (u, v))
            })
            .collect()
    }

    /// Subgraph induced on `keep` (given in increasing order), relabelled to `0..keep.len()`.
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut adj = vec![0; keep.len()];
        for (a, &u) in keep.iter().enumerate() {
            for (b, &v) in keep.iter().enumerate() {
                if self.has_edge(u, v) {
                    adj[a] |= 1 << b;
                }
            }
        }
        Self { n: keep.len(), adj }
    }

    pub fn is_independent(&self, set: SetMask) -> bool {
        iter_bits(set).all(|v| self.adj[v] & set == 0)
    }
}

fn full_mask(n: usize) -> SetMask {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Indices of the set bits of `mask`, ascending.
pub fn iter_bits(mut mask: SetMask) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let v = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(v)
        }
    })
}

/// All inclusion-maximal independent sets of `g`, ascending by bitmask value.
///
/// Independent sets of `g` are the cliques of its complement, so this is
/// Bron–Kerbosch with Tomita pivoting run on the complement adjacency.
pub fn enumerate_maximal_independent_sets(g: &Graph) -> Vec<SetMask> {
    let all = full_mask(g.n);
    let comp: Vec<SetMask> = (0..g.n).map(|v| !g.adj[v] & all & !(1u64 << v)).collect();
    let mut out = Vec::new();
    bron_kerbosch(&comp, 0, all, 0, &mut out);
    out.sort_unstable();
    out
}

fn bron_kerbosch(comp: &[SetMask], r: SetMask, mut p: SetMask, mut x: SetMask, out: &mut Vec<SetMask>) {
    if p == 0 {
        if x == 0 {
            out.push(r);
        }
        return;
    }
    let pivot = iter_bits(p | x)
        .max_by_key(|&u| (p & comp[u]).count_ones())
        .expect("p is non-empty");
    for v in iter_bits(p & !comp[pivot]) {
        let bit = 1u64 << v;
        bron_kerbosch(comp, r | bit, p & comp[v], x & comp[v], out);
        p &= !bit;
        x |= bit;
    }
}

/// Drops every set that is a proper subset of another, and duplicates.
/// The result is sorted ascending.
pub fn remove_dominated(sets: &[SetMask]) -> Vec<SetMask> {
    let mut uniq: Vec<SetMask> = sets.to_vec();
    uniq.sort_unstable();
    uniq.dedup();
    uniq.iter()
        .copied()
        .filter(|&s| !uniq.iter().any(|&t| t != s && s & t == s))
        .collect()
}

/// Where the set system comes from.
#[derive(Debug, Clone)]
pub enum SetSystem {
    /// Maximal independent sets of the graph on the `X` alphabet.
    Graph(Graph),
    /// An explicit covering family. Dominated sets are removed unless
    /// `keep_dominated` is set.
    Sets { sets: Vec<SetMask>, keep_dominated: bool },
}

/// An immutable problem instance.
///
/// All index-based accessors use the internal canonical order: letters in
/// alphabet order (after zero-mass letters were dropped), sets ascending by
/// bitmask.
#[derive(Debug, Clone)]
pub struct Problem {
    x_labels: Vec<String>,
    y_labels: Vec<String>,
    nx: usize,
    ny: usize,
    joint: Vec<f64>,
    p_x: Vec<f64>,
    p_y: Vec<f64>,
    x_given_y: Vec<f64>,
    y_given_x: Vec<f64>,
    sets: Vec<SetMask>,
    members: Vec<Vec<usize>>,
    edge_offsets: Vec<usize>,
    edge_set: Vec<usize>,
    edge_x: Vec<usize>,
    set_edges: Vec<Vec<(usize, usize)>>,
    exponents: Vec<Vec<(usize, f64)>>,
}

impl Problem {
    /// Builds a problem with generated labels `x1, x2, ...` and `y1, y2, ...`.
    pub fn new(joint: Vec<Vec<f64>>, system: SetSystem) -> Result<Self, ModelError> {
        let nx = joint.len();
        let ny = joint.first().map_or(0, Vec::len);
        let xs = (1..=nx).map(|i| format!("x{i}")).collect();
        let ys = (1..=ny).map(|i| format!("y{i}")).collect();
        Self::labeled(xs, ys, joint, system)
    }

    /// Builds a problem from labelled alphabets and a row-major joint matrix
    /// (rows are `x`, columns are `y`).
    pub fn labeled(
        x_labels: Vec<String>,
        y_labels: Vec<String>,
        joint: Vec<Vec<f64>>,
        system: SetSystem,
    ) -> Result<Self, ModelError> {
        let nx = x_labels.len();
        let ny = y_labels.len();
        if nx == 0 {
            return Err(ModelError::EmptyAlphabet("X"));
        }
        if ny == 0 {
            return Err(ModelError::EmptyAlphabet("Y"));
        }
        if nx > MAX_LETTERS {
            return Err(ModelError::TooManyLetters(nx));
        }
        check_unique(&x_labels)?;
        check_unique(&y_labels)?;
        if joint.len() != nx || joint.iter().any(|row| row.len() != ny) {
            return Err(ModelError::DimensionMismatch {
                rows: joint.len(),
                cols: joint.iter().map(Vec::len).max().unwrap_or(0),
                nx,
                ny,
            });
        }
        let mut total = 0.0;
        for (x, row) in joint.iter().enumerate() {
            for (y, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ModelError::NonFinite {
                        x: x_labels[x].clone(),
                        y: y_labels[y].clone(),
                    });
                }
                if v < 0.0 {
                    return Err(ModelError::NegativeProbability {
                        x: x_labels[x].clone(),
                        y: y_labels[y].clone(),
                        value: v,
                    });
                }
                total += v;
            }
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::MassDeviation {
                total,
                deficit: 1.0 - total,
            });
        }
        match &system {
            SetSystem::Graph(g) if g.vertex_count() != nx => {
                return Err(ModelError::GraphSize {
                    vertices: g.vertex_count(),
                    letters: nx,
                });
            }
            SetSystem::Sets { sets, .. } => {
                let all = full_mask(nx);
                if let Some(&bad) = sets.iter().find(|&&s| s & !all != 0) {
                    return Err(ModelError::SetOutOfRange(bad));
                }
            }
            _ => {}
        }

        // Zero-mass letters are deleted.
        let keep_x: Vec<usize> = (0..nx).filter(|&x| joint[x].iter().any(|&v| v > 0.0)).collect();
        let keep_y: Vec<usize> = (0..ny).filter(|&y| joint.iter().any(|row| row[y] > 0.0)).collect();
        for x in (0..nx).filter(|x| !keep_x.contains(x)) {
            info!("dropping zero-mass letter {} from X", x_labels[x]);
        }
        for y in (0..ny).filter(|y| !keep_y.contains(y)) {
            info!("dropping zero-mass letter {} from Y", y_labels[y]);
        }

        let (sets, keep_dominated) = match system {
            SetSystem::Graph(g) => (enumerate_maximal_independent_sets(&g.induced(&keep_x)), false),
            SetSystem::Sets { sets, keep_dominated } => {
                let remapped: Vec<SetMask> = sets
                    .iter()
                    .map(|&s| {
                        keep_x
                            .iter()
                            .enumerate()
                            .filter(|&(_, &x)| s & (1 << x) != 0)
                            .fold(0, |m, (i, _)| m | (1 << i))
                    })
                    .filter(|&m| m != 0)
                    .collect();
                (remapped, keep_dominated)
            }
        };

        let joint: Vec<Vec<f64>> = keep_x
            .iter()
            .map(|&x| keep_y.iter().map(|&y| joint[x][y]).collect())
            .collect();
        let x_labels = keep_x.iter().map(|&x| x_labels[x].clone()).collect();
        let y_labels = keep_y.iter().map(|&y| y_labels[y].clone()).collect();
        Self::from_parts(x_labels, y_labels, joint, sets, keep_dominated)
    }

    /// Assembles a problem whose letters all carry positive mass.
    fn from_parts(
        x_labels: Vec<String>,
        y_labels: Vec<String>,
        joint: Vec<Vec<f64>>,
        sets: Vec<SetMask>,
        keep_dominated: bool,
    ) -> Result<Self, ModelError> {
        let nx = x_labels.len();
        let ny = y_labels.len();
        let mut sets = if keep_dominated {
            let mut s = sets;
            s.sort_unstable();
            s.dedup();
            s
        } else {
            remove_dominated(&sets)
        };
        sets.retain(|&s| s != 0);

        let covered = sets.iter().fold(0, |m, &s| m | s);
        if let Some(x) = (0..nx).find(|&x| covered & (1 << x) == 0) {
            return Err(ModelError::Uncovered(x_labels[x].clone()));
        }

        // Renormalization is the last step touching the probabilities.
        let total: f64 = joint.iter().flatten().sum();
        let flat: Vec<f64> = joint.iter().flatten().map(|&v| v / total).collect();
        let p_x: Vec<f64> = (0..nx).map(|x| flat[x * ny..(x + 1) * ny].iter().sum()).collect();
        let p_y: Vec<f64> = (0..ny).map(|y| (0..nx).map(|x| flat[x * ny + y]).sum()).collect();
        let mut x_given_y = vec![0.0; nx * ny];
        let mut y_given_x = vec![0.0; nx * ny];
        for x in 0..nx {
            for y in 0..ny {
                x_given_y[x * ny + y] = flat[x * ny + y] / p_y[y];
                y_given_x[x * ny + y] = flat[x * ny + y] / p_x[x];
            }
        }

        let members: Vec<Vec<usize>> = sets.iter().map(|&s| iter_bits(s).collect()).collect();
        let mut edge_offsets = Vec::with_capacity(nx + 1);
        let mut edge_set = Vec::new();
        let mut edge_x = Vec::new();
        let mut set_edges = vec![Vec::new(); sets.len()];
        edge_offsets.push(0);
        for x in 0..nx {
            for (j, &s) in sets.iter().enumerate() {
                if s & (1 << x) != 0 {
                    set_edges[j].push((x, edge_set.len()));
                    edge_set.push(j);
                    edge_x.push(x);
                }
            }
            edge_offsets.push(edge_set.len());
        }
        let exponents = (0..nx)
            .map(|x| {
                (0..ny)
                    .map(|y| (y, y_given_x[x * ny + y]))
                    .filter(|&(_, a)| a > 0.0)
                    .collect()
            })
            .collect();

        Ok(Self {
            x_labels,
            y_labels,
            nx,
            ny,
            joint: flat,
            p_x,
            p_y,
            x_given_y,
            y_given_x,
            sets,
            members,
            edge_offsets,
            edge_set,
            edge_x,
            set_edges,
            exponents,
        })
    }

    /// Same set system and `X` marginal, with `Y` collapsed to one letter.
    pub fn marginalize_y(&self) -> Self {
        let joint = self.p_x.iter().map(|&p| vec![p]).collect();
        Self::from_parts(
            self.x_labels.clone(),
            vec!["y".to_string()],
            joint,
            self.sets.clone(),
            true,
        )
        .expect("marginalizing preserves validity")
    }

    /// Same set system and conditionals `Y | X = x`, with the `X` marginal
    /// replaced by `pi` (entries must be positive and sum to one).
    pub fn with_x_distribution(&self, pi: &[f64]) -> Result<Self, ModelError> {
        assert_eq!(pi.len(), self.nx, "distribution length must match |X|");
        if let Some(x) = pi.iter().position(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(ModelError::NegativeProbability {
                x: self.x_labels[x].clone(),
                y: "*".to_string(),
                value: pi[x],
            });
        }
        let total: f64 = pi.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(ModelError::MassDeviation {
                total,
                deficit: 1.0 - total,
            });
        }
        let joint: Vec<Vec<f64>> = (0..self.nx)
            .map(|x| (0..self.ny).map(|y| pi[x] * self.y_given_x[x * self.ny + y]).collect())
            .collect();
        // Columns may lose all their mass if pi vanishes numerically; keep the
        // y alphabet only where it still carries weight.
        let keep_y: Vec<usize> = (0..self.ny).filter(|&y| joint.iter().any(|r| r[y] > 0.0)).collect();
        let joint = joint
            .into_iter()
            .map(|r| keep_y.iter().map(|&y| r[y]).collect())
            .collect();
        let y_labels = keep_y.iter().map(|&y| self.y_labels[y].clone()).collect();
        Self::from_parts(self.x_labels.clone(), y_labels, joint, self.sets.clone(), true)
    }

    /// The same instance with `X` letters listed in the order `perm`
    /// (`perm[i]` is the old index of the new letter `i`).
    pub fn permute_x(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.nx);
        let joint = perm.iter().map(|&old| self.joint_row(old).to_vec()).collect();
        let x_labels = perm.iter().map(|&old| self.x_labels[old].clone()).collect();
        let sets = self
            .sets
            .iter()
            .map(|&s| {
                perm.iter()
                    .enumerate()
                    .filter(|&(_, &old)| s & (1 << old) != 0)
                    .fold(0, |m, (new, _)| m | (1 << new))
            })
            .collect();
        Self::from_parts(x_labels, self.y_labels.clone(), joint, sets, true).expect("permutation preserves validity")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn n_sets(&self) -> usize {
        self.sets.len()
    }

    /// `|E|`, the number of pairs `(j, x)` with `x ∈ j`.
    pub fn n_edges(&self) -> usize {
        self.edge_set.len()
    }

    pub fn x_labels(&self) -> &[String] {
        &self.x_labels
    }

    pub fn y_labels(&self) -> &[String] {
        &self.y_labels
    }

    pub fn sets(&self) -> &[SetMask] {
        &self.sets
    }

    pub fn set_labels(&self, j: usize) -> Vec<&str> {
        self.members[j].iter().map(|&x| self.x_labels[x].as_str()).collect()
    }

    /// Letters of set `j`, ascending.
    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }

    /// `(x, edge index)` for every `x ∈ j`.
    pub fn set_edges(&self, j: usize) -> &[(usize, usize)] {
        &self.set_edges[j]
    }

    /// Edge indices `e` with `edge_set(e) ∋ x`, contiguous per `x`.
    pub fn edges_of(&self, x: usize) -> std::ops::Range<usize> {
        self.edge_offsets[x]..self.edge_offsets[x + 1]
    }

    pub fn edge_set(&self, e: usize) -> usize {
        self.edge_set[e]
    }

    pub fn edge_letter(&self, e: usize) -> usize {
        self.edge_x[e]
    }

    /// Number of sets containing `x`.
    pub fn degree(&self, x: usize) -> usize {
        self.edge_offsets[x + 1] - self.edge_offsets[x]
    }

    pub fn contains(&self, j: usize, x: usize) -> bool {
        self.sets[j] & (1 << x) != 0
    }

    pub fn joint(&self, x: usize, y: usize) -> f64 {
        self.joint[x * self.ny + y]
    }

    pub fn joint_row(&self, x: usize) -> &[f64] {
        &self.joint[x * self.ny..(x + 1) * self.ny]
    }

    pub fn p_x(&self) -> &[f64] {
        &self.p_x
    }

    pub fn p_y(&self) -> &[f64] {
        &self.p_y
    }

    /// `P(X = x | Y = y)`.
    pub fn x_given_y(&self, x: usize, y: usize) -> f64 {
        self.x_given_y[x * self.ny + y]
    }

    /// `P(Y = y | X = x)`.
    pub fn y_given_x(&self, x: usize, y: usize) -> f64 {
        self.y_given_x[x * self.ny + y]
    }

    /// Pairs `(y, P(Y = y | X = x))` with positive probability, ascending in `y`.
    pub fn exponents(&self, x: usize) -> &[(usize, f64)] {
        &self.exponents[x]
    }

    pub fn is_unconditioned(&self) -> bool {
        self.ny == 1
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|X|={} |Y|={} |J|={} |E|={}",
            self.nx,
            self.ny,
            self.sets.len(),
            self.edge_set.len()
        )
    }
}

fn check_unique(labels: &[String]) -> Result<(), ModelError> {
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(ModelError::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}
