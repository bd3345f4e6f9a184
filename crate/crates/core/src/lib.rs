//! Conditional graph entropy `H_G(X|Y)` by alternating minimization.
//!
//! The entropy is the common minimum of a weighted sum of KL divergences
//! `φ(q, r)` over two products of simplices. Fixing either argument, the
//! optimal other one has a closed form (`R(q)` and `Q(r)`), so alternating
//! the two maps descends monotonically to the minimum. The crate provides:
//!
//! - [`model`]: problem instances and maximal independent set enumeration,
//! - [`geometry`]: points of the two domains,
//! - [`maps`]: the maps `A`, `Q`, `R` and the objective functions,
//! - [`solver`]: the iteration with optional pruning of unused sets,
//! - [`optimality`]: the first-order certificate at fixed points,
//! - [`corner`]: entropy of the associated convex corner and its `τ`,
//! - [`oracle`]: brute-force grid minimizers and gradient checks.
//!
//! ```
//! use graph_entropy::model::{Graph, Problem, SetSystem};
//! use graph_entropy::solver::{solve, SolverConfig};
//!
//! // Uniform X on the path x1 - x2 - x3, no side information.
//! let p = Problem::new(vec![vec![1.0 / 3.0]; 3], SetSystem::Graph(Graph::path(3))).unwrap();
//! let report = solve(&p, &SolverConfig::default()).unwrap();
//! assert!((report.entropy_nats - 0.636514).abs() < 1e-6);
//! ```

pub mod corner;
pub mod geometry;
pub mod maps;
pub mod model;
pub mod optimality;
pub mod oracle;
pub mod par;
pub mod solver;

pub use geometry::{APoint, QPoint, RPoint};
pub use maps::ExtendedValue;
pub use model::{Graph, Problem, SetSystem};
pub use solver::{solve, SolveReport, SolverConfig};
