//! Finite-dimensional combinatorics of subfactor inclusions.
//!
//! The crate works with bipartite inclusion graphs and their Markov weight
//! vectors, builds graph-level Jones towers, evaluates Temperley-Lieb-Jones
//! polynomials, checks commuting squares of concrete multimatrix algebras,
//! searches for Folner certificates on weighted graphs and enumerates small
//! bipartite graphs to tabulate their square norms.

pub mod algebra;
pub mod cells;
pub mod error;
pub mod espec;
pub mod exact;
pub mod folner;
pub mod graph;
pub mod io;
pub mod scalar;
pub mod spectral;
pub mod tlj;
pub mod tower;

pub use error::{Error, Result};
pub use graph::{BipartiteGraph, Builtin, LazyWeightedGraph, VertexSet, WeightedEvenGraph};
pub use scalar::Scalar;

/// Version string embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
