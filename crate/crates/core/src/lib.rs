//! Stochastic matching sparsification with a local-computation analysis
//! toolkit.
//!
//! The crate builds the sparse subgraph `H` (the union of maximum matchings
//! over independent realizations), measures how much of the expected maximum
//! matching it preserves, and provides instrumented local computation
//! algorithms (greedy MIS, truncated MIS and the recursive hyperwalk matcher)
//! whose out-queries, in-queries and correlated sets are recorded.

pub mod analysis;
pub mod bmatching;
pub mod graph;
pub mod hyperwalk;
pub mod lca;
pub mod matching;
pub mod mis;
pub mod seed;
pub mod sparsifier;

pub use graph::{Edge, Graph, GraphError, Realization};
pub use matching::{FractionalMatching, Matching};
pub use seed::SeedContext;
