//! Depth-minimizing qubit routing by Monte Carlo tree search.

pub mod circuit;
pub mod evaluator;
pub mod format;
pub mod harness;
pub mod routing;
pub mod search;
pub mod topology;
