//! Baseline router, exhaustive oracle, benchmarks and the command-line
//! entry points.

use thiserror::Error;

use crate::circuit::CircuitError;
use crate::evaluator::TrainError;
use crate::routing::RoutingError;
use crate::search::SearchError;
use crate::topology::TopologyError;

mod baseline;
mod bench;
mod commands;
mod oracle;

pub use baseline::greedy_baseline;
pub use bench::{benchmark, thread_limit, BenchmarkConfig, BenchmarkRecord, BenchmarkReport, BucketMean, RouterCdr, Router};
pub use commands::{
    load_circuit, prepare_circuit, route_trials, train_loop, verify_file, Allocation, EvaluatorSpec, RouteRun,
    TrainLoopConfig, TrainSummary,
};
pub use oracle::{oracle_min_depth, OracleResult, MAX_ORACLE_DEPTH, MAX_ORACLE_GATES, MAX_ORACLE_NODES};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("layer cap of {cap} exceeded")]
    LayerCap { cap: usize },
    #[error("routed output failed verification: {0}")]
    Verification(String),
    #[error(
        "oracle limited to {MAX_ORACLE_NODES} nodes, {MAX_ORACLE_GATES} gates and depth bound {MAX_ORACLE_DEPTH}; got {nodes}, {gates}, {depth_bound}"
    )]
    OracleTooLarge { nodes: usize, gates: usize, depth_bound: usize },
    #[error("no schedule within depth bound {depth_bound}")]
    OracleBound { depth_bound: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit code: 2 for unreadable or malformed input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Usage(_) | Self::Topology(_) => 2,
            Self::Train(TrainError::Format(_)) => 2,
            _ => 1,
        }
    }
}
