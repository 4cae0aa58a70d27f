//! Simulator for micro-partitioned tables with incremental, workload-aware
//! reclustering.
//!
//! The crate models a copy-on-write table made of fixed-capacity,
//! min/max-indexed micro-partitions, executes range queries against it with
//! zonemap pruning, and implements several reclustering strategies on top:
//!
//! * a boundary-partition greedy algorithm with an amortized-cost auditor,
//! * a cost-based policy that plans reclusterings from a sliding window of
//!   observed queries,
//! * hybrid layout selection (single-column sort, multi-column space-filling
//!   curve, or query-driven tree partitioning) driven by per-partition
//!   savings signatures,
//! * reference baselines (never recluster, periodic tree rebuild, sort new
//!   data only, overlap-depth driven),
//! * a deterministic workload generator and an experiment harness gluing it
//!   all together.

pub mod baselines;
pub mod config;
pub mod greedy;
pub mod harness;
pub mod hilbert;
pub mod hybrid;
pub mod policy;
pub mod potential;
pub mod qdtree;
pub mod query;
pub mod table;
pub mod workload;

use thiserror::Error;

/// Unified error type for the simulator.
#[derive(Debug, Error)]
pub enum SimError {
    /// Row shape or column reference does not match the table schema.
    #[error("schema error: {0}")]
    Schema(String),
    /// A snapshot publication would lose or invent rows.
    #[error("recluster integrity error: {0}")]
    Integrity(String),
    /// An operation was invoked outside its defined domain.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("unknown snapshot {0}")]
    UnknownSnapshot(u64),
    #[error("unknown partition {0}")]
    UnknownPartition(u64),
    /// Invalid configuration or sweep parameter.
    #[error("config error: {0}")]
    Config(String),
    /// An amortized-cost bound was violated during an audit.
    #[error("audit violation: {0}")]
    Audit(String),
    /// Coordinates do not fit the requested curve precision.
    #[error("quantization error: {0}")]
    Quantization(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;
