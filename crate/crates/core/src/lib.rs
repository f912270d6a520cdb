//! Cost-based blueprint planning for a three-engine data infrastructure,
//! with a deterministic simulator of the engines it plans for.

pub mod blueprint;
pub mod comparator;
pub mod fingerprint;
pub mod predictor;
pub mod query;
pub mod router;
pub mod scoring;
pub mod search;
pub mod simulator;
pub mod stats;
pub mod workload;
