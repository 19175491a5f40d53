//! Evaluation harness for code-generation systems on unit-tested benchmarks.
//!
//! Tasks run through a subprocess sandbox, optionally with retrieved context
//! and a bounded execute-and-repair loop, and results are aggregated into
//! pass@k tables and charts.

pub mod config;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod record;
pub mod report;
pub mod results;
pub mod retrieval;
pub mod sandbox;
pub mod scalar;
pub mod strategy;
pub mod task;

pub use metrics::{pass_at_k, pass_at_k_in, summarize, summarize_records, EvalSummary};
pub use record::{Attempt, RunRecord};
pub use sandbox::{ExecStatus, ExecutionResult, SandboxConfig};
pub use scalar::Scalar;
pub use task::{BenchmarkTask, Difficulty, TaskSuite};

pub type DenseIndex = retrieval::DenseIndex<f32>;
pub type Bm25Index = retrieval::Bm25Index<f64>;
pub type ScoredChunk = retrieval::ScoredChunk<f64>;

pub const HARNESS_VERSION: &str = env!("CARGO_PKG_VERSION");
