//! Theory-of-Mind task complexity and Discrete World Model prompting.
//!
//! The crate is organised by subsystem:
//!
//! - [`types`]: problems, tracked objects, state-event annotations.
//! - [`complexity`]: partitions, statefulness, statelessness, complexity.
//! - [`world`]: synthetic stories with an exact world/belief state machine.
//! - [`prompts`]: DWM, CoT, ToT and structured prompting strategies.
//! - [`gateway`]: chat backends (HTTP, mock) and the response cache.
//! - [`ingest`]: benchmark loaders producing normalized `problems.jsonl`.
//! - [`memorization`]: prefix-continuation memorization probe.
//! - [`harness`]: experiment runner, metrics and the annotation service.

pub mod complexity;
pub mod gateway;
pub mod harness;
pub mod ingest;
pub mod memorization;
pub mod prompts;
pub mod reference;
pub mod types;
pub mod world;

pub use complexity::{BenchmarkStats, ComplexityError};
pub use types::{
    AnnotationSet, Benchmark, ComplexityReport, ObjectKind, ProblemInstance, Sentence,
    StateDescription, StateEventMark, TrackedObject, Violation,
};
