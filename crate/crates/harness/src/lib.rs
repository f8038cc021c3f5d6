//! Benchmark harness: replay JSONL transcripts into a memory engine, run
//! query sets, and report retrieval recall and token cost.

pub mod answer;
pub mod diff;
mod error;
pub mod evaluate;
pub mod ingest;
pub mod queries;
pub mod report;
pub mod suites;
pub mod transcript;

pub use error::{read_file, HarnessError};
pub use evaluate::{evaluate, EvalOptions, EvalReport, Mode};
pub use ingest::{ingest, IngestReport};
pub use queries::{parse_queries, QuerySpec};
pub use transcript::{parse_transcript, ScopeTemplate, TranscriptLine};
