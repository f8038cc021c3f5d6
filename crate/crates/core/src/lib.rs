//! Conversational memory engine: episodic storage, short-term window,
//! sentence-level long-term index, staged recall, user profiles and an
//! optional retrieval agent.

pub mod agent;
pub mod config;
pub mod engine;
pub mod ledger;
pub mod ltm;
pub mod profile;
pub mod prompts;
pub mod providers;
pub mod recall;
pub mod stm;
pub mod store;
pub mod types;

pub use config::EngineConfig;
pub use engine::{EngineError, Ingested, MemoryEngine, SearchOptions, SearchResult};
pub use types::{Episode, EpisodeId, MemoryScope, Metadata, Producer, Timestamp, UserScope};
