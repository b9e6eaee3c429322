//! Persistence and network plumbing: JSONL case files, the entailment
//! matrix cache, and clients for answer sampling and entailment scoring.

pub mod cache;
pub mod client;
pub mod config;
pub mod endpoint;
pub mod error;
pub mod jsonl;
pub mod pipeline;

pub use cache::{CacheKey, MatrixCache};
pub use client::{EntailClient, GenerationClient, HttpEndpoint, MAX_ENTAIL_BATCH};
pub use config::{load_profiles, load_structured};
pub use endpoint::{Backoff, EndpointConfig};
pub use error::{IoError, Result};
pub use jsonl::{load_cases, read_cases, store_cases, store_jsonl, write_atomic, write_cases};
pub use pipeline::Pipeline;
