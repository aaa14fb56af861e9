//! Camera-trap analysis pipeline: asset ingestion, detector and
//! vision-language endpoint clients, retrieval-backed question answering,
//! evaluation, reporting, a CLI, and an HTTP query service.
//!
//! All pure computation lives in [`trapline_core`]; this crate owns IO,
//! endpoints, orchestration, and persistence.

pub mod cli;
pub mod config;
pub mod endpoints;
pub mod evalio;
pub mod fixtures;
pub mod imaging;
pub mod ingest;
pub mod knowledge;
pub mod mocks;
pub mod pipeline;
pub mod serve;
pub mod store;

pub use config::PipelineConfig;
pub use pipeline::run_pipeline;
