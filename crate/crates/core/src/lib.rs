//! Topic landscapes and speaker-topic networks from meeting transcripts.
//!
//! The pipeline runs ingest, preprocessing, model selection, LDA, landscape
//! aggregation and network construction. Every stage is deterministic for a
//! fixed seed.

pub mod api;
pub mod bundle;
pub mod corpus;
pub mod landscape;
pub mod modelselect;
pub mod netgraph;
pub mod par;
pub mod pipeline;
pub mod textprep;
pub mod topicmodel;

/// Version stamped on every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;
