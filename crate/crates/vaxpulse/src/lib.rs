//! Vaccine-surveillance pipeline over social-media text.
//!
//! The crate is organised around an append-only post store ([`corpus`]) that
//! every stage reads from and writes back to:
//!
//! 1. [`ingest`] pulls posts from source adapters (fixture files, recorded
//!    responses, CSV trend series) into the store.
//! 2. [`normalize`] strips links, mentions and special characters and drops
//!    short posts.
//! 3. [`relevance`] and [`sentiment`] classify posts with a trainable
//!    baseline model plus a confidence-gated external-provider fallback
//!    ([`providers`]).
//! 4. [`topics`] groups comments by concern and extracts per-group topics
//!    with class-based TF-IDF.
//! 5. [`trends`] aggregates sentiment distributions, topic tables and
//!    time-bucketed series into Markdown/CSV/SVG reports.
//!
//! [`pipeline`] orchestrates the stages from a single [`config::PipelineConfig`].

pub mod clock;
pub mod config;
pub mod corpus;
pub mod error;
pub mod fixtures;
pub mod ingest;
pub mod normalize;
pub mod pipeline;
pub mod providers;
pub mod relevance;
pub mod sentiment;
pub mod topics;
pub mod trends;

pub use error::Error;
