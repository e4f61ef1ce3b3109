//! Batch auditing of image-caption datasets.
//!
//! The pipeline joins COCO-style caption and instance annotations into a
//! [`corpus::Corpus`], scores every caption for sentiment, measures how
//! semantically varied the captions of one image are, and regresses caption
//! sentiment on one-hot object-category presence. Results are aggregated into
//! a reproducible [`report::AuditReport`].
//!
//! Scoring and embedding are pluggable: deterministic built-in providers
//! (a word lexicon and a feature-hashing embedder) let the whole pipeline run
//! without any model, while file and sidecar providers ingest the output of an
//! external inference process.

pub mod cache;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod ndjson;
pub mod parallel;
pub mod pipeline;
pub mod regression;
pub mod report;
pub mod semantics;
pub mod sentiment;
pub mod sidecar;
pub mod synth;
pub mod text;

pub use error::{Error, Result};
