//! Core of the maskboard pipeline: build labeled corpora from forum dumps,
//! train simple text classifiers, explain their predictions by occluding one
//! phrase at a time, retrieve similar phrases by embedding cosine, and compare
//! theme prevalence between corpora.
//!
//! Everything in this crate is a pure function over in-memory data, which keeps
//! it usable from the command line, the local service and the browser demo.

pub mod classify;
pub mod corpus;
pub mod error;
pub mod explain;
pub mod explore;
pub mod stats;

pub use error::{Error, Result};

/// Version string recorded in every manifest this crate produces.
pub const TOOL_VERSION: &str = concat!("maskboard ", env!("CARGO_PKG_VERSION"));

/// Hex-encoded SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
