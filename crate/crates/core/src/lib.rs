//! Sorted k-mer streaming for metagenomic analysis.
//!
//! Query k-mers are extracted from reads and sorted into lexicographic
//! buckets on the host, then streamed against a sorted reference k-mer table
//! with a two-pointer intersection. Intersecting k-mers are resolved to taxa
//! through per-level sketch tables, and a presence threshold selects the
//! candidate species used for read-level abundance estimation.

pub mod abundance;
mod binio;
pub mod encoding;
pub mod error;
pub mod fastx;
pub mod isp;
pub mod query_prep;
pub mod refdb;

pub use encoding::{PackedKmer, TaxId, MAX_K};
pub use error::{Error, Result};
