//! Streaming kernels run next to the database: sorted merge-join
//! intersection, single-pass taxid retrieval over KSS tables, and the
//! presence call.

mod intersect;
mod presence;
mod retrieve;

pub use intersect::{
    batches, intersect_query_set, intersect_striped, stream_intersect, Batch, IntersectionSet, MergeJoin,
    BATCH_BYTES, BATCH_RECORDS,
};
pub use presence::{call_presence, check_tau, containment, DEFAULT_TAU};
pub use retrieve::{retrieve_taxids, retrieve_with_flat, retrieve_with_tree, Retriever, TaxHitTable};

use crate::encoding::RECORD_BYTES;
use crate::error::Result;
use crate::query_prep::QueryKmerSet;
use crate::refdb::{KssTables, SortedKmerDatabase};

/// Default memory for buffered intersecting k-mers before retrieval runs.
pub const DEFAULT_INTERSECTION_BUDGET: u64 = 1 << 30;

#[derive(Debug)]
pub struct Step2Output {
    pub intersection: IntersectionSet,
    pub hits: TaxHitTable,
    /// Retrieval rounds triggered by the intersection budget.
    pub retrieval_rounds: usize,
}

/// Intersection followed by retrieval. Whenever the buffered intersecting
/// k-mers exceed `budget_bytes`, retrieval consumes them and intersection
/// continues with the next bucket; the retriever keeps its position between
/// rounds, so the result does not depend on the budget.
pub fn run_step2(set: &QueryKmerSet, db: &SortedKmerDatabase, kss: &KssTables, budget_bytes: u64) -> Result<Step2Output> {
    if set.k() != db.k() {
        return Err(crate::Error::KMismatch { reads: set.k(), db: db.k() });
    }
    let per_round = (budget_bytes / RECORD_BYTES as u64).max(1) as usize;
    let whole = [0..db.len()];
    let stripes = if db.stripes().is_empty() { &whole[..] } else { db.stripes() };
    let mut intersection = IntersectionSet::default();
    let mut retriever = Retriever::new(kss);
    let mut buffered = 0;
    let mut rounds = 0;
    for bucket in set.buckets() {
        let q: Vec<_> = bucket.iter().map(|(k, _)| *k).collect();
        let (found, cmp) = intersect_striped(&q, db.records(), stripes)?;
        let start = intersection.kmers.len();
        intersection.kmers.extend(found);
        intersection.buckets.push(start..intersection.kmers.len());
        intersection.comparisons += cmp;
        while intersection.kmers.len() - buffered >= per_round {
            retriever.push_all(&intersection.kmers[buffered..buffered + per_round])?;
            buffered += per_round;
            rounds += 1;
        }
    }
    if buffered < intersection.kmers.len() {
        retriever.push_all(&intersection.kmers[buffered..])?;
        rounds += 1;
    }
    Ok(Step2Output {
        hits: retriever.finish(),
        intersection,
        retrieval_rounds: rounds,
    })
}
